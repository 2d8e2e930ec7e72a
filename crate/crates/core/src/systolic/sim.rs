use rand::Rng;

use super::cycles::tile_cycles;
use super::memory::LayerMemory;
use crate::error::{Error, Result};
use crate::error_model::{ErrorModelTable, PeSampler};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct MmOutput {
    /// `[batch][column]` accumulator values.
    pub outputs: Vec<Vec<i32>>,
    pub cycles: u64,
}

#[inline]
fn saturate(x: i64) -> i64 {
    x.clamp(i64::from(i32::MIN), i64::from(i32::MAX))
}

/// Cycles for `batch` vectors through every tile of a layer.
pub fn layer_cycles(mem: &LayerMemory, batch: usize) -> Result<u64> {
    mem.tiles()
        .map(|(_, rows)| tile_cycles(mem.array_n(), rows.len(), batch))
        .sum()
}

/// Weight-stationary matrix product with multiplier errors.
///
/// For every activation vector and column, each MAC adds `W·A + e` to the
/// column's 32-bit saturating accumulator, with `e` an independent draw for
/// the column's voltage level. Tiles are processed column block by row block
/// and partial sums carry across row blocks.
pub fn simulate_mm<T: Real, R: Rng + ?Sized>(
    mem: &LayerMemory,
    activations: &[Vec<i32>],
    table: &ErrorModelTable<T>,
    rng: &mut R,
) -> Result<MmOutput> {
    let samplers = (0..mem.cols())
        .map(|c| table.sampler(mem.code(c)))
        .collect::<Result<Vec<PeSampler<T>>>>()?;
    let weights: Vec<Vec<i64>> = (0..mem.cols())
        .map(|c| mem.column_weights(c).map(i64::from).collect())
        .collect();
    let tiles: Vec<_> = mem.tiles().collect();
    let mut outputs = Vec::with_capacity(activations.len());
    for a in activations {
        if a.len() != mem.rows() {
            return Err(Error::Dimension(format!(
                "activation vector of {} values for columns of height {}",
                a.len(),
                mem.rows()
            )));
        }
        let mut acc = vec![0i64; mem.cols()];
        for (cols, rows) in &tiles {
            for c in cols.clone() {
                let s = &samplers[c];
                let w = &weights[c];
                let mut sum = acc[c];
                if s.is_exact() {
                    for r in rows.clone() {
                        sum = saturate(sum + w[r] * i64::from(a[r]));
                    }
                } else {
                    for r in rows.clone() {
                        sum = saturate(sum + w[r] * i64::from(a[r]) + s.sample(rng));
                    }
                }
                acc[c] = sum;
            }
        }
        outputs.push(acc.into_iter().map(|x| x as i32).collect());
    }
    Ok(MmOutput {
        outputs,
        cycles: layer_cycles(mem, activations.len())?,
    })
}
