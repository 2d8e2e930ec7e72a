use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CycleCount {
    pub first_result: u64,
    pub complete: u64,
}

/// Latency of one vector of `vector_n` elements through a weight-stationary
/// array: first result after `n` cycles and the full product after `2n`, or
/// `2n` and `3n` when the weight prefetch phase is counted.
pub fn cycle_count(array_n: usize, vector_n: usize, include_prefetch: bool) -> Result<CycleCount> {
    if vector_n == 0 || vector_n > array_n {
        return Err(Error::InvalidParameter(format!(
            "vector length {vector_n} must be in 1..={array_n}"
        )));
    }
    let n = vector_n as u64;
    Ok(if include_prefetch {
        CycleCount {
            first_result: 2 * n,
            complete: 3 * n,
        }
    } else {
        CycleCount {
            first_result: n,
            complete: 2 * n,
        }
    })
}

/// Cycles to stream `batch` vectors through one tile with `rows` weights
/// per column: the prefetched latency of the first vector plus one cycle per
/// further vector.
pub fn tile_cycles(array_n: usize, rows: usize, batch: usize) -> Result<u64> {
    let c = cycle_count(array_n, rows, true)?;
    Ok(c.complete + batch.saturating_sub(1) as u64)
}
