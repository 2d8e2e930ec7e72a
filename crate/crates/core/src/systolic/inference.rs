use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{encode_weight_memory, v_bits_for};
use super::sim::{layer_cycles, simulate_mm};
use crate::error::{Error, Result};
use crate::error_model::ErrorModelTable;
use crate::model::{
    argmax, layer_values, quantize_for, Activation, Dataset, Gaussian, NoiseSpec, QuantizedModel,
};
use crate::optimizer::{energy_report, EnergyParams, VoltageAssignment};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Every MAC goes through the encoded weight memory with its own error draw.
    #[default]
    Systolic,
    /// One Gaussian per neuron accumulator with the column statistics.
    Statistical,
}

impl FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "systolic" => Ok(SimMode::Systolic),
            "statistical" => Ok(SimMode::Statistical),
            other => Err(format!("unknown simulation mode '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig<T> {
    pub array_n: usize,
    pub mode: SimMode,
    pub energy: EnergyParams<T>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation<T> {
    pub flag: bool,
    /// `max(0, mse / budget - 1)`.
    pub relative: T,
}

impl<T: Real> Violation<T> {
    pub fn of(mse: T, budget: T) -> Self {
        let relative = if mse <= budget {
            T::zero()
        } else if budget > T::zero() {
            mse / budget - T::one()
        } else {
            T::infinity()
        };
        Self {
            flag: mse > budget,
            relative,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport<T> {
    pub mode: SimMode,
    pub seed: u64,
    pub samples: usize,
    /// Summed per-output error variance in output accumulator units.
    pub mse: T,
    pub predicted_mse: T,
    pub budget: T,
    pub violation: Violation<T>,
    pub accuracy: Option<T>,
    pub baseline_accuracy: Option<T>,
    pub accuracy_drop: Option<T>,
    pub energy_saving: T,
    pub cycles: u64,
}

/// Bessel-corrected output error variance: `Σ d² / (n - 1)` over samples,
/// summed over output columns, where `d = erroneous - reference`.
pub fn output_error_variance<T: Real>(reference: &[Vec<T>], erroneous: &[Vec<T>]) -> Result<T> {
    if reference.len() != erroneous.len() {
        return Err(Error::Dimension(format!(
            "{} reference rows vs {} erroneous rows",
            reference.len(),
            erroneous.len()
        )));
    }
    if reference.len() < 2 {
        return Err(Error::InvalidParameter(
            "output variance needs at least 2 samples".into(),
        ));
    }
    let mut sum = T::zero();
    for (r, e) in reference.iter().zip(erroneous) {
        if r.len() != e.len() {
            return Err(Error::Dimension("ragged output rows".into()));
        }
        for (&a, &b) in r.iter().zip(e) {
            let d = b - a;
            sum += d * d;
        }
    }
    Ok(sum / T::from_count(reference.len() - 1))
}

/// Cycles to run `batch` inputs through every layer of `model`.
pub fn inference_cycles(model: &QuantizedModel, array_n: usize, batch: usize) -> Result<u64> {
    let mut total = 0;
    for layer in model.layers() {
        let shape = super::memory::LayerMemory::new(
            array_n,
            0,
            layer.fan_in(),
            layer.width(),
            vec![0; layer.fan_in() * layer.width()],
        )?;
        total += layer_cycles(&shape, batch)?;
    }
    Ok(total)
}

fn final_outputs<T: Real>(model: &QuantizedModel, pre: Vec<T>, post: Vec<T>) -> Vec<T> {
    let last = model.layers().last().expect("model has layers");
    if last.activation() == Activation::Softmax {
        pre
    } else {
        post
    }
}

fn run_systolic<T: Real>(
    model: &QuantizedModel,
    assignment: &VoltageAssignment<T>,
    data: &Dataset,
    table: &ErrorModelTable<T>,
    array_n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<T>>, u64)> {
    let mem = encode_weight_memory(model, assignment, array_n, v_bits_for(table.level_count()))?;
    let mut x: Vec<Vec<i32>> = (0..data.len()).map(|i| data.input(i).to_vec()).collect();
    let mut outputs = Vec::new();
    let mut cycles = 0;
    let layers = model.layers();
    for (l, layer) in layers.iter().enumerate() {
        let mm = simulate_mm(mem.layer(l), &x, table, rng)?;
        cycles += mm.cycles;
        let mut next = Vec::with_capacity(x.len());
        for acc in mm.outputs {
            let acc: Vec<T> = acc
                .iter()
                .zip(layer.biases())
                .map(|(&a, &b)| T::from_i32(a.saturating_add(b)).expect("i32 fits"))
                .collect();
            let (pre, post) = layer_values(layer, &acc);
            if l + 1 < layers.len() {
                next.push(quantize_for(layer.activation(), &layers[l + 1], &post));
            } else {
                outputs.push(final_outputs(model, pre, post));
            }
        }
        x = next;
    }
    Ok((outputs, cycles))
}

fn run_statistical<T: Real>(
    model: &QuantizedModel,
    assignment: &VoltageAssignment<T>,
    data: &Dataset,
    table: &ErrorModelTable<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<T>>> {
    let mut spec = NoiseSpec::silent(model);
    for (&id, &code) in assignment.neuron_ids.iter().zip(&assignment.codes) {
        let k = model.fan_in(id).ok_or(Error::InvalidNeuron(id))? as u64;
        let (mean, var) = table.column_error_stats(code, k)?;
        spec.set(model, id, Gaussian::new(mean, var.sqrt()))?;
    }
    (0..data.len())
        .map(|i| {
            model
                .forward(data.input(i), Some(&spec), rng)
                .map(|o| o.outputs)
        })
        .collect()
}

/// Run `data` through the model under `assignment` and compare with the
/// nominal (error-free) outputs.
pub fn simulate_inference<T: Real>(
    model: &QuantizedModel,
    assignment: &VoltageAssignment<T>,
    data: &Dataset,
    table: &ErrorModelTable<T>,
    config: &SimConfig<T>,
) -> Result<SimulationReport<T>> {
    if assignment.len() != model.neuron_count() {
        return Err(Error::Dimension(format!(
            "assignment covers {} of {} neurons",
            assignment.len(),
            model.neuron_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = T::lit(model.output_unit());
    let to_acc = |rows: Vec<Vec<T>>| -> Vec<Vec<T>> {
        rows.into_iter()
            .map(|r| r.into_iter().map(|v| v / unit).collect())
            .collect()
    };
    let reference: Vec<Vec<T>> = (0..data.len())
        .map(|i| model.nominal_trace::<T>(data.input(i)).map(|t| t.outputs))
        .collect::<Result<_>>()?;
    let (noisy, cycles) = match config.mode {
        SimMode::Systolic => {
            run_systolic(model, assignment, data, table, config.array_n, &mut rng)?
        }
        SimMode::Statistical => (
            run_statistical(model, assignment, data, table, &mut rng)?,
            inference_cycles(model, config.array_n, data.len())?,
        ),
    };
    let accuracy_of = |rows: &[Vec<T>]| -> Option<T> {
        let hits = (0..data.len())
            .filter(|&i| data.label(i) == Some(argmax(&rows[i])))
            .count();
        data.is_classification()
            .then(|| T::from_count(hits) / T::from_count(data.len()))
    };
    let accuracy = accuracy_of(&noisy);
    let baseline_accuracy = accuracy_of(&reference);
    let mse = output_error_variance(&to_acc(reference), &to_acc(noisy))?;
    let energy = energy_report(assignment, model, &config.energy)?;
    Ok(SimulationReport {
        mode: config.mode,
        seed: config.seed,
        samples: data.len(),
        mse,
        predicted_mse: assignment.predicted_mse,
        budget: assignment.budget,
        violation: Violation::of(mse, assignment.budget),
        accuracy_drop: accuracy.zip(baseline_accuracy).map(|(a, b)| b - a),
        accuracy,
        baseline_accuracy,
        energy_saving: energy.saving,
        cycles,
    })
}
