use rand::Rng;

use super::{NoiseSpec, QuantizedModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Class index per sample.
    Classes(Vec<usize>),
    /// Real target vector per sample.
    Regression(Vec<Vec<f64>>),
}

/// Integer input matrix `[N x input_size]` with targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    input_size: usize,
    inputs: Vec<i32>,
    targets: Targets,
}

impl Dataset {
    pub fn new(input_size: usize, inputs: Vec<i32>, targets: Targets) -> Result<Self> {
        if input_size == 0 || !inputs.len().is_multiple_of(input_size) {
            return Err(Error::Dimension(format!(
                "{} input values do not form rows of {input_size}",
                inputs.len()
            )));
        }
        let n = inputs.len() / input_size;
        if n == 0 {
            return Err(Error::Dimension("dataset needs at least one sample".into()));
        }
        let target_count = match &targets {
            Targets::Classes(c) => c.len(),
            Targets::Regression(r) => r.len(),
        };
        if target_count != n {
            return Err(Error::CountMismatch {
                images: n,
                labels: target_count,
            });
        }
        if let Some(v) = inputs.iter().find(|&&v| !(-128..=255).contains(&v)) {
            return Err(Error::Range(format!(
                "input value {v} outside the 8-bit activation range"
            )));
        }
        Ok(Self {
            input_size,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_size
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn input(&self, i: usize) -> &[i32] {
        &self.inputs[i * self.input_size..(i + 1) * self.input_size]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classes(_))
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        match &self.targets {
            Targets::Classes(c) => Some(c[i]),
            Targets::Regression(_) => None,
        }
    }

    /// Target vector of sample `i` (one-hot for classification).
    pub fn target_vector<T: Real>(&self, i: usize, width: usize) -> Vec<T> {
        match &self.targets {
            Targets::Classes(c) => (0..width)
                .map(|k| if k == c[i] { T::one() } else { T::zero() })
                .collect(),
            Targets::Regression(r) => r[i].iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// Deterministic subset of at most `n` samples, evenly strided over the set.
    pub fn calibration_slice(&self, n: usize) -> Dataset {
        let total = self.len();
        if n >= total {
            return self.clone();
        }
        let n = n.max(1);
        let idx: Vec<usize> = (0..n).map(|k| k * total / n).collect();
        self.subset(&idx)
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.clamp(1, self.len())).collect();
        self.subset(&idx)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let inputs = idx
            .iter()
            .flat_map(|&i| self.input(i).iter().copied())
            .collect();
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Regression(r) => {
                Targets::Regression(idx.iter().map(|&i| r[i].clone()).collect())
            }
        };
        Dataset {
            input_size: self.input_size,
            inputs,
            targets,
        }
    }
}

pub(crate) fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose arg-max output equals the label.
pub fn accuracy<T: Real, R: Rng + ?Sized>(
    model: &QuantizedModel,
    data: &Dataset,
    noise: Option<&NoiseSpec<T>>,
    rng: &mut R,
) -> Result<T> {
    let Targets::Classes(labels) = data.targets() else {
        return Err(Error::UnsupportedMetric(
            "accuracy requires a classification dataset".into(),
        ));
    };
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let out = model.forward(data.input(i), noise, rng)?;
        if argmax(&out.outputs) == label {
            hits += 1;
        }
    }
    Ok(T::from_count(hits) / T::from_count(labels.len()))
}

/// Nominal output error: mean over samples of `Σ_o (t_o - o_o)²`, with the
/// pre-softmax outputs and targets expressed in output-layer accumulator units.
/// Classification labels become one-hot targets.
pub fn baseline_mse<T: Real>(model: &QuantizedModel, data: &Dataset) -> Result<T> {
    let width = model.output_width();
    if let Targets::Regression(r) = data.targets() {
        if let Some(bad) = r.iter().find(|t| t.len() != width) {
            return Err(Error::Dimension(format!(
                "target of length {} for {width} outputs",
                bad.len()
            )));
        }
    }
    let unit = T::lit(model.output_unit());
    let mut total = T::zero();
    for i in 0..data.len() {
        let out = model.nominal_trace::<T>(data.input(i))?.outputs;
        let t = data.target_vector::<T>(i, width);
        total += out
            .iter()
            .zip(&t)
            .map(|(&o, &t)| {
                let d = (t - o) / unit;
                d * d
            })
            .sum::<T>();
    }
    Ok(total / T::from_count(data.len()))
}
