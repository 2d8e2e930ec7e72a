//! 8-bit fixed-point feed-forward networks: loading, evaluation, losses and
//! dataset ingestion.
//!
//! Numeric conventions:
//!
//! * weights are signed 8-bit integers with a per-layer `weight_scale`
//!   (real weight = `w * weight_scale`);
//! * every layer consumes integer activations whose real value is
//!   `a * activation_scale` of that layer (for the first layer this scale
//!   absorbs input normalization, e.g. `1/255` for raw pixel bytes);
//! * biases are stored in accumulator units (`weight_scale * activation_scale`);
//! * accumulation is 32-bit signed with saturation.
//!
//! The accumulator of a neuron is the point where voltage-overscaling errors
//! are injected, and the final layer's accumulator unit (see
//! [`QuantizedModel::output_unit`]) is the unit in which output errors are
//! measured.

mod activation;
mod dataset;
mod forward;
mod loss;
pub mod mnist;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use activation::{activate_vector, activation, softmax, Activation};
pub(crate) use dataset::argmax;
pub use dataset::{accuracy, baseline_mse, Dataset, Targets};
pub(crate) use forward::{layer_values, quantize_for, NominalTrace};
pub use forward::{ForwardOutput, Gaussian, NoiseSpec};
pub use loss::{loss, LossKind};

/// One fully connected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    width: usize,
    fan_in: usize,
    weights: Vec<i8>,
    biases: Vec<i32>,
    activation: Activation,
    weight_scale: f64,
    activation_scale: f64,
}

impl Layer {
    /// Build a layer from row-major `[out][in]` weights, validating ranges.
    pub fn new(
        weights: Vec<Vec<i64>>,
        biases: Vec<i64>,
        activation: Activation,
        weight_scale: f64,
        activation_scale: f64,
    ) -> Result<Self> {
        let width = weights.len();
        if width == 0 {
            return Err(Error::Dimension("layer has no neurons".into()));
        }
        let fan_in = weights[0].len();
        if fan_in == 0 {
            return Err(Error::Dimension("layer has zero fan-in".into()));
        }
        if biases.len() != width {
            return Err(Error::Dimension(format!(
                "{} biases for {} neurons",
                biases.len(),
                width
            )));
        }
        if !(weight_scale > 0.0 && weight_scale.is_finite()) {
            return Err(Error::Range(format!(
                "weight_scale {weight_scale} must be > 0"
            )));
        }
        if !(activation_scale > 0.0 && activation_scale.is_finite()) {
            return Err(Error::Range(format!(
                "activation_scale {activation_scale} must be > 0"
            )));
        }
        let mut flat = Vec::with_capacity(width * fan_in);
        for (j, row) in weights.iter().enumerate() {
            if row.len() != fan_in {
                return Err(Error::Dimension(format!(
                    "weight row {j} has {} entries, expected {fan_in}",
                    row.len()
                )));
            }
            for (i, &w) in row.iter().enumerate() {
                let w = i8::try_from(w).map_err(|_| {
                    Error::Range(format!("weight [{j}][{i}] = {w} outside [-128, 127]"))
                })?;
                flat.push(w);
            }
        }
        let biases = biases
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                i32::try_from(b)
                    .map_err(|_| Error::Range(format!("bias [{j}] = {b} exceeds 32-bit range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            fan_in,
            weights: flat,
            biases,
            activation,
            weight_scale,
            activation_scale,
        })
    }

    /// Number of neurons (output width).
    pub fn width(&self) -> usize {
        self.width
    }

    /// Inputs per neuron, i.e. the number of PEs in the neuron's column.
    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight_scale(&self) -> f64 {
        self.weight_scale
    }

    pub fn activation_scale(&self) -> f64 {
        self.activation_scale
    }

    /// Real value of one accumulator unit.
    pub fn accumulator_unit(&self) -> f64 {
        self.weight_scale * self.activation_scale
    }

    pub fn weight(&self, neuron: usize, input: usize) -> i8 {
        self.weights[neuron * self.fan_in + input]
    }

    /// Weights of one neuron (one systolic column).
    pub fn row(&self, neuron: usize) -> &[i8] {
        &self.weights[neuron * self.fan_in..(neuron + 1) * self.fan_in]
    }

    pub fn biases(&self) -> &[i32] {
        &self.biases
    }

    /// Exact saturating integer accumulation `b_j + sum_i w_ji * a_i`.
    pub fn accumulate(&self, input: &[i32]) -> Vec<i32> {
        debug_assert_eq!(input.len(), self.fan_in);
        (0..self.width)
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(input)
                    .fold(self.biases[j], |acc, (&w, &a)| {
                        acc.saturating_add((w as i32).saturating_mul(a))
                    })
            })
            .collect()
    }

    pub(crate) fn scaled_copy(&self, weights: Vec<i8>) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }
}

/// Location of one neuron inside a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeuronRef {
    /// Global id: neurons are numbered layer by layer starting at 0.
    pub id: usize,
    pub layer: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel {
    input_size: usize,
    layers: Vec<Layer>,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    activation: String,
    weight_scale: f64,
    activation_scale: f64,
    biases: Vec<i64>,
    weights: Vec<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    input_size: usize,
    layers: Vec<RawLayer>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

impl QuantizedModel {
    pub fn new(input_size: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::Dimension("input_size must be >= 1".into()));
        }
        if layers.is_empty() {
            return Err(Error::Dimension("model has no layers".into()));
        }
        let mut expected = input_size;
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in != expected {
                return Err(Error::Dimension(format!(
                    "layer {l} expects {} inputs but receives {expected}",
                    layer.fan_in
                )));
            }
            if layer.activation == Activation::Softmax && l + 1 != layers.len() {
                return Err(Error::InvalidParameter(format!(
                    "softmax is only supported on the last layer (found on layer {l})"
                )));
            }
            expected = layer.width;
        }
        Ok(Self {
            input_size,
            layers,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, rl)| {
                let act = rl
                    .activation
                    .parse::<Activation>()
                    .map_err(|e| Error::Parse(format!("layer {l}: {e}")))?;
                Layer::new(
                    rl.weights,
                    rl.biases,
                    act,
                    rl.weight_scale,
                    rl.activation_scale,
                )
                .map_err(|e| match e {
                    Error::Range(m) => Error::Range(format!("layer {l}: {m}")),
                    Error::Dimension(m) => Error::Dimension(format!("layer {l}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(raw.input_size, layers)?.with_metadata(raw.metadata))
    }

    /// Load and validate a model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawModel {
            input_size: self.input_size,
            metadata: self.metadata.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| RawLayer {
                    activation: l.activation.name().to_string(),
                    weight_scale: l.weight_scale,
                    activation_scale: l.activation_scale,
                    biases: l.biases.iter().map(|&b| b as i64).collect(),
                    weights: (0..l.width)
                        .map(|j| l.row(j).iter().map(|&w| w as i64).collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("model serializes")
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::width).sum()
    }

    /// All neurons in global-id order.
    pub fn neurons(&self) -> impl Iterator<Item = NeuronRef> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| (0..layer.width).map(move |i| (l, i)))
            .enumerate()
            .map(|(id, (layer, index))| NeuronRef { id, layer, index })
    }

    pub fn neuron(&self, id: usize) -> Option<NeuronRef> {
        let mut base = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            if id < base + layer.width {
                return Some(NeuronRef {
                    id,
                    layer: l,
                    index: id - base,
                });
            }
            base += layer.width;
        }
        None
    }

    /// Global id of the first neuron of layer `l`.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layers[..l].iter().map(Layer::width).sum()
    }

    pub fn fan_in(&self, id: usize) -> Option<usize> {
        self.neuron(id).map(|n| self.layers[n.layer].fan_in)
    }

    /// Real value of one accumulator unit of the output layer. Output errors,
    /// sensitivities and MSE budgets are expressed in this unit so that an
    /// error injected into an output neuron has gain 1.
    pub fn output_unit(&self) -> f64 {
        self.layers.last().map_or(1.0, Layer::accumulator_unit)
    }

    /// Copy of the model with every weight of layer `l` replaced.
    pub fn with_layer_weights(&self, l: usize, weights: Vec<i8>) -> Result<Self> {
        let layer = &self.layers[l];
        if weights.len() != layer.weights.len() {
            return Err(Error::Dimension("replacement weight count".into()));
        }
        let mut out = self.clone();
        out.layers[l] = layer.scaled_copy(weights);
        Ok(out)
    }
}
