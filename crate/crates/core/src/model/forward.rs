use rand::Rng;

use super::{activate_vector, Activation, Layer, QuantizedModel};
use crate::error::{Error, Result};
use crate::scalar::{round_to_i64, Real};

/// Normal distribution parameters for one neuron's accumulator noise.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gaussian<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Real> Gaussian<T> {
    pub fn new(mean: T, std: T) -> Self {
        Self { mean, std }
    }

    pub fn is_silent(&self) -> bool {
        self.mean == T::zero() && self.std == T::zero()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if self.std == T::zero() {
            self.mean
        } else {
            self.mean + self.std * T::standard_normal(rng)
        }
    }
}

/// Per-neuron Gaussian noise added to pre-activation accumulators during
/// [`QuantizedModel::forward`]. Noise is expressed in accumulator units of the
/// neuron's own layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec<T> {
    per_layer: Vec<Vec<Gaussian<T>>>,
}

impl<T: Real> NoiseSpec<T> {
    /// Spec that injects nothing.
    pub fn silent(model: &QuantizedModel) -> Self {
        Self {
            per_layer: model
                .layers()
                .iter()
                .map(|l| vec![Gaussian::default(); l.width()])
                .collect(),
        }
    }

    /// Noise on a single neuron.
    pub fn single(model: &QuantizedModel, neuron: usize, noise: Gaussian<T>) -> Result<Self> {
        let mut spec = Self::silent(model);
        spec.set(model, neuron, noise)?;
        Ok(spec)
    }

    pub fn set(&mut self, model: &QuantizedModel, neuron: usize, noise: Gaussian<T>) -> Result<()> {
        let n = model.neuron(neuron).ok_or(Error::InvalidNeuron(neuron))?;
        if !(noise.std >= T::zero()) || !noise.mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise for neuron {neuron}: std must be >= 0 and mean finite"
            )));
        }
        self.per_layer[n.layer][n.index] = noise;
        Ok(())
    }

    pub fn get(&self, layer: usize, index: usize) -> Gaussian<T> {
        self.per_layer[layer][index]
    }

    fn matches(&self, model: &QuantizedModel) -> bool {
        self.per_layer.len() == model.layers().len()
            && self
                .per_layer
                .iter()
                .zip(model.layers())
                .all(|(p, l)| p.len() == l.width())
    }
}

/// Result of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    /// Final-layer values before softmax (after the activation for every
    /// other kind).
    pub outputs: Vec<T>,
    /// Post-activation real outputs of every layer.
    pub layers: Vec<Vec<T>>,
}

impl<T: Real> ForwardOutput<T> {
    /// Outputs expressed in output-layer accumulator units.
    pub fn output_accumulators(&self, model: &QuantizedModel) -> Vec<T> {
        let unit = T::lit(model.output_unit());
        self.outputs.iter().map(|&o| o / unit).collect()
    }

    /// Final probabilities when the last layer is softmax, otherwise the outputs.
    pub fn final_activation(&self) -> &[T] {
        self.layers.last().map_or(&self.outputs[..], |v| &v[..])
    }
}

/// Real pre-activation and post-activation values of a layer from its
/// accumulators (given in accumulator units, possibly with injected error).
pub(crate) fn layer_values<T: Real>(layer: &Layer, acc: &[T]) -> (Vec<T>, Vec<T>) {
    let unit = T::lit(layer.accumulator_unit());
    let pre: Vec<T> = acc.iter().map(|&a| a * unit).collect();
    let post = activate_vector(layer.activation(), &pre);
    (pre, post)
}

/// Quantize a layer's real outputs into the integer activations consumed by
/// the next layer.
pub(crate) fn quantize_for<T: Real>(producer: Activation, next: &Layer, post: &[T]) -> Vec<i32> {
    let scale = T::lit(next.activation_scale());
    let (lo, hi) = producer.quant_range();
    post.iter()
        .map(|&v| round_to_i64(v / scale).clamp(lo as i64, hi as i64) as i32)
        .collect()
}

/// Intermediate integer state of a noiseless pass, reused by incremental
/// re-evaluation.
#[derive(Clone, Debug)]
pub(crate) struct NominalTrace<T> {
    /// Integer input of each layer.
    pub inputs: Vec<Vec<i32>>,
    /// Exact accumulators of each layer.
    pub accs: Vec<Vec<i32>>,
    pub outputs: Vec<T>,
}

impl QuantizedModel {
    fn check_input(&self, input: &[i32]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Evaluate the network on one integer input vector.
    ///
    /// When `noise` is given, each neuron's accumulator receives a sample from
    /// its Gaussian before the activation is applied. With no noise the pass
    /// is a pure function of the input and does not touch `rng`.
    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        input: &[i32],
        noise: Option<&NoiseSpec<T>>,
        rng: &mut R,
    ) -> Result<ForwardOutput<T>> {
        self.check_input(input)?;
        if let Some(spec) = noise {
            if !spec.matches(self) {
                return Err(Error::Dimension("noise spec does not match model".into()));
            }
        }
        Ok(self.propagate(0, input.to_vec(), |l, layer, x| {
            let acc = layer.accumulate(x);
            match noise {
                None => acc.iter().map(|&a| T::from_i32(a).unwrap()).collect(),
                Some(spec) => acc
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| {
                        let g = spec.get(l, j);
                        let base = T::from_i32(a).unwrap();
                        if g.is_silent() {
                            base
                        } else {
                            base + g.sample(rng)
                        }
                    })
                    .collect(),
            }
        }))
    }

    /// Run layers `start..` from the integer input of layer `start`, with a
    /// caller-supplied accumulator stage. Returned `layers` only covers the
    /// evaluated layers.
    pub(crate) fn propagate<T: Real, F>(
        &self,
        start: usize,
        input: Vec<i32>,
        mut accumulate: F,
    ) -> ForwardOutput<T>
    where
        F: FnMut(usize, &Layer, &[i32]) -> Vec<T>,
    {
        let layers = self.layers();
        let mut x = input;
        let mut posts = Vec::with_capacity(layers.len() - start);
        let mut outputs = Vec::new();
        for l in start..layers.len() {
            let layer = &layers[l];
            let acc = accumulate(l, layer, &x);
            let (pre, post) = layer_values(layer, &acc);
            if l + 1 < layers.len() {
                x = quantize_for(layer.activation(), &layers[l + 1], &post);
            } else {
                outputs = if layer.activation() == Activation::Softmax {
                    pre
                } else {
                    post.clone()
                };
            }
            posts.push(post);
        }
        ForwardOutput {
            outputs,
            layers: posts,
        }
    }

    pub(crate) fn nominal_trace<T: Real>(&self, input: &[i32]) -> Result<NominalTrace<T>> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers().len());
        let mut accs = Vec::with_capacity(self.layers().len());
        let out = self.propagate::<T, _>(0, input.to_vec(), |_, layer, x| {
            inputs.push(x.to_vec());
            let acc = layer.accumulate(x);
            let real = acc.iter().map(|&a| T::from_i32(a).unwrap()).collect();
            accs.push(acc);
            real
        });
        Ok(NominalTrace {
            inputs,
            accs,
            outputs: out.outputs,
        })
    }

    /// Outputs when only neuron `(layer, index)` has `delta` added to its
    /// accumulator. Bit-identical to `forward` with a noise spec that injects
    /// exactly `delta` there.
    pub(crate) fn perturbed_outputs<T: Real>(
        &self,
        trace: &NominalTrace<T>,
        layer: usize,
        index: usize,
        delta: T,
    ) -> Vec<T> {
        let acc: Vec<T> = trace.accs[layer]
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let base = T::from_i32(a).unwrap();
                if j == index {
                    base + delta
                } else {
                    base
                }
            })
            .collect();
        let mut first = Some(acc);
        self.propagate(
            layer,
            trace.inputs[layer].clone(),
            |_, lay, x| match first.take() {
                Some(a) => a,
                None => lay
                    .accumulate(x)
                    .iter()
                    .map(|&v| T::from_i32(v).unwrap())
                    .collect(),
            },
        )
        .outputs
    }
}
