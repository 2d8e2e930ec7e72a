//! Error sensitivity (ES) of the network outputs to a neuron's accumulator.
//!
//! `ES[n][o]` is the output-`o` deviation per unit error injected at neuron
//! `n`, with the error measured in accumulator units of `n`'s layer and the
//! deviation in accumulator units of the output layer. An output neuron
//! therefore has `ES[o][o] = 1`. The scalar ES of a neuron is the L2 norm of
//! its row.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, Dataset, NeuronRef, QuantizedModel};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
    /// Analytic where the path is linearizable, Monte-Carlo elsewhere.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityParams<T> {
    /// Noise draws per neuron for Monte-Carlo estimates.
    pub samples: usize,
    /// Size of the deterministic calibration slice taken from the dataset.
    pub calibration_size: usize,
    /// Single-PE error std; a neuron with fan-in `k` is injected with
    /// `pe_std * sqrt(k)`, the std of its column error.
    pub pe_std: T,
    /// Treat relu as a fixed gain of 0.5 in analytic mode instead of refusing it.
    pub relu_expected_gain: bool,
    pub seed: u64,
}

impl<T: Real> Default for SensitivityParams<T> {
    fn default() -> Self {
        Self {
            samples: 10_000,
            calibration_size: 256,
            pe_std: T::one(),
            relu_expected_gain: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMap<T> {
    pub neurons: Vec<NeuronRef>,
    pub fan_in: Vec<usize>,
    /// `[neuron][output]` magnitudes.
    pub es: Vec<Vec<T>>,
    /// Method actually used per neuron (never `Auto`).
    pub method: Vec<Method>,
    pub mc_samples: Option<usize>,
}

impl<T: Real> SensitivityMap<T> {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// L2 norm of neuron `n`'s ES across outputs.
    pub fn scalar(&self, n: usize) -> T {
        self.squared_sum(n).sqrt()
    }

    /// `Σ_o ES[n][o]²`.
    pub fn squared_sum(&self, n: usize) -> T {
        self.es[n].iter().map(|&e| e * e).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let outputs = self.es.first().map_or(0, Vec::len);
        let mut header: Vec<String> = ["neuron_id", "layer", "index", "k_n", "es_l2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..outputs).map(|o| format!("es_o{o}")));
        w.write_record(&header)?;
        for (n, nr) in self.neurons.iter().enumerate() {
            let mut rec = vec![
                nr.id.to_string(),
                nr.layer.to_string(),
                nr.index.to_string(),
                self.fan_in[n].to_string(),
                self.scalar(n).to_string(),
            ];
            rec.extend(self.es[n].iter().map(|e| e.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn path_gain<T: Real>(kind: Activation, relu_expected_gain: bool, neuron: usize) -> Result<T> {
    match kind {
        Activation::Linear | Activation::Softmax => Ok(T::one()),
        Activation::Relu if relu_expected_gain => Ok(T::lit(0.5)),
        other => Err(Error::NonLinearPath {
            neuron,
            activation: other.name().to_string(),
        }),
    }
}

/// Linearized ES: a unit perturbation of the neuron's accumulator pushed
/// through the downstream weights. A softmax output layer is linear here
/// because outputs are taken before the softmax.
pub fn error_sensitivity_analytic<T: Real>(
    model: &QuantizedModel,
    neuron: usize,
    relu_expected_gain: bool,
) -> Result<Vec<T>> {
    let nr = model.neuron(neuron).ok_or(Error::InvalidNeuron(neuron))?;
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut gain = vec![T::zero(); layers[nr.layer].width()];
    gain[nr.index] = T::one();
    for l in nr.layer..last {
        let layer = &layers[l];
        let g = path_gain::<T>(layer.activation(), relu_expected_gain, neuron)?;
        let next = &layers[l + 1];
        let to_input = g * T::lit(layer.accumulator_unit() / next.activation_scale());
        gain = (0..next.width())
            .map(|j| {
                next.row(j)
                    .iter()
                    .zip(&gain)
                    .map(|(&w, &d)| T::lit(f64::from(w)) * d)
                    .sum::<T>()
                    * to_input
            })
            .collect();
    }
    if layers[last].activation() != Activation::Softmax {
        let g = path_gain::<T>(layers[last].activation(), relu_expected_gain, neuron)?;
        gain.iter_mut().for_each(|x| *x *= g);
    }
    Ok(gain.into_iter().map(|x| x.abs()).collect())
}

/// Noiseless per-sample state shared by all Monte-Carlo estimates.
pub struct McContext<T> {
    traces: Vec<crate::model::NominalTrace<T>>,
    unit: T,
}

impl<T: Real> McContext<T> {
    pub fn new(model: &QuantizedModel, data: &Dataset) -> Result<Self> {
        let traces = (0..data.len())
            .map(|i| model.nominal_trace(data.input(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            traces,
            unit: T::lit(model.output_unit()),
        })
    }
}

fn mc_estimate<T: Real, R: Rng + ?Sized>(
    model: &QuantizedModel,
    ctx: &McContext<T>,
    neuron: usize,
    injected_std: T,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    let nr = model.neuron(neuron).ok_or(Error::InvalidNeuron(neuron))?;
    if !(injected_std > T::zero()) || !injected_std.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "injected std must be positive, got {injected_std}"
        )));
    }
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo ES needs at least 100 samples, got {samples}"
        )));
    }
    if ctx.traces.is_empty() {
        return Err(Error::InvalidParameter("empty calibration data".into()));
    }
    let mut sq = vec![T::zero(); model.output_width()];
    for s in 0..samples {
        let trace = &ctx.traces[s % ctx.traces.len()];
        let delta = injected_std * T::standard_normal(rng);
        let out = model.perturbed_outputs(trace, nr.layer, nr.index, delta);
        for ((acc, &o), &base) in sq.iter_mut().zip(&out).zip(&trace.outputs) {
            let d = (o - base) / ctx.unit;
            *acc += d * d;
        }
    }
    let n = T::from_count(samples);
    Ok(sq
        .into_iter()
        .map(|s| (s / n).sqrt() / injected_std)
        .collect())
}

/// Monte-Carlo ES: RMS output deviation per unit injected std, with Gaussian
/// noise injected at the neuron's accumulator on samples cycled over `data`.
pub fn error_sensitivity_mc<T: Real, R: Rng + ?Sized>(
    model: &QuantizedModel,
    data: &Dataset,
    neuron: usize,
    injected_std: T,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    model.neuron(neuron).ok_or(Error::InvalidNeuron(neuron))?;
    let ctx = McContext::new(model, data)?;
    mc_estimate(model, &ctx, neuron, injected_std, samples, rng)
}

/// Generator for work item `stream` derived from a master seed.
pub fn split_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// ES of every neuron. `data` is required whenever Monte-Carlo is used; only
/// a calibration slice of it is evaluated. Neurons are processed in
/// parallel, each with its own generator split from `params.seed`.
pub fn sensitivity_map<T: Real>(
    model: &QuantizedModel,
    data: Option<&Dataset>,
    method: Method,
    params: &SensitivityParams<T>,
) -> Result<SensitivityMap<T>> {
    let neurons: Vec<NeuronRef> = model.neurons().collect();
    let analytic: Vec<Option<Result<Vec<T>>>> = neurons
        .iter()
        .map(|n| match method {
            Method::MonteCarlo => None,
            Method::Analytic => Some(error_sensitivity_analytic(
                model,
                n.id,
                params.relu_expected_gain,
            )),
            Method::Auto => {
                match error_sensitivity_analytic(model, n.id, params.relu_expected_gain) {
                    Err(Error::NonLinearPath { .. }) => None,
                    r => Some(r),
                }
            }
        })
        .collect();
    let needs_mc = analytic.iter().any(Option::is_none);
    let ctx = if needs_mc {
        let data = data.ok_or_else(|| {
            Error::InvalidParameter("Monte-Carlo sensitivity requires a dataset".into())
        })?;
        Some(McContext::new(
            model,
            &data.calibration_slice(params.calibration_size),
        )?)
    } else {
        None
    };
    let rows: Vec<(Vec<T>, Method)> = neurons
        .par_iter()
        .zip(analytic)
        .map(|(n, a)| match a {
            Some(r) => r.map(|es| (es, Method::Analytic)),
            None => {
                let ctx = ctx.as_ref().expect("context built when MC is needed");
                let std = params.pe_std * T::from_count(model.fan_in(n.id).unwrap_or(1)).sqrt();
                let mut rng = split_rng(params.seed, n.id as u64);
                mc_estimate(model, ctx, n.id, std, params.samples, &mut rng)
                    .map(|es| (es, Method::MonteCarlo))
            }
        })
        .collect::<Result<_>>()?;
    let (es, used): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(SensitivityMap {
        fan_in: neurons
            .iter()
            .map(|n| model.fan_in(n.id).unwrap_or(0))
            .collect(),
        neurons,
        es,
        method: used,
        mc_samples: needs_mc.then_some(params.samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, Targets};

    fn two_layer(out_w: Vec<i64>) -> QuantizedModel {
        let h = Layer::new(
            vec![vec![1, 1], vec![2, -1]],
            vec![0, 0],
            Activation::Linear,
            1.0,
            1.0,
        )
        .unwrap();
        let o = Layer::new(vec![out_w], vec![0], Activation::Linear, 1.0, 1.0).unwrap();
        QuantizedModel::new(2, vec![h, o]).unwrap()
    }

    fn data() -> Dataset {
        Dataset::new(2, vec![3, 4, 10, 2, 0, 7], Targets::Classes(vec![0, 0, 0])).unwrap()
    }

    #[test]
    fn single_path_gain_is_weight_magnitude() {
        let m = two_layer(vec![-3, 5]);
        assert_eq!(
            error_sensitivity_analytic::<f64>(&m, 0, false).unwrap(),
            vec![3.0]
        );
        assert_eq!(
            error_sensitivity_analytic::<f64>(&m, 1, false).unwrap(),
            vec![5.0]
        );
        assert_eq!(
            error_sensitivity_analytic::<f64>(&m, 2, false).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn zero_outgoing_weights_give_zero_es() {
        let m = two_layer(vec![0, 5]);
        let mut rng = split_rng(1, 0);
        let es = error_sensitivity_mc::<f64, _>(&m, &data(), 0, 50.0, 1000, &mut rng).unwrap();
        assert_eq!(es, vec![0.0]);
    }

    #[test]
    fn output_neuron_mc_is_one() {
        let m = two_layer(vec![1, 1]);
        let mut rng = split_rng(2, 0);
        let es = error_sensitivity_mc::<f64, _>(&m, &data(), 2, 10.0, 20_000, &mut rng).unwrap();
        assert!((es[0] - 1.0).abs() < 0.02, "{es:?}");
    }

    #[test]
    fn nonlinear_path_is_refused() {
        let h = Layer::new(vec![vec![1]], vec![0], Activation::Sigmoid, 1.0, 1.0).unwrap();
        let o = Layer::new(vec![vec![1]], vec![0], Activation::Linear, 1.0, 1.0).unwrap();
        let m = QuantizedModel::new(1, vec![h, o]).unwrap();
        assert!(matches!(
            error_sensitivity_analytic::<f64>(&m, 0, false),
            Err(Error::NonLinearPath { neuron: 0, .. })
        ));
        let params = SensitivityParams::<f64> {
            samples: 200,
            pe_std: 1.0,
            ..Default::default()
        };
        let d = Dataset::new(1, vec![1, 2], Targets::Classes(vec![0, 0])).unwrap();
        let map = sensitivity_map(&m, Some(&d), Method::Auto, &params).unwrap();
        assert_eq!(map.method, vec![Method::MonteCarlo, Method::Analytic]);
        assert!(sensitivity_map(&m, None, Method::Auto, &params).is_err());
    }

    #[test]
    fn relu_expected_gain_halves() {
        let h = Layer::new(vec![vec![1]], vec![0], Activation::Relu, 1.0, 1.0).unwrap();
        let o = Layer::new(vec![vec![4]], vec![0], Activation::Linear, 1.0, 1.0).unwrap();
        let m = QuantizedModel::new(1, vec![h, o]).unwrap();
        assert!(error_sensitivity_analytic::<f64>(&m, 0, false).is_err());
        assert_eq!(
            error_sensitivity_analytic::<f64>(&m, 0, true).unwrap(),
            vec![2.0]
        );
    }

    #[test]
    fn identity_map_and_csv() {
        let m = QuantizedModel::from_json_str(&crate::model::tests::identity_json(3)).unwrap();
        let map = sensitivity_map::<f64>(&m, None, Method::Analytic, &Default::default()).unwrap();
        for (i, row) in map.es.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .starts_with("neuron_id,layer,index,k_n,es_l2,es_o0,es_o1,es_o2\n0,0,0,3,1,1,0,0\n"));
    }

    #[test]
    fn invalid_neuron() {
        let m = two_layer(vec![1, 1]);
        assert!(matches!(
            error_sensitivity_analytic::<f64>(&m, 9, false),
            Err(Error::InvalidNeuron(9))
        ));
    }
}
