#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vosa_core::systolic::{encode_word, LayerMemory};
use vosa_core::{
    load_mnist_idx, Activation, Dataset, ErrorModelTable, Layer, QuantizedModel, Targets,
};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference")
}

pub fn reference_model() -> QuantizedModel {
    QuantizedModel::load(data_dir().join("fc_784_128_10.json")).unwrap()
}

pub fn reference_data() -> Dataset {
    let d = data_dir();
    load_mnist_idx(
        d.join("t10k-subset-images-idx3-ubyte.gz"),
        d.join("t10k-subset-labels-idx1-ubyte.gz"),
    )
    .unwrap()
}

pub fn fitted_table() -> ErrorModelTable {
    ErrorModelTable::bundled()
        .unwrap()
        .fit_linear_scaling()
        .unwrap()
}

/// Unsigned 8-bit inputs for a classification set with `classes` labels.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, size: usize, classes: usize) -> Dataset {
    let inputs = (0..n * size).map(|_| rng.random_range(0..=255)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(size, inputs, Targets::Classes(labels)).unwrap()
}

/// Linear network with the given widths. Each hidden scale is chosen from
/// the accumulator range on `data` so hidden activations span about `+-span`
/// quanta.
pub fn random_linear_model(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
    data: &Dataset,
    span: f64,
) -> QuantizedModel {
    let mut layers = Vec::new();
    let mut scale_in = 1.0 / 255.0;
    let mut x: Vec<Vec<i64>> = (0..data.len())
        .map(|i| data.input(i).iter().map(|&v| i64::from(v)).collect())
        .collect();
    for w in widths.windows(2) {
        let (fan_in, width) = (w[0], w[1]);
        let weights: Vec<Vec<i64>> = (0..width)
            .map(|_| (0..fan_in).map(|_| rng.random_range(-40..=40)).collect())
            .collect();
        let biases: Vec<i64> = (0..width).map(|_| rng.random_range(-500..=500)).collect();
        let ws = 0.01;
        let acc: Vec<Vec<i64>> = x
            .iter()
            .map(|xi| {
                weights
                    .iter()
                    .zip(&biases)
                    .map(|(row, b)| row.iter().zip(xi).map(|(a, b)| a * b).sum::<i64>() + b)
                    .collect()
            })
            .collect();
        let max = acc.iter().flatten().map(|a| a.abs()).max().unwrap().max(1) as f64;
        layers.push(Layer::new(weights, biases, Activation::Linear, ws, scale_in).unwrap());
        let next_scale = ws * scale_in * max / span;
        x = acc
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| {
                        ((a as f64 * ws * scale_in / next_scale).round() as i64).clamp(-128, 127)
                    })
                    .collect()
            })
            .collect();
        scale_in = next_scale;
    }
    QuantizedModel::new(widths[0], layers).unwrap()
}

/// Random `rows x cols` layer with one voltage code per column.
pub fn random_memory(
    rng: &mut ChaCha8Rng,
    array_n: usize,
    rows: usize,
    codes: &[u32],
    v_bits: u32,
) -> LayerMemory {
    let mut words = Vec::with_capacity(rows * codes.len());
    for &code in codes {
        for _ in 0..rows {
            words.push(encode_word(rng.random::<i8>(), code, v_bits).unwrap());
        }
    }
    LayerMemory::new(array_n, v_bits, rows, codes.len(), words).unwrap()
}

pub fn random_activations(rng: &mut ChaCha8Rng, n: usize, rows: usize) -> Vec<Vec<i32>> {
    (0..n)
        .map(|_| (0..rows).map(|_| rng.random_range(0..=255)).collect())
        .collect()
}

/// Exact integer product `[batch][col]` of a memory with activations.
pub fn exact_product(mem: &LayerMemory, acts: &[Vec<i32>]) -> Vec<Vec<i64>> {
    acts.iter()
        .map(|a| {
            (0..mem.cols())
                .map(|c| {
                    mem.column_weights(c)
                        .zip(a)
                        .map(|(w, &x)| i64::from(w) * i64::from(x))
                        .sum()
                })
                .collect()
        })
        .collect()
}
