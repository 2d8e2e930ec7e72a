mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vosa_core::sensitivity::{
    error_sensitivity_analytic, error_sensitivity_mc, sensitivity_map, Method, SensitivityParams,
};

#[test]
fn reference_model_structure() {
    let model = common::reference_model();
    let map = sensitivity_map::<f64>(
        &model,
        None,
        Method::Analytic,
        &SensitivityParams::default(),
    )
    .unwrap();
    assert_eq!(map.len(), 138);
    let (mut hidden, mut outputs) = (Vec::new(), Vec::new());
    for (n, nr) in map.neurons.iter().enumerate() {
        let es = map.scalar(n);
        if nr.layer == 1 {
            assert!((es - 1.0).abs() < 1e-12);
            assert_eq!(map.fan_in[n], 128);
            outputs.push(es);
        } else {
            assert_eq!(map.fan_in[n], 784);
            hidden.push(es);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert_eq!((hidden.len(), outputs.len()), (128, 10));
    assert!(mean(&hidden) < mean(&outputs));
}

// Hidden activations span +-SPAN quanta and the injected std is STD_QUANTA
// quanta of the next layer's input, so rounding stays small next to the
// propagated error while clipping stays rare.
const SPAN: f64 = 10.0;
const STD_QUANTA: f64 = 15.0;

/// Worst relative gap between the MC and analytic scalar ES over all neurons.
fn worst_gap(rng: &mut ChaCha8Rng, widths: &[usize]) -> f64 {
    let data = common::random_dataset(rng, 64, widths[0], widths[widths.len() - 1]);
    let model = common::random_linear_model(rng, widths, &data, SPAN);
    let mut worst = 0.0f64;
    for id in 0..model.neuron_count() {
        let nr = model.neuron(id).unwrap();
        let analytic: Vec<f64> = error_sensitivity_analytic(&model, id, false).unwrap();
        let std = if nr.layer + 1 < model.layers().len() {
            let l = model.layer(nr.layer);
            STD_QUANTA * model.layer(nr.layer + 1).activation_scale() / l.accumulator_unit()
        } else {
            50.0
        };
        let mc = error_sensitivity_mc(&model, &data, id, std, 20_000, rng).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max((norm(&mc) / norm(&analytic) - 1.0).abs());
    }
    worst
}

#[test]
fn monte_carlo_agrees_with_analytic_on_one_hidden_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for widths in [[12, 8, 4], [16, 10, 6], [8, 12, 3], [20, 5, 10]] {
        let gap = worst_gap(&mut rng, &widths);
        assert!(gap < 0.05, "{widths:?}: {gap}");
    }
}

#[test]
fn deeper_networks_carry_a_small_rounding_bias() {
    // A second requantization adds rounding noise to small propagated
    // errors, which inflates MC estimates for the first layer slightly.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for widths in [[10, 6, 5, 3], [12, 8, 8, 4]] {
        let gap = worst_gap(&mut rng, &widths);
        assert!(gap < 0.10, "{widths:?}: {gap}");
    }
}

#[test]
fn auto_map_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = common::random_dataset(&mut rng, 32, 6, 3);
    let model = common::random_linear_model(&mut rng, &[6, 4, 3], &data, 100.0);
    let params = SensitivityParams {
        samples: 500,
        seed: 3,
        ..SensitivityParams::default()
    };
    let a = sensitivity_map::<f64>(&model, Some(&data), Method::MonteCarlo, &params).unwrap();
    let b = sensitivity_map::<f64>(&model, Some(&data), Method::MonteCarlo, &params).unwrap();
    assert_eq!(a, b);
    let auto = sensitivity_map::<f64>(&model, Some(&data), Method::Auto, &params).unwrap();
    assert!(auto.method.iter().all(|&m| m == Method::Analytic));
}
