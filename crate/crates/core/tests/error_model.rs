mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vosa_core::{Error, ErrorModelTable};

// Through-origin least-squares slopes of the bundled variance table,
// computed independently.
const SLOPES: [(f64, f64); 3] = [
    (0.5, 3489831.8856501984),
    (0.6, 1124323.823256772),
    (0.7, 192360.5818198464),
];

#[test]
fn bundled_slopes_match_oracle() {
    let t = common::fitted_table();
    assert_eq!(t.level_count(), 4);
    assert_eq!(t.non_nominal().count(), 3);
    for (v, slope) in SLOPES {
        let code = t.code_of(v).unwrap();
        let got = t.single_pe_variance(code).unwrap();
        assert!((got / slope - 1.0).abs() < 1e-6, "{v} V: {got} vs {slope}");
        assert!(t.fit_residual(code).unwrap() >= 0.0);
    }
    let nominal = t.nominal();
    assert_eq!(nominal.volts, 0.8);
    assert_eq!(t.single_pe_variance(nominal.code).unwrap(), 0.0);
}

#[test]
fn voltage_lowers_variance() {
    let t = common::fitted_table();
    let v: Vec<f64> = t
        .levels()
        .iter()
        .map(|l| t.single_pe_variance(l.code).unwrap())
        .collect();
    assert!(v.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn column_variance_adds_over_pes() {
    let t = common::fitted_table();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 100_000;
    for level in t.non_nominal().collect::<Vec<_>>() {
        let s2 = t.single_pe_variance(level.code).unwrap();
        for k in [1u64, 16] {
            let (mean, var) = t.column_error_stats(level.code, k).unwrap();
            assert_eq!(mean, 0.0);
            assert!((var - k as f64 * s2).abs() <= 1e-9 * var);
            let xs: Vec<f64> = (0..trials)
                .map(|_| t.sample_column_error(level.code, k, &mut rng).unwrap() as f64)
                .collect();
            let m = xs.iter().sum::<f64>() / trials as f64;
            let emp = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials - 1) as f64;
            assert!(
                (emp / var - 1.0).abs() < 0.02,
                "{} V, k={k}: {emp} vs {var}",
                level.volts
            );
            assert!(m.abs() < 5.0 * (var / trials as f64).sqrt());
        }
    }
}

#[test]
fn nominal_level_never_errs() {
    let t = common::fitted_table();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let code = t.nominal().code;
    assert!(t.sampler(code).unwrap().is_exact());
    assert!((0..1000).all(|_| t.sample_column_error(code, 64, &mut rng).unwrap() == 0));
}

#[test]
fn missing_level_is_named() {
    let csv = "voltage,k,variance\n0.5,1,10\n0.5,2,20\n0.7,1,5\n0.7,2,10\n";
    let err = ErrorModelTable::read_csv(csv.as_bytes(), &[0.5, 0.6, 0.7, 0.8])
        .and_then(|t| t.fit_linear_scaling())
        .unwrap_err();
    assert!(matches!(err, Error::MissingLevel(v) if v == 0.6), "{err}");
    assert!(err.to_string().contains("0.6"));
}

#[test]
fn unknown_voltage_in_csv_is_rejected() {
    let csv = "voltage,k,variance\n0.55,1,10\n";
    assert!(ErrorModelTable::read_csv(csv.as_bytes(), &[0.5, 0.8]).is_err());
}
