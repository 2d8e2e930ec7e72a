//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vosa_core::aging::{
    calibrate_aging, delay_factor, delta_vth, lifetime_report, AgingParams, AgingTarget, Device,
    Stress, SECONDS_PER_YEAR,
};
use vosa_core::model::baseline_mse;
use vosa_core::optimizer::{
    brute_force_assignment, build_instance, energy_report, solve_assignment, EnergyParams,
    ObjectiveMode,
};
use vosa_core::sensitivity::{
    error_sensitivity_analytic, error_sensitivity_mc, sensitivity_map, Method, SensitivityParams,
};
use vosa_core::systolic::{
    cycle_count, decode_voltage, encode_weight_memory, encode_word, simulate_inference,
    simulate_mm, CycleCount, SimConfig, SimMode,
};
use vosa_core::{
    Activation, AssignmentInstance, Layer, QuantizedModel, SensitivityMap, VoltageLevel,
};

struct Fail(String);

impl From<vosa_core::Error> for Fail {
    fn from(e: vosa_core::Error) -> Self {
        Fail(e.to_string())
    }
}

impl From<String> for Fail {
    fn from(s: String) -> Self {
        Fail(s)
    }
}

type Outcome = Result<String, Fail>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), Fail> {
    if cond {
        Ok(())
    } else {
        Err(Fail(msg()))
    }
}

fn variance_additivity() -> Outcome {
    let table = common::fitted_table();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 100_000;
    let mut worst = 0.0f64;
    for level in table.non_nominal().collect::<Vec<_>>() {
        let s2 = table.single_pe_variance(level.code)?;
        for k in [1u64, 4, 16, 64] {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..trials {
                let e = table.sample_column_error(level.code, k, &mut rng)? as f64;
                sum += e;
                sq += e * e;
            }
            let n = trials as f64;
            let var = (sq - sum * sum / n) / (n - 1.0);
            let rel = (var / (k as f64 * s2) - 1.0).abs();
            worst = worst.max(rel);
            check(rel <= 0.05, || {
                format!(
                    "{} V, k={k}: variance {var} vs {}",
                    level.volts,
                    k as f64 * s2
                )
            })?;
        }
    }
    Ok(format!(
        "3 levels x k in {{1,4,16,64}}, 1e5 trials, worst deviation {:.2}%",
        worst * 100.0
    ))
}

fn grid_levels() -> Vec<VoltageLevel> {
    [0.5, 0.6, 0.7, 0.8]
        .iter()
        .enumerate()
        .map(|(code, &volts)| VoltageLevel {
            code: code as u32,
            volts,
        })
        .collect()
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, mode: ObjectiveMode) -> AssignmentInstance {
    let levels = grid_levels();
    let coarse = rng.random_bool(0.5);
    let mut cost = Vec::new();
    let mut weight = Vec::new();
    for _ in 0..n {
        if rng.random_bool(0.5) {
            cost.push(levels.iter().map(|l| mode.cost::<f64>(l.volts)).collect());
        } else {
            cost.push(
                (0..4)
                    .map(|_| {
                        if coarse {
                            rng.random_range(1..4) as f64
                        } else {
                            rng.random_range(0.1..2.0)
                        }
                    })
                    .collect(),
            );
        }
        let mut w: Vec<f64> = (0..4)
            .map(|_| {
                if coarse {
                    rng.random_range(0..5) as f64
                } else {
                    rng.random_range(0.0..10.0)
                }
            })
            .collect();
        w.sort_by(|a, b| b.total_cmp(a));
        w[3] = 0.0;
        weight.push(w);
    }
    let total: f64 = weight.iter().map(|w| w[0]).sum();
    let budget = rng.random_range(0.0..=total.max(1.0));
    AssignmentInstance::new((0..n).collect(), vec![1; n], levels, cost, weight, budget).unwrap()
}

fn solver_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    for t in 0..200 {
        let n = rng.random_range(1..=12);
        let inst = random_instance(&mut rng, n, ObjectiveMode::LinearV);
        let a = solve_assignment(&inst);
        let b = brute_force_assignment(&inst)?;
        check(a.objective == b.objective, || {
            format!(
                "instance {t}: objective {} vs brute force {}",
                a.objective, b.objective
            )
        })?;
        check(a.codes == b.codes, || {
            format!("instance {t}: tie-break differs")
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "200 instances up to 12x4 identical to brute force in {secs:.1} s"
    ))
}

fn reference_map() -> SensitivityMap {
    let model = common::reference_model();
    sensitivity_map(
        &model,
        None,
        Method::Analytic,
        &SensitivityParams::default(),
    )
    .unwrap()
}

fn reference_baseline(model: &QuantizedModel) -> f64 {
    baseline_mse(model, &common::reference_data().calibration_slice(500)).unwrap()
}

fn boundary_behavior() -> Outcome {
    let model = common::reference_model();
    let map = reference_map();
    let table = common::fitted_table();
    let baseline = reference_baseline(&model);
    let energy = EnergyParams::default();
    for mode in [ObjectiveMode::LinearV, ObjectiveMode::QuadraticV] {
        let zero = solve_assignment(&build_instance(&map, &table, 0.0, baseline, mode)?);
        check(zero.codes.iter().all(|&c| c == 3), || {
            "budget 0 is not all-nominal".into()
        })?;
        let saving = energy_report(&zero, &model, &energy)?.saving;
        check(saving == 0.0, || format!("budget 0 saves {saving}"))?;
        let inf = build_instance(&map, &table, 1.0, baseline, mode)?.with_budget(f64::INFINITY)?;
        let all_low = solve_assignment(&inf);
        check(all_low.codes.iter().all(|&c| c == 0), || {
            "unbounded budget is not all-minimum".into()
        })?;
    }
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(
            proptest::test_runner::RngAlgorithm::ChaCha,
        ),
    );
    let strategy = (1usize..=40, any::<u64>(), prop::bool::ANY, 0.0f64..=1.5);
    runner
        .run(&strategy, |(n, seed, quadratic, frac)| {
            let mode = if quadratic {
                ObjectiveMode::QuadraticV
            } else {
                ObjectiveMode::LinearV
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(&mut rng, n, mode);
            let total: f64 = inst.weights().iter().map(|w| w[0]).sum();
            let inst = inst.with_budget(frac * total).unwrap();
            let a = solve_assignment(&inst);
            prop_assert!(a.feasible);
            prop_assert!(a.predicted_mse <= inst.budget());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(
        "budget 0 all-nominal (saving 0), unbounded all-0.5 V, 1000 random instances within budget"
            .into(),
    )
}

fn solver_scale() -> Outcome {
    let model = common::reference_model();
    let map = reference_map();
    let table = common::fitted_table();
    let baseline = reference_baseline(&model);
    let mut slowest = 0.0f64;
    for ub in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        for mode in [ObjectiveMode::LinearV, ObjectiveMode::QuadraticV] {
            let inst = build_instance(&map, &table, ub, baseline, mode)?;
            check(
                inst.neuron_count() == 138 && inst.levels().len() == 4,
                || "instance is not 138x4".into(),
            )?;
            let start = Instant::now();
            let a = solve_assignment(&inst);
            slowest = slowest.max(start.elapsed().as_secs_f64());
            check(a.feasible && a.predicted_mse <= inst.budget(), || {
                format!("mse_ub {ub}: infeasible")
            })?;
            // No single-neuron move to a cheaper level stays within budget.
            for n in 0..inst.neuron_count() {
                for code in 0..4u32 {
                    let c = a.codes[n] as usize;
                    let cheaper = inst.cost(n, code) < inst.costs()[n][c];
                    let fits = a.predicted_mse - inst.weights()[n][c] + inst.weight(n, code)
                        <= inst.budget();
                    check(!(cheaper && fits), || {
                        format!("mse_ub {ub}: neuron {n} could move to code {code}")
                    })?;
                }
            }
        }
    }
    check(slowest < 60.0, || format!("slowest solve {slowest:.2} s"))?;
    Ok(format!(
        "138x4 instances, 7 bounds x 2 objectives, slowest solve {:.3} s",
        slowest
    ))
}

/// Single-layer 16x16 linear model: every column is an output neuron with
/// ES 1 and fan-in 16.
fn mm_benchmark(rng: &mut ChaCha8Rng) -> QuantizedModel {
    let weights: Vec<Vec<i64>> = (0..16)
        .map(|_| (0..16).map(|_| rng.random_range(-128..=127)).collect())
        .collect();
    let layer = Layer::new(weights, vec![0; 16], Activation::Linear, 1.0, 1.0).unwrap();
    QuantizedModel::new(16, vec![layer]).unwrap()
}

fn budget_violation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = mm_benchmark(&mut rng);
    let table = common::fitted_table();
    let map = sensitivity_map(
        &model,
        None,
        Method::Analytic,
        &SensitivityParams::default(),
    )?;
    // Relative bounds are taken against every column running at 0.7 V.
    let baseline = 16.0 * 16.0 * table.single_pe_variance(table.code_of(0.7)?)?;
    let acts = common::random_activations(&mut rng, 10_000, 16);
    let bounds = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
    let mut excess = Vec::new();
    let mut rows = Vec::new();
    for ub in bounds {
        let inst = build_instance(&map, &table, ub, baseline, ObjectiveMode::LinearV)?;
        let a = solve_assignment(&inst);
        let mem = encode_weight_memory(&model, &a, 16, 2)?;
        let out = simulate_mm(mem.layer(0), &acts, &table, &mut rng)?;
        let exact = common::exact_product(mem.layer(0), &acts);
        let sq: f64 = out
            .outputs
            .iter()
            .zip(&exact)
            .flat_map(|(o, e)| o.iter().zip(e).map(|(&x, &y)| (i64::from(x) - y) as f64))
            .map(|d| d * d)
            .sum();
        let mse = sq / (acts.len() - 1) as f64;
        let budget = inst.budget();
        excess.push(if mse > budget {
            mse / budget - 1.0
        } else {
            0.0
        });
        rows.push(format!("{ub}:{:.3}", mse / budget));
    }
    let mean = excess.iter().sum::<f64>() / excess.len() as f64;
    check(mean <= 0.05, || {
        format!("mean excess {:.2}% ({})", mean * 100.0, rows.join(" "))
    })?;
    Ok(format!(
        "16x16 MM, 1e4 vectors, mean excess {:.3}% (simulated/bound {})",
        mean * 100.0,
        rows.join(" ")
    ))
}

fn headline_operating_point() -> Outcome {
    let model = common::reference_model();
    let data = common::reference_data();
    let map = reference_map();
    let table = common::fitted_table();
    let baseline = reference_baseline(&model);
    let config = SimConfig {
        array_n: 16,
        mode: SimMode::Systolic,
        energy: EnergyParams::default(),
        seed: 6,
    };
    let mut points = Vec::new();
    for ub in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let a = solve_assignment(&build_instance(
            &map,
            &table,
            ub,
            baseline,
            ObjectiveMode::LinearV,
        )?);
        let r = simulate_inference(&model, &a, &data, &table, &config)?;
        points.push((ub, r.energy_saving, r.accuracy_drop.unwrap()));
    }
    let summary: Vec<String> = points
        .iter()
        .map(|(ub, s, d)| format!("{ub}:{:.1}%/{:.2}pp", s * 100.0, d * 100.0))
        .collect();
    check(points.windows(2).all(|w| w[1].1 >= w[0].1), || {
        format!("saving not monotone: {}", summary.join(" "))
    })?;
    let best = points
        .iter()
        .filter(|p| p.2 <= 0.02)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    check(best >= 0.25, || {
        format!(
            "no point with >=25% saving at <=2pp loss: {}",
            summary.join(" ")
        )
    })?;
    Ok(format!(
        "best saving within 2pp accuracy loss {:.1}% (bound:saving/loss {})",
        best * 100.0,
        summary.join(" ")
    ))
}

fn sensitivity_structure() -> Outcome {
    let map = reference_map();
    let mut hidden = Vec::new();
    let mut output = Vec::new();
    for (n, nr) in map.neurons.iter().enumerate() {
        if nr.layer == 1 {
            output.push(map.scalar(n));
        } else {
            hidden.push(map.scalar(n));
        }
    }
    for (i, es) in output.iter().enumerate() {
        check((es - 1.0).abs() <= 0.05, || format!("output {i} ES {es}"))?;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mh, mo) = (mean(&hidden), mean(&output));
    check(mh < mo, || format!("hidden mean ES {mh} >= output {mo}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for widths in [[12, 8, 4], [16, 10, 6], [8, 12, 3], [20, 5, 10]] {
        let data = common::random_dataset(&mut rng, 64, widths[0], widths[2]);
        let model = common::random_linear_model(&mut rng, &widths, &data, 10.0);
        for id in 0..model.neuron_count() {
            let nr = model.neuron(id).unwrap();
            let std = if nr.layer == 0 {
                15.0 * model.layer(1).activation_scale() / model.layer(0).accumulator_unit()
            } else {
                50.0
            };
            let a: Vec<f64> = error_sensitivity_analytic(&model, id, false)?;
            let m = error_sensitivity_mc(&model, &data, id, std, 20_000, &mut rng)?;
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let gap = (norm(&m) / norm(&a) - 1.0).abs();
            worst = worst.max(gap);
            check(gap <= 0.05, || {
                format!("{widths:?} neuron {id}: MC/analytic gap {gap}")
            })?;
        }
    }
    Ok(format!(
        "output ES = 1, mean hidden ES {mh:.4} < {mo:.4}, MC vs analytic worst gap {:.2}%",
        worst * 100.0
    ))
}

fn cycle_model() -> Outcome {
    for n in 1..=256u64 {
        let m = n as usize;
        check(
            cycle_count(m, m, false)?
                == CycleCount {
                    first_result: n,
                    complete: 2 * n,
                },
            || format!("n={n} without prefetch"),
        )?;
        check(
            cycle_count(m, m, true)?
                == CycleCount {
                    first_result: 2 * n,
                    complete: 3 * n,
                },
            || format!("n={n} with prefetch"),
        )?;
    }
    Ok("(n, 2n) and (2n, 3n) for every n in 1..=256".into())
}

fn aging_calibration() -> Outcome {
    let stress = Stress::default();
    let targets = [
        AgingTarget {
            v_dd: 0.8,
            years: 10.0,
            relative_shift: 0.237,
        },
        AgingTarget {
            v_dd: 0.5,
            years: 10.0,
            relative_shift: 0.0021,
        },
    ];
    let pmos = calibrate_aging(&targets, &AgingParams::placeholder(), &stress)?.params;
    let t10 = 10.0 * SECONDS_PER_YEAR;
    for tg in &targets {
        let got = delta_vth(&pmos, tg.v_dd, t10, stress.theta, stress.duty)? / pmos.vth0;
        check((got / tg.relative_shift - 1.0).abs() <= 0.005, || {
            format!("{} V: {got} vs {}", tg.v_dd, tg.relative_shift)
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..10_000 {
        let p = AgingParams {
            a: rng.random_range(1e-3..10.0),
            kappa: rng.random_range(-200.0..200.0),
            alpha_t: rng.random_range(0.05..0.5),
            gamma: rng.random_range(0.5..6.0),
            beta: rng.random_range(0.05..0.5),
            t_inv: rng.random_range(0.5..2.0),
            vth0: rng.random_range(0.2..0.4),
            alpha_delay: rng.random_range(1.0..2.0),
        };
        let v = rng.random_range(0.45..1.0);
        let t = rng.random_range(0.01..20.0) * SECONDS_PER_YEAR;
        let duty = rng.random_range(0.05..0.9);
        let dv = rng.random_range(0.001..0.2);
        let base = delta_vth(&p, v, t, 350.0, duty)?;
        let grows = delta_vth(&p, v + dv, t, 350.0, duty)? > base
            && delta_vth(&p, v, t * 1.5, 350.0, duty)? > base
            && delta_vth(&p, v, t, 350.0, (duty + 0.1).min(1.0))? > base;
        let d: f64 = rng.random_range(0.001..0.05);
        let vth = p.vth0 + base.min(0.1);
        let vdd = v.max(vth + 0.05);
        let df = delay_factor(vdd, vth, p.alpha_delay)?;
        let delay_ok = delay_factor(vdd, vth + d.min(0.04), p.alpha_delay)? > df
            && delay_factor(vdd + d, vth, p.alpha_delay)? < df;
        check(grows && delay_ok, || {
            format!("draw {i}: monotonicity fails for {p:?}")
        })?;
    }

    let nmos_targets = [
        AgingTarget {
            relative_shift: 0.19,
            ..targets[0]
        },
        AgingTarget {
            relative_shift: 0.002,
            ..targets[1]
        },
    ];
    let nmos = calibrate_aging(&nmos_targets, &AgingParams::placeholder(), &stress)?.params;
    let report = lifetime_report(
        &[(Device::Pmos, pmos), (Device::Nmos, nmos)],
        &[0.5, 0.6, 0.7, 0.8],
        10.0,
        &stress,
    )?;
    for m in &report.mixed {
        check(
            m.mixed_delay_increase_pct < m.nominal_delay_increase_pct,
            || format!("{:?}: mixed use does not age less", m.device),
        )?;
    }
    let gains: Vec<String> = report
        .mixed
        .iter()
        .map(|m| format!("{} {:.1}%", m.device.name(), m.lifetime_gain * 100.0))
        .collect();
    Ok(format!(
        "23.7%/0.21% reproduced, 1e4 monotonicity draws, mixed-use gain {} (reported 12%)",
        gains.join(", ")
    ))
}

fn encode_and_exact_mode() -> Outcome {
    for v_bits in 1..=4u32 {
        for code in 0..(1u32 << v_bits) {
            for w in i8::MIN..=i8::MAX {
                let word = encode_word(w, code, v_bits)?;
                check(decode_voltage(word, v_bits)? == (w, code), || {
                    format!("word {word:#x} does not decode to ({w}, {code})")
                })?;
            }
        }
    }
    let table = common::fitted_table();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100 {
        let mem = common::random_memory(&mut rng, 16, 16, &[3; 16], 2);
        let acts = common::random_activations(&mut rng, 16, 16);
        let out = simulate_mm(&mem, &acts, &table, &mut rng)?;
        let exact = common::exact_product(&mem, &acts);
        let same = out
            .outputs
            .iter()
            .zip(&exact)
            .all(|(o, e)| o.iter().zip(e).all(|(&a, &b)| i64::from(a) == b));
        check(same, || {
            format!("instance {i} differs from integer product")
        })?;
    }
    Ok(
        "all (weight, code) pairs for 1..=4 selection bits; 100 nominal 16x16 products bit-exact"
            .into(),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("variance additivity", variance_additivity),
        ("solver exactness", solver_exactness),
        ("boundary behavior", boundary_behavior),
        ("solver scale", solver_scale),
        ("budget-violation rate", budget_violation),
        ("headline operating point", headline_operating_point),
        ("sensitivity structure", sensitivity_structure),
        ("cycle model", cycle_model),
        ("aging calibration", aging_calibration),
        ("encode/decode and exact mode", encode_and_exact_mode),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(Fail(
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(Fail(why)) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
