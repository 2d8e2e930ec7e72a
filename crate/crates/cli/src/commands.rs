use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vosa_core::aging::{
    calibrate_aging, lifetime_report, AgingParams, AgingTarget, Device, Stress,
};
use vosa_core::error_model::LevelSummary;
use vosa_core::model::baseline_mse;
use vosa_core::optimizer::{build_instance, energy_report, solve_assignment, EnergyReport};
use vosa_core::sensitivity::{sensitivity_map, Method};
use vosa_core::systolic::{encode_weight_memory, simulate_inference, v_bits_for, SimConfig};
use vosa_core::{
    load_mnist_idx, AssignmentInstance, Dataset, ErrorModelTable, QuantizedModel, SensitivityMap,
    SimulationReport, VoltageAssignment,
};

use crate::config::{resolve, AgingConfig, RunConfig};
use crate::fail::{Context, Failure, Result};
use crate::output::Output;

/// A loaded config plus where its relative paths point.
pub struct Run {
    pub cfg: RunConfig,
    base: PathBuf,
    pub out: Output,
    pub timings: bool,
}

impl Run {
    pub fn new(cfg: RunConfig, base: PathBuf, out_dir: PathBuf, timings: bool) -> Result<Self> {
        cfg.validate()?;
        let out = Output::create(out_dir)?;
        Ok(Self {
            cfg,
            base,
            out,
            timings,
        })
    }

    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    fn echo_config(&self) -> Result<()> {
        self.out.json("config.json", &self.cfg)
    }

    pub fn table(&self) -> Result<ErrorModelTable> {
        let raw = match &self.cfg.variance_csv {
            Some(p) => {
                let p = self.path(p);
                ErrorModelTable::load(&p, &self.cfg.levels).context(p.display())?
            }
            None if self.cfg.levels == vosa_core::error_model::DEFAULT_LEVELS => {
                ErrorModelTable::bundled()?
            }
            None => ErrorModelTable::read_csv(
                vosa_core::error_model::BUNDLED_VARIANCE_CSV.as_bytes(),
                &self.cfg.levels,
            )
            .context("bundled calibration")?,
        };
        raw.fit_linear_scaling().context("fitting error model")
    }

    fn model(&self, command: &str) -> Result<QuantizedModel> {
        let p = self.cfg.model.as_ref().ok_or_else(|| {
            Failure::config(format!("`{command}` needs a `model` path in the config"))
        })?;
        let p = self.path(p);
        QuantizedModel::load(&p).context(p.display())
    }

    fn dataset(&self, command: &str, model: &QuantizedModel) -> Result<Dataset> {
        let d = self.cfg.dataset.as_ref().ok_or_else(|| {
            Failure::config(format!(
                "`{command}` needs `dataset.images` and `dataset.labels` in the config"
            ))
        })?;
        let data = load_mnist_idx(self.path(&d.images), self.path(&d.labels))
            .context("loading dataset")?;
        if data.input_size() != model.input_size() {
            return Err(Failure::data(format!(
                "dataset inputs have {} values, the model expects {}",
                data.input_size(),
                model.input_size()
            )));
        }
        Ok(data)
    }

    fn v_bits(&self) -> Result<u32> {
        let need = v_bits_for(self.cfg.levels.len());
        match self.cfg.v_bits {
            None => Ok(need),
            Some(b) if b >= need && b <= 24 => Ok(b),
            Some(b) => Err(Failure::config(format!(
                "v_bits = {b} cannot encode {} levels (need {need}..=24)",
                self.cfg.levels.len()
            ))),
        }
    }

    /// Model, data, fitted table, sensitivities and the pinned baseline.
    fn prepare(&self, command: &str) -> Result<Prepared> {
        let table = self.table()?;
        let model = self.model(command)?;
        let data = self.dataset(command, &model)?;
        let baseline_slice = data.calibration_slice(self.cfg.baseline_samples);
        let baseline: f64 = baseline_mse(&model, &baseline_slice)?;
        info!(
            "baseline MSE {baseline} over {} calibration samples",
            baseline_slice.len()
        );
        let map = sensitivity_map(
            &model,
            Some(&data),
            self.cfg.sensitivity.method,
            &self.cfg.sensitivity.params(self.cfg.seed),
        )?;
        let eval = match self.cfg.eval_samples {
            Some(n) => data.head(n),
            None => data,
        };
        Ok(Prepared {
            table,
            model,
            eval,
            map,
            baseline,
            baseline_samples: baseline_slice.len(),
        })
    }
}

struct Prepared {
    table: ErrorModelTable,
    model: QuantizedModel,
    eval: Dataset,
    map: SensitivityMap,
    baseline: f64,
    baseline_samples: usize,
}

impl Prepared {
    fn instance(&self, run: &Run, mse_ub: f64) -> Result<AssignmentInstance> {
        Ok(build_instance(
            &self.map,
            &self.table,
            mse_ub,
            self.baseline,
            run.cfg.objective_mode,
        )?)
    }

    fn assign(&self, run: &Run, mse_ub: f64) -> Result<(VoltageAssignment, Duration)> {
        let inst = self.instance(run, mse_ub)?;
        let start = Instant::now();
        let a = solve_assignment(&inst);
        let elapsed = start.elapsed();
        info!(
            "mse_ub {mse_ub}: solved {} neurons in {:.3} s",
            inst.neuron_count(),
            elapsed.as_secs_f64()
        );
        if !a.feasible {
            return Err(Failure::internal(format!(
                "no assignment meets the budget {} for mse_ub {mse_ub}",
                a.budget
            )));
        }
        Ok((a, elapsed))
    }

    fn simulate(&self, run: &Run, a: &VoltageAssignment) -> Result<SimulationReport> {
        let config = SimConfig {
            array_n: run.cfg.array_n,
            mode: run.cfg.mode,
            energy: run.cfg.energy.params(),
            seed: run.cfg.seed,
        };
        Ok(simulate_inference(
            &self.model,
            a,
            &self.eval,
            &self.table,
            &config,
        )?)
    }
}

#[derive(Serialize)]
struct CalibrationSummary {
    source: String,
    levels: Vec<LevelSummary>,
}

pub fn calibrate(run: &Run) -> Result<()> {
    let table = run.table()?;
    let levels = table.summary();
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "code",
        "volts",
        "nominal",
        "single_pe_mean",
        "single_pe_variance",
        "fit_rms_residual",
        "calibration_rows",
    ])
    .map_err(internal)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for l in &levels {
        csv.write_record([
            l.code.to_string(),
            l.volts.to_string(),
            l.nominal.to_string(),
            opt(l.single_pe_mean),
            opt(l.single_pe_variance),
            opt(l.fit_rms_residual),
            l.calibration_rows.to_string(),
        ])
        .map_err(internal)?;
    }
    run.out
        .bytes("error_model.csv", &csv.into_inner().map_err(internal)?)?;
    let source = run
        .cfg
        .variance_csv
        .as_ref()
        .map_or_else(|| "bundled".to_string(), |p| p.display().to_string());
    run.out
        .json("error_model.json", &CalibrationSummary { source, levels })?;
    run.echo_config()
}

#[derive(Serialize)]
struct SensitivitySummary {
    neurons: usize,
    analytic: usize,
    monte_carlo: usize,
    mc_samples: Option<usize>,
    mean_es_by_layer: Vec<f64>,
    baseline_mse: f64,
    baseline_samples: usize,
}

pub fn sensitivity(run: &Run) -> Result<()> {
    let p = run.prepare("sensitivity")?;
    let mut buf = Vec::new();
    p.map.write_csv(&mut buf)?;
    run.out.bytes("sensitivity.csv", &buf)?;
    let mut by_layer: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (n, nr) in p.map.neurons.iter().enumerate() {
        let e = by_layer.entry(nr.layer).or_default();
        e.0 += p.map.scalar(n);
        e.1 += 1;
    }
    let analytic = p
        .map
        .method
        .iter()
        .filter(|&&m| m == Method::Analytic)
        .count();
    run.out.json(
        "sensitivity.json",
        &SensitivitySummary {
            neurons: p.map.len(),
            analytic,
            monte_carlo: p.map.len() - analytic,
            mc_samples: p.map.mc_samples,
            mean_es_by_layer: by_layer.values().map(|&(s, c)| s / c as f64).collect(),
            baseline_mse: p.baseline,
            baseline_samples: p.baseline_samples,
        },
    )?;
    run.echo_config()
}

#[derive(Serialize)]
struct AssignmentSummary {
    mse_ub: f64,
    baseline_mse: f64,
    baseline_samples: usize,
    objective_mode: vosa_core::optimizer::ObjectiveMode,
    objective: f64,
    predicted_mse: f64,
    budget: f64,
    feasible: bool,
    neurons_per_level: BTreeMap<String, usize>,
    energy_total: f64,
    energy_nominal: f64,
    saving: f64,
}

fn assignment_summary(
    run: &Run,
    p: &Prepared,
    mse_ub: f64,
    a: &VoltageAssignment,
    energy: &EnergyReport<f64>,
) -> AssignmentSummary {
    let mut per_level = BTreeMap::new();
    for l in p.table.levels() {
        per_level.insert(format!("{:.3}", l.volts), 0);
    }
    for &v in &a.volts {
        *per_level.entry(format!("{v:.3}")).or_default() += 1;
    }
    AssignmentSummary {
        mse_ub,
        baseline_mse: p.baseline,
        baseline_samples: p.baseline_samples,
        objective_mode: run.cfg.objective_mode,
        objective: a.objective,
        predicted_mse: a.predicted_mse,
        budget: a.budget,
        feasible: a.feasible,
        neurons_per_level: per_level,
        energy_total: energy.total,
        energy_nominal: energy.total_nominal,
        saving: energy.saving,
    }
}

fn write_assignment(
    run: &Run,
    p: &Prepared,
    mse_ub: f64,
    a: &VoltageAssignment,
    prefix: &str,
) -> Result<()> {
    let mut buf = Vec::new();
    a.write_csv(&mut buf)?;
    run.out.bytes(&format!("{prefix}assignment.csv"), &buf)?;
    let mem = encode_weight_memory(&p.model, a, run.cfg.array_n, run.v_bits()?)?;
    run.out
        .bytes(&format!("{prefix}weight_memory.txt"), mem.dump().as_bytes())?;
    let energy = energy_report(a, &p.model, &run.cfg.energy.params())?;
    run.out.json(
        &format!("{prefix}assignment.json"),
        &assignment_summary(run, p, mse_ub, a, &energy),
    )
}

fn write_timings(run: &Run, rows: &[(f64, Duration)]) -> Result<()> {
    if !run.timings {
        return Ok(());
    }
    let mut text = String::from("mse_ub,solver_seconds\n");
    for (ub, d) in rows {
        text.push_str(&format!("{ub},{}\n", d.as_secs_f64()));
    }
    run.out.bytes("timings.csv", text.as_bytes())
}

pub fn assign(run: &Run, mse_ub: f64) -> Result<()> {
    check_bound(mse_ub)?;
    let p = run.prepare("assign")?;
    let (a, t) = p.assign(run, mse_ub)?;
    write_assignment(run, &p, mse_ub, &a, "")?;
    write_timings(run, &[(mse_ub, t)])?;
    run.echo_config()
}

fn check_bound(mse_ub: f64) -> Result<()> {
    if mse_ub.is_finite() && mse_ub >= 0.0 {
        Ok(())
    } else {
        Err(Failure::config(format!(
            "--mse-ub must be finite and >= 0, got {mse_ub}"
        )))
    }
}

#[derive(Deserialize)]
struct AssignmentRow {
    neuron_id: usize,
    voltage_code: u32,
    volts: f64,
}

fn read_assignment(path: &Path, p: &Prepared, run: &Run, mse_ub: f64) -> Result<VoltageAssignment> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut codes = vec![None; p.model.neuron_count()];
    for row in rdr.deserialize::<AssignmentRow>() {
        let row = row.map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let level = p.table.level(row.voltage_code).context(path.display())?;
        if (level.volts - row.volts).abs() > 1e-9 {
            return Err(Failure::data(format!(
                "{}: neuron {} has code {} but volts {} (expected {})",
                path.display(),
                row.neuron_id,
                row.voltage_code,
                row.volts,
                level.volts
            )));
        }
        let slot = codes.get_mut(row.neuron_id).ok_or_else(|| {
            Failure::data(format!(
                "{}: unknown neuron {}",
                path.display(),
                row.neuron_id
            ))
        })?;
        *slot = Some(row.voltage_code);
    }
    let codes = codes
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| Failure::data(format!("{}: neuron {i} missing", path.display())))
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(p.instance(run, mse_ub)?.assignment(codes)?)
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    mse_ub: f64,
    baseline_mse: f64,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

pub fn simulate(run: &Run, mse_ub: f64, assignment: Option<&Path>) -> Result<()> {
    check_bound(mse_ub)?;
    let p = run.prepare("simulate")?;
    let a = match assignment {
        Some(path) => read_assignment(path, &p, run, mse_ub)?,
        None => p.assign(run, mse_ub)?.0,
    };
    let report = p.simulate(run, &a)?;
    info!(
        "simulated MSE {} vs budget {} ({} samples)",
        report.mse, report.budget, report.samples
    );
    run.out.json(
        "simulation.json",
        &SimulationSummary {
            mse_ub,
            baseline_mse: p.baseline,
            report: &report,
        },
    )?;
    run.echo_config()
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    mse_ub: f64,
    budget: f64,
    objective: f64,
    predicted_mse: f64,
    simulated_mse: f64,
    violation: bool,
    violation_relative: f64,
    accuracy: Option<f64>,
    baseline_accuracy: Option<f64>,
    accuracy_drop: Option<f64>,
    energy_saving: f64,
    cycles: u64,
}

#[derive(Serialize)]
struct SweepSummary {
    points: usize,
    baseline_mse: f64,
    baseline_samples: usize,
    mean_violation_relative: f64,
    violations: usize,
    saving_monotone: bool,
    best_saving_within_accuracy_drop_2pct: Option<f64>,
}

pub fn sweep(run: &Run) -> Result<()> {
    if run.cfg.mse_ub.is_empty() {
        return Err(Failure::config("mse_ub list is empty"));
    }
    let p = run.prepare("sweep")?;
    run.out.dir("points")?;
    let mut bounds = run.cfg.mse_ub.clone();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    let results: Vec<(SweepRow, Duration)> = bounds
        .par_iter()
        .enumerate()
        .map(|(i, &ub)| {
            let (a, t) = p.assign(run, ub)?;
            let r = p.simulate(run, &a)?;
            let row = SweepRow {
                mse_ub: ub,
                budget: a.budget,
                objective: a.objective,
                predicted_mse: a.predicted_mse,
                simulated_mse: r.mse,
                violation: r.violation.flag,
                violation_relative: r.violation.relative,
                accuracy: r.accuracy,
                baseline_accuracy: r.baseline_accuracy,
                accuracy_drop: r.accuracy_drop,
                energy_saving: r.energy_saving,
                cycles: r.cycles,
            };
            write_assignment(run, &p, ub, &a, &format!("points/{i:02}_"))?;
            run.out.json(&format!("points/{i:02}_point.json"), &row)?;
            Ok((row, t))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = results.iter().map(|(r, _)| r.clone()).collect();
    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        csv.serialize(r).map_err(internal)?;
    }
    run.out
        .bytes("sweep.csv", &csv.into_inner().map_err(internal)?)?;
    let n = rows.len() as f64;
    run.out.json(
        "sweep.json",
        &SweepSummary {
            points: rows.len(),
            baseline_mse: p.baseline,
            baseline_samples: p.baseline_samples,
            mean_violation_relative: rows.iter().map(|r| r.violation_relative).sum::<f64>() / n,
            violations: rows.iter().filter(|r| r.violation).count(),
            saving_monotone: rows
                .windows(2)
                .all(|w| w[1].energy_saving >= w[0].energy_saving),
            best_saving_within_accuracy_drop_2pct: rows
                .iter()
                .filter(|r| r.accuracy_drop.is_some_and(|d| d <= 0.02))
                .map(|r| r.energy_saving)
                .reduce(f64::max),
        },
    )?;
    let timings: Vec<(f64, Duration)> = results.iter().map(|(r, t)| (r.mse_ub, *t)).collect();
    write_timings(run, &timings)?;
    run.echo_config()
}

#[derive(Serialize)]
struct AgingSummary {
    years: f64,
    stress: Stress<f64>,
    devices: Vec<DeviceSummary>,
    mixed: Vec<vosa_core::aging::MixedScenario<f64>>,
}

#[derive(Serialize)]
struct DeviceSummary {
    device: Device,
    params: AgingParams<f64>,
    calibrated: bool,
    calibration_residual: Option<f64>,
}

fn device_params(
    device: Device,
    explicit: Option<AgingParams<f64>>,
    targets: &[AgingTarget<f64>],
    stress: &Stress<f64>,
) -> Result<Option<DeviceSummary>> {
    if targets.is_empty() {
        return Ok(explicit.map(|params| DeviceSummary {
            device,
            params,
            calibrated: false,
            calibration_residual: None,
        }));
    }
    let start = explicit.unwrap_or_else(AgingParams::placeholder);
    let c = calibrate_aging(targets, &start, stress)
        .context(format!("calibrating {} aging", device.name()))?;
    info!(
        "{} aging: A = {:e}, gamma = {}, residual {:e}",
        device.name(),
        c.params.a,
        c.params.gamma,
        c.residual
    );
    Ok(Some(DeviceSummary {
        device,
        params: c.params,
        calibrated: true,
        calibration_residual: Some(c.residual),
    }))
}

pub fn aging(run: &Run, years: Option<f64>) -> Result<()> {
    let cfg: &AgingConfig = run.cfg.aging.as_ref().ok_or_else(|| {
        Failure::config(
            "`aging` needs an `aging` section with `pmos`/`nmos` parameters or calibration `targets`",
        )
    })?;
    let years = years.unwrap_or(cfg.years);
    if !(years.is_finite() && years >= 0.0) {
        return Err(Failure::config(format!("years must be >= 0, got {years}")));
    }
    let stress = cfg.stress.unwrap_or_default();
    let targets = cfg.targets.clone().unwrap_or_default();
    let devices: Vec<DeviceSummary> = [
        device_params(Device::Pmos, cfg.pmos, &targets.pmos, &stress)?,
        device_params(Device::Nmos, cfg.nmos, &targets.nmos, &stress)?,
    ]
    .into_iter()
    .flatten()
    .collect();
    if devices.is_empty() {
        return Err(Failure::config(
            "aging section has neither `pmos`/`nmos` parameters nor calibration `targets`",
        ));
    }
    let pairs: Vec<(Device, AgingParams<f64>)> =
        devices.iter().map(|d| (d.device, d.params)).collect();
    let report = lifetime_report(&pairs, &run.cfg.levels, years, &stress)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    run.out.bytes("aging.csv", &buf)?;
    run.out.json(
        "aging.json",
        &AgingSummary {
            years,
            stress,
            devices,
            mixed: report.mixed,
        },
    )?;
    run.echo_config()
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::internal(e.to_string())
}
