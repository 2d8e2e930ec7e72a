//! BTI threshold-voltage drift and alpha-power gate delay.
//!
//! `ΔVth = A · e^(κ/θ) · t^α_t · E_ox^γ · f^β` with `E_ox = (Vdd - Vth0) / T_inv`,
//! and delay `∝ Vdd / (Vdd - Vth)^α`. The technology constants are not
//! public, so `A` and `γ` are normally fitted to known drift points with
//! [`calibrate_aging`]; the remaining exponents are configurable placeholders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Pmos,
    Nmos,
}

impl Device {
    pub fn name(self) -> &'static str {
        match self {
            Device::Pmos => "pmos",
            Device::Nmos => "nmos",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingParams<T> {
    pub a: T,
    pub kappa: T,
    /// Time exponent.
    pub alpha_t: T,
    /// Oxide-field exponent.
    pub gamma: T,
    /// Duty-factor exponent.
    pub beta: T,
    /// Inversion-layer thickness in nm.
    pub t_inv: T,
    pub vth0: T,
    /// Alpha-power delay exponent.
    pub alpha_delay: T,
}

impl<T: Real> AgingParams<T> {
    /// Uncalibrated starting point: `A = 1`, `γ = 1`, `κ = 0` (absorbed into
    /// `A` by calibration), `α_t = 0.17`, `β = 0.2`, `T_inv = 1 nm`,
    /// `Vth0 = 0.3 V`, `α = 1.3`.
    pub fn placeholder() -> Self {
        Self {
            a: T::one(),
            kappa: T::zero(),
            alpha_t: T::lit(0.17),
            gamma: T::one(),
            beta: T::lit(0.2),
            t_inv: T::one(),
            vth0: T::lit(0.3),
            alpha_delay: T::lit(1.3),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_inv > T::zero()) {
            return Err(Error::Domain(format!("T_inv {} must be > 0", self.t_inv)));
        }
        if !(self.vth0 > T::zero()) {
            return Err(Error::Domain(format!("Vth0 {} must be > 0", self.vth0)));
        }
        if !(self.alpha_delay > T::zero()) {
            return Err(Error::Domain("alpha_delay must be > 0".into()));
        }
        Ok(())
    }
}

/// Stress conditions shared by every evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stress<T> {
    /// Temperature in kelvin.
    pub theta: T,
    pub duty: T,
}

impl<T: Real> Default for Stress<T> {
    fn default() -> Self {
        Self {
            theta: T::lit(350.0),
            duty: T::lit(0.5),
        }
    }
}

/// Threshold-voltage shift after `t` seconds of stress at `v_dd`.
pub fn delta_vth<T: Real>(p: &AgingParams<T>, v_dd: T, t: T, theta: T, duty: T) -> Result<T> {
    p.validate()?;
    if !(v_dd > p.vth0) {
        return Err(Error::Domain(format!(
            "Vdd {v_dd} must exceed Vth0 {}",
            p.vth0
        )));
    }
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("stress time {t} must be >= 0")));
    }
    if !(duty > T::zero() && duty <= T::one()) {
        return Err(Error::Domain(format!("duty factor {duty} outside (0, 1]")));
    }
    if !(theta > T::zero()) {
        return Err(Error::Domain(format!("temperature {theta} K must be > 0")));
    }
    if t == T::zero() {
        return Ok(T::zero());
    }
    let e_ox = (v_dd - p.vth0) / p.t_inv;
    Ok(p.a * (p.kappa / theta).exp() * t.powf(p.alpha_t) * e_ox.powf(p.gamma) * duty.powf(p.beta))
}

/// Relative gate delay `v_dd / (v_dd - vth)^alpha`.
pub fn delay_factor<T: Real>(v_dd: T, vth: T, alpha: T) -> Result<T> {
    if !(v_dd > vth) {
        return Err(Error::Domain(format!("Vdd {v_dd} must exceed Vth {vth}")));
    }
    Ok(v_dd / (v_dd - vth).powf(alpha))
}

/// Observed drift: `relative_shift = ΔVth / Vth0` after `years` at `v_dd`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingTarget<T> {
    pub v_dd: T,
    pub years: T,
    pub relative_shift: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Calibration<T> {
    pub params: AgingParams<T>,
    /// Largest relative deviation from a target after the fit.
    pub residual: T,
}

fn max_relative_error<T: Real>(
    p: &AgingParams<T>,
    targets: &[AgingTarget<T>],
    stress: &Stress<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for t in targets {
        let got = delta_vth(
            p,
            t.v_dd,
            t.years * T::lit(SECONDS_PER_YEAR),
            stress.theta,
            stress.duty,
        )?;
        let want = t.relative_shift * p.vth0;
        worst = worst.max(((got - want) / want).abs());
    }
    Ok(worst)
}

/// Fit `A` and `γ` so that [`delta_vth`] reproduces the targets. Two targets
/// are solved exactly; more are fitted by least squares in log space.
pub fn calibrate_aging<T: Real>(
    targets: &[AgingTarget<T>],
    fixed: &AgingParams<T>,
    stress: &Stress<T>,
) -> Result<Calibration<T>> {
    fixed.validate()?;
    if targets.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} target(s) given, at least 2 are needed",
            targets.len()
        )));
    }
    for t in targets {
        if !(t.relative_shift > T::zero()) || !(t.years > T::zero()) {
            return Err(Error::Domain(
                "targets need positive shift and duration".into(),
            ));
        }
        if !(t.v_dd > fixed.vth0) {
            return Err(Error::Domain(format!(
                "target Vdd {} must exceed Vth0",
                t.v_dd
            )));
        }
    }
    if max_relative_error(fixed, targets, stress)? <= T::lit(1e-12) {
        return Ok(Calibration {
            params: *fixed,
            residual: T::zero(),
        });
    }
    // ln ΔV - κ/θ - α_t ln t - β ln f = ln A + γ ln E
    let points: Vec<(T, T)> = targets
        .iter()
        .map(|t| {
            let secs = t.years * T::lit(SECONDS_PER_YEAR);
            let x = ((t.v_dd - fixed.vth0) / fixed.t_inv).ln();
            let y = (t.relative_shift * fixed.vth0).ln()
                - fixed.kappa / stress.theta
                - fixed.alpha_t * secs.ln()
                - fixed.beta * stress.duty.ln();
            (x, y)
        })
        .collect();
    let n = T::from_count(points.len());
    let mx = points.iter().map(|p| p.0).sum::<T>() / n;
    let my = points.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > T::lit(1e-24)) {
        return Err(Error::Degenerate(
            "all targets share the same oxide field".into(),
        ));
    }
    let gamma = sxy / sxx;
    let params = AgingParams {
        a: (my - gamma * mx).exp(),
        gamma,
        ..*fixed
    };
    let residual = max_relative_error(&params, targets, stress)?;
    Ok(Calibration { params, residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgingRow<T> {
    pub vdd: f64,
    pub device: Device,
    pub delta_vth: T,
    pub delta_vth_pct: T,
    pub delay_increase_pct: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedScenario<T> {
    pub device: Device,
    /// Aged delay increase (%) of a PE that always runs at nominal.
    pub nominal_delay_increase_pct: T,
    /// Average aged delay increase (%) over levels used with equal probability.
    pub mixed_delay_increase_pct: T,
    /// `1 - mixed / nominal`: relative reduction of the aged delay increase.
    pub lifetime_gain: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgingReport<T> {
    pub years: T,
    pub rows: Vec<AgingRow<T>>,
    pub mixed: Vec<MixedScenario<T>>,
}

impl<T: Real> AgingReport<T> {
    /// CSV with columns `vdd,device,delta_vth,delta_vth_pct,delay_increase_pct`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "vdd",
            "device",
            "delta_vth",
            "delta_vth_pct",
            "delay_increase_pct",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.vdd.to_string(),
                r.device.name().to_string(),
                r.delta_vth.to_string(),
                r.delta_vth_pct.to_string(),
                r.delay_increase_pct.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Drift and aged delay per level and device after `years`. Delay increase is
/// evaluated on the nominal rail: a path whose transistors aged while
/// stressed at level `v` is timed at the highest level.
pub fn lifetime_report<T: Real>(
    devices: &[(Device, AgingParams<T>)],
    levels: &[f64],
    years: T,
    stress: &Stress<T>,
) -> Result<AgingReport<T>> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no voltage levels".into()));
    }
    let v_nom = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let secs = years * T::lit(SECONDS_PER_YEAR);
    let hundred = T::lit(100.0);
    let mut rows = Vec::new();
    let mut mixed = Vec::new();
    for &(device, p) in devices {
        let vn = T::lit(v_nom);
        let fresh = delay_factor(vn, p.vth0, p.alpha_delay)?;
        let mut increases = Vec::with_capacity(levels.len());
        for &v in levels {
            let dv = delta_vth(&p, T::lit(v), secs, stress.theta, stress.duty)?;
            let aged = delay_factor(vn, p.vth0 + dv, p.alpha_delay)?;
            let inc = aged / fresh - T::one();
            increases.push(inc);
            rows.push(AgingRow {
                vdd: v,
                device,
                delta_vth: dv,
                delta_vth_pct: dv / p.vth0 * hundred,
                delay_increase_pct: inc * hundred,
            });
        }
        let nominal = delay_factor(
            vn,
            p.vth0 + delta_vth(&p, vn, secs, stress.theta, stress.duty)?,
            p.alpha_delay,
        )? / fresh
            - T::one();
        let avg = increases.iter().copied().sum::<T>() / T::from_count(increases.len());
        let gain = if nominal > T::zero() {
            T::one() - avg / nominal
        } else {
            T::zero()
        };
        mixed.push(MixedScenario {
            device,
            nominal_delay_increase_pct: nominal * hundred,
            mixed_delay_increase_pct: avg * hundred,
            lifetime_gain: gain,
        });
    }
    Ok(AgingReport { years, rows, mixed })
}
