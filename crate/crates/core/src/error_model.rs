//! Per-voltage statistical error model of an overscaled multiplier.
//!
//! Each voltage level carries the mean and variance of the error one PE adds
//! to its product. Calibration data gives the variance measured over columns
//! of `k` PEs; [`ErrorModelTable::fit_linear_scaling`] recovers the single-PE
//! variance as the slope of variance against `k`, fitted through the origin.
//! Column statistics then follow by summing `k` independent PE errors.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{round_to_i64, Real};

/// Calibration data bundled with the crate: measured column-error variances
/// for 0.5, 0.6 and 0.7 V over column sizes 1 to 256.
pub const BUNDLED_VARIANCE_CSV: &str = include_str!("../../../data/pe_variance.csv");

/// Supply levels of the bundled calibration, nominal last.
pub const DEFAULT_LEVELS: [f64; 4] = [0.5, 0.6, 0.7, 0.8];

const VOLT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VoltageLevel {
    pub code: u32,
    pub volts: f64,
}

/// One measured calibration row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationRow<T> {
    pub k: u64,
    pub variance: T,
    pub mean: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct LevelState<T> {
    rows: Vec<CalibrationRow<T>>,
    mean: Option<T>,
    variance: Option<T>,
    residual: Option<T>,
}

impl<T> Default for LevelState<T> {
    fn default() -> Self {
        Self {
            rows: Vec::new(),
            mean: None,
            variance: None,
            residual: None,
        }
    }
}

/// Error statistics for an ordered set of voltage levels.
///
/// Codes are dense and ascend with voltage, so the nominal (highest) level has
/// the largest code. The nominal level is exact: mean and variance 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorModelTable<T> {
    levels: Vec<VoltageLevel>,
    state: Vec<LevelState<T>>,
}

/// Fitted parameters of one level, for reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub code: u32,
    pub volts: f64,
    pub nominal: bool,
    pub single_pe_mean: Option<f64>,
    pub single_pe_variance: Option<f64>,
    pub fit_rms_residual: Option<f64>,
    pub calibration_rows: usize,
}

impl<T: Real> ErrorModelTable<T> {
    /// Empty table over the given supply voltages (any order, no duplicates).
    pub fn new(volts: &[f64]) -> Result<Self> {
        if volts.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one voltage level is required".into(),
            ));
        }
        let mut sorted = volts.to_vec();
        if sorted.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "voltage levels must be positive: {volts:?}"
            )));
        }
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted.windows(2).any(|w| w[1] - w[0] < VOLT_TOL) {
            return Err(Error::InvalidParameter(format!(
                "duplicate voltage level in {volts:?}"
            )));
        }
        let levels: Vec<VoltageLevel> = sorted
            .into_iter()
            .enumerate()
            .map(|(code, volts)| VoltageLevel {
                code: code as u32,
                volts,
            })
            .collect();
        let mut state: Vec<LevelState<T>> = levels.iter().map(|_| LevelState::default()).collect();
        let nominal = state.last_mut().expect("nonempty");
        nominal.mean = Some(T::zero());
        nominal.variance = Some(T::zero());
        nominal.residual = Some(T::zero());
        Ok(Self { levels, state })
    }

    /// Fitted table from known single-PE variances (zero means). Every
    /// non-nominal level must appear in `variances`.
    pub fn from_single_pe(volts: &[f64], variances: &[(f64, T)]) -> Result<Self> {
        let mut table = Self::new(volts)?;
        for &(v, var) in variances {
            let code = table.code_of(v)?;
            if !(var >= T::zero()) {
                return Err(Error::NegativeVariance {
                    volts: v,
                    k: 1,
                    variance: var.as_f64(),
                });
            }
            if table.is_nominal(code) {
                if var != T::zero() {
                    return Err(Error::InvalidParameter(format!(
                        "nominal level {v} V must have zero variance"
                    )));
                }
                continue;
            }
            let s = &mut table.state[code as usize];
            s.mean = Some(T::zero());
            s.variance = Some(var);
        }
        for lvl in table.non_nominal() {
            if table.state[lvl.code as usize].variance.is_none() {
                return Err(Error::MissingLevel(lvl.volts));
            }
        }
        Ok(table)
    }

    /// Table 2 calibration over [`DEFAULT_LEVELS`], unfitted.
    pub fn bundled() -> Result<Self> {
        Self::read_csv(BUNDLED_VARIANCE_CSV.as_bytes(), &DEFAULT_LEVELS)
    }

    /// Parse calibration rows (`voltage,k,variance[,mean]`) for the declared levels.
    pub fn read_csv<R: Read>(reader: R, volts: &[f64]) -> Result<Self> {
        let mut table = Self::new(volts)?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
        if names.len() < 3 || names[0] != "voltage" || names[1] != "k" || names[2] != "variance" {
            return Err(Error::Parse(format!(
                "variance CSV header must be voltage,k,variance[,mean], found {}",
                names.join(",")
            )));
        }
        let has_mean = names.get(3).is_some_and(|n| n == "mean");
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            let field = |j: usize| rec.get(j).filter(|s| !s.is_empty());
            let malformed = |reason: String| Error::MalformedRow { row, reason };
            let expected = if has_mean { 4 } else { 3 };
            if rec.len() != expected {
                return Err(malformed(format!(
                    "expected {expected} fields, found {}",
                    rec.len()
                )));
            }
            let volts: f64 = field(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed("bad voltage".into()))?;
            let k: u64 = field(1)
                .and_then(|s| s.parse().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| malformed("k must be a positive integer".into()))?;
            let variance: f64 = field(2)
                .and_then(|s| s.parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| malformed("bad variance".into()))?;
            let mean = if has_mean {
                Some(
                    field(3)
                        .and_then(|s| s.parse::<f64>().ok())
                        .filter(|m| m.is_finite())
                        .ok_or_else(|| malformed("bad mean".into()))?,
                )
            } else {
                None
            };
            if variance < 0.0 {
                return Err(Error::NegativeVariance { volts, k, variance });
            }
            let code = table.code_of(volts)?;
            if table.is_nominal(code) {
                if variance != 0.0 || mean.is_some_and(|m| m != 0.0) {
                    return Err(malformed(format!(
                        "nominal level {volts} V is exact and cannot carry errors"
                    )));
                }
                continue;
            }
            table.state[code as usize].rows.push(CalibrationRow {
                k,
                variance: T::lit(variance),
                mean: mean.map(T::lit),
            });
        }
        for lvl in table.non_nominal() {
            if table.state[lvl.code as usize].rows.is_empty() {
                return Err(Error::MissingLevel(lvl.volts));
            }
        }
        Ok(table)
    }

    /// Load a variance CSV file for the declared levels.
    pub fn load(path: impl AsRef<Path>, volts: &[f64]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, volts)
    }

    /// Fit single-PE statistics from the calibration rows of every
    /// non-nominal level. Variance is the least-squares slope through the
    /// origin, `Σ k·var / Σ k²`; mean is the average of `mean / k` over rows
    /// that carry a mean, otherwise 0.
    pub fn fit_linear_scaling(&self) -> Result<Self> {
        let mut out = self.clone();
        for lvl in self.non_nominal() {
            let s = &mut out.state[lvl.code as usize];
            if s.rows.len() < 2 {
                return Err(Error::InsufficientRows {
                    volts: lvl.volts,
                    rows: s.rows.len(),
                });
            }
            let mut skv = T::zero();
            let mut skk = T::zero();
            for r in &s.rows {
                let k = T::lit(r.k as f64);
                skv += k * r.variance;
                skk += k * k;
            }
            let slope = skv / skk;
            let sq: T = s
                .rows
                .iter()
                .map(|r| {
                    let e = r.variance - slope * T::lit(r.k as f64);
                    e * e
                })
                .sum();
            let means: Vec<T> = s
                .rows
                .iter()
                .filter_map(|r| r.mean.map(|m| m / T::lit(r.k as f64)))
                .collect();
            let mean = if means.is_empty() {
                T::zero()
            } else {
                means.iter().copied().sum::<T>() / T::from_count(means.len())
            };
            s.variance = Some(slope);
            s.mean = Some(mean);
            s.residual = Some((sq / T::from_count(s.rows.len())).sqrt());
        }
        Ok(out)
    }

    pub fn levels(&self) -> &[VoltageLevel] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn nominal(&self) -> VoltageLevel {
        *self.levels.last().expect("nonempty")
    }

    pub fn is_nominal(&self, code: u32) -> bool {
        code as usize + 1 == self.levels.len()
    }

    /// Levels below nominal, ascending.
    pub fn non_nominal(&self) -> impl Iterator<Item = VoltageLevel> + '_ {
        self.levels[..self.levels.len() - 1].iter().copied()
    }

    pub fn level(&self, code: u32) -> Result<VoltageLevel> {
        self.levels
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("voltage code {code} not in table")))
    }

    pub fn code_of(&self, volts: f64) -> Result<u32> {
        self.levels
            .iter()
            .find(|l| (l.volts - volts).abs() < VOLT_TOL)
            .map(|l| l.code)
            .ok_or(Error::UnknownVoltage(volts))
    }

    pub fn is_fitted(&self) -> bool {
        self.state.iter().all(|s| s.variance.is_some())
    }

    pub fn calibration_rows(&self, code: u32) -> &[CalibrationRow<T>] {
        &self.state[code as usize].rows
    }

    pub fn single_pe_variance(&self, code: u32) -> Result<T> {
        let lvl = self.level(code)?;
        self.state[code as usize]
            .variance
            .ok_or(Error::Unfitted(lvl.volts))
    }

    pub fn single_pe_mean(&self, code: u32) -> Result<T> {
        let lvl = self.level(code)?;
        self.state[code as usize]
            .mean
            .ok_or(Error::Unfitted(lvl.volts))
    }

    /// RMS residual of the linear fit, when fitted from calibration rows.
    pub fn fit_residual(&self, code: u32) -> Option<T> {
        self.state.get(code as usize).and_then(|s| s.residual)
    }

    /// Mean and variance of the summed error of a column of `k` PEs.
    pub fn column_error_stats(&self, code: u32, k: u64) -> Result<(T, T)> {
        let mean = self.single_pe_mean(code)?;
        let var = self.single_pe_variance(code)?;
        let k = T::lit(k as f64);
        Ok((k * mean, k * var))
    }

    /// Sampler for one level's per-PE error.
    pub fn sampler(&self, code: u32) -> Result<PeSampler<T>> {
        Ok(PeSampler {
            mean: self.single_pe_mean(code)?,
            std: self.single_pe_variance(code)?.sqrt(),
        })
    }

    /// One PE error at level `code`, rounded to an integer.
    pub fn sample_pe_error<R: Rng + ?Sized>(&self, code: u32, rng: &mut R) -> Result<i64> {
        Ok(self.sampler(code)?.sample(rng))
    }

    /// Sum of `k` independent PE errors at level `code`.
    pub fn sample_column_error<R: Rng + ?Sized>(
        &self,
        code: u32,
        k: u64,
        rng: &mut R,
    ) -> Result<i64> {
        let s = self.sampler(code)?;
        Ok((0..k).map(|_| s.sample(rng)).sum())
    }

    pub fn summary(&self) -> Vec<LevelSummary> {
        self.levels
            .iter()
            .zip(&self.state)
            .map(|(l, s)| LevelSummary {
                code: l.code,
                volts: l.volts,
                nominal: self.is_nominal(l.code),
                single_pe_mean: s.mean.map(Real::as_f64),
                single_pe_variance: s.variance.map(Real::as_f64),
                fit_rms_residual: s.residual.map(Real::as_f64),
                calibration_rows: s.rows.len(),
            })
            .collect()
    }
}

/// Rounded Gaussian error source for one voltage level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeSampler<T> {
    mean: T,
    std: T,
}

impl<T: Real> PeSampler<T> {
    /// True when every draw is 0 (the rng is never touched).
    pub fn is_exact(&self) -> bool {
        self.std == T::zero() && self.mean == T::zero()
    }

    pub fn std(&self) -> T {
        self.std
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.std == T::zero() {
            return round_to_i64(self.mean);
        }
        round_to_i64(self.mean + self.std * T::standard_normal(rng))
    }
}
