use serde::Serialize;

use super::instance::VoltageAssignment;
use crate::error::{Error, Result};
use crate::model::QuantizedModel;
use crate::scalar::Real;

/// Relative PE energy model: only the multiplier share scales with `v²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParams<T> {
    pub v_nominal: T,
    pub multiplier_share: T,
    /// Weight each neuron by its fan-in (MACs per inference) instead of 1.
    pub weight_by_fan_in: bool,
}

impl<T: Real> Default for EnergyParams<T> {
    fn default() -> Self {
        Self {
            v_nominal: T::lit(0.8),
            multiplier_share: T::lit(0.56),
            weight_by_fan_in: true,
        }
    }
}

impl<T: Real> EnergyParams<T> {
    /// Energy of one PE at `volts` relative to nominal.
    pub fn pe_factor(&self, volts: T) -> T {
        let r = volts / self.v_nominal;
        T::one() - self.multiplier_share + self.multiplier_share * r * r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport<T> {
    pub per_neuron: Vec<T>,
    pub total: T,
    pub total_nominal: T,
    pub saving: T,
}

pub fn energy_report<T: Real>(
    assignment: &VoltageAssignment<T>,
    model: &QuantizedModel,
    params: &EnergyParams<T>,
) -> Result<EnergyReport<T>> {
    if !(params.multiplier_share >= T::zero() && params.multiplier_share <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "multiplier share {} outside [0, 1]",
            params.multiplier_share
        )));
    }
    if !(params.v_nominal > T::zero()) {
        return Err(Error::InvalidParameter(
            "nominal voltage must be positive".into(),
        ));
    }
    let mut per_neuron = Vec::with_capacity(assignment.len());
    let mut total = T::zero();
    let mut total_nominal = T::zero();
    for (&id, &v) in assignment.neuron_ids.iter().zip(&assignment.volts) {
        let macs = if params.weight_by_fan_in {
            T::from_count(model.fan_in(id).ok_or(Error::InvalidNeuron(id))?)
        } else {
            T::one()
        };
        let e = macs * params.pe_factor(T::lit(v));
        per_neuron.push(e);
        total += e;
        total_nominal += macs;
    }
    let saving = if total_nominal > T::zero() {
        T::one() - total / total_nominal
    } else {
        T::zero()
    };
    Ok(EnergyReport {
        per_neuron,
        total,
        total_nominal,
        saving,
    })
}
