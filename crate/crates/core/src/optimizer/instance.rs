use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::{ErrorModelTable, VoltageLevel};
use crate::scalar::Real;
use crate::sensitivity::SensitivityMap;

/// Objective coefficient per voltage level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// `c = v`.
    #[default]
    LinearV,
    /// `c = v²`, proportional to dynamic energy.
    QuadraticV,
}

impl ObjectiveMode {
    pub fn cost<T: Real>(self, volts: f64) -> T {
        let v = T::lit(volts);
        match self {
            ObjectiveMode::LinearV => v,
            ObjectiveMode::QuadraticV => v * v,
        }
    }
}

/// Multiple-choice knapsack over neurons: pick one level per neuron,
/// minimizing total cost with total weight within the budget.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentInstance<T> {
    neuron_ids: Vec<usize>,
    fan_in: Vec<usize>,
    levels: Vec<VoltageLevel>,
    cost: Vec<Vec<T>>,
    weight: Vec<Vec<T>>,
    budget: T,
}

impl<T: Real> AssignmentInstance<T> {
    /// Validate and build an instance. `levels` must ascend in voltage with the
    /// nominal level last; `cost` and `weight` are `[neuron][level]`.
    pub fn new(
        neuron_ids: Vec<usize>,
        fan_in: Vec<usize>,
        levels: Vec<VoltageLevel>,
        cost: Vec<Vec<T>>,
        weight: Vec<Vec<T>>,
        budget: T,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let n = neuron_ids.len();
        if fan_in.len() != n || cost.len() != n || weight.len() != n {
            return bad("neuron, fan-in, cost and weight counts differ".into());
        }
        if levels.is_empty() {
            return bad("no voltage levels".into());
        }
        for (i, l) in levels.iter().enumerate() {
            if l.code as usize != i {
                return bad(format!(
                    "level codes must be dense, found {} at {i}",
                    l.code
                ));
            }
            if i > 0 && !(l.volts > levels[i - 1].volts) {
                return bad("levels must ascend in voltage".into());
            }
        }
        if budget.is_nan() || budget < T::zero() {
            return bad(format!("budget {budget} must be >= 0"));
        }
        let nominal = levels.len() - 1;
        for (i, (c, w)) in cost.iter().zip(&weight).enumerate() {
            if c.len() != levels.len() || w.len() != levels.len() {
                return bad(format!(
                    "neuron {} has the wrong number of options",
                    neuron_ids[i]
                ));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return bad(format!("neuron {} has a non-finite cost", neuron_ids[i]));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= T::zero())) {
                return bad(format!(
                    "neuron {} has a negative or non-finite weight",
                    neuron_ids[i]
                ));
            }
            if w[nominal] != T::zero() {
                return bad(format!(
                    "neuron {} has nonzero weight at nominal",
                    neuron_ids[i]
                ));
            }
            if w.windows(2).any(|p| p[1] > p[0]) {
                return bad(format!(
                    "neuron {}: weight must not increase with voltage",
                    neuron_ids[i]
                ));
            }
        }
        Ok(Self {
            neuron_ids,
            fan_in,
            levels,
            cost,
            weight,
            budget,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_ids.len()
    }

    pub fn neuron_ids(&self) -> &[usize] {
        &self.neuron_ids
    }

    pub fn fan_in(&self) -> &[usize] {
        &self.fan_in
    }

    pub fn levels(&self) -> &[VoltageLevel] {
        &self.levels
    }

    pub fn nominal_code(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn cost(&self, n: usize, code: u32) -> T {
        self.cost[n][code as usize]
    }

    pub fn weight(&self, n: usize, code: u32) -> T {
        self.weight[n][code as usize]
    }

    pub fn costs(&self) -> &[Vec<T>] {
        &self.cost
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weight
    }

    pub fn budget(&self) -> T {
        self.budget
    }

    pub fn with_budget(&self, budget: T) -> Result<Self> {
        Self::new(
            self.neuron_ids.clone(),
            self.fan_in.clone(),
            self.levels.clone(),
            self.cost.clone(),
            self.weight.clone(),
            budget,
        )
    }

    /// Objective and total weight of `codes`, summed in neuron order.
    pub fn evaluate(&self, codes: &[u32]) -> Result<(T, T)> {
        if codes.len() != self.neuron_count() {
            let missing = self.neuron_ids.get(codes.len()).copied().unwrap_or(0);
            return Err(Error::MissingNeuron(missing));
        }
        let mut c = T::zero();
        let mut w = T::zero();
        for (n, &code) in codes.iter().enumerate() {
            if code as usize >= self.levels.len() {
                return Err(Error::InvalidInstance(format!(
                    "voltage code {code} out of range"
                )));
            }
            c += self.cost(n, code);
            w += self.weight(n, code);
        }
        Ok((c, w))
    }

    /// Package a code vector as an assignment.
    pub fn assignment(&self, codes: Vec<u32>) -> Result<VoltageAssignment<T>> {
        let (objective, predicted_mse) = self.evaluate(&codes)?;
        Ok(VoltageAssignment {
            neuron_ids: self.neuron_ids.clone(),
            volts: codes
                .iter()
                .map(|&c| self.levels[c as usize].volts)
                .collect(),
            codes,
            objective,
            predicted_mse,
            budget: self.budget,
            feasible: predicted_mse <= self.budget,
        })
    }

    pub fn all_nominal(&self) -> VoltageAssignment<T> {
        self.assignment(vec![self.nominal_code(); self.neuron_count()])
            .expect("valid codes")
    }
}

/// Build the instance from a sensitivity map and fitted error model.
///
/// Weight of neuron `n` at level `v` is `Σ_o ES[n][o]² · k_n · σ²_v`, the
/// predicted increase of the summed output error variance. The budget is
/// `mse_ub_relative × baseline_mse`.
pub fn build_instance<T: Real>(
    map: &SensitivityMap<T>,
    table: &ErrorModelTable<T>,
    mse_ub_relative: T,
    baseline_mse: T,
    mode: ObjectiveMode,
) -> Result<AssignmentInstance<T>> {
    if !(baseline_mse >= T::zero()) || !(mse_ub_relative >= T::zero()) {
        return Err(Error::InvalidInstance(
            "baseline MSE and relative bound must be >= 0".into(),
        ));
    }
    if map.fan_in.len() != map.len() || map.es.len() != map.len() {
        return Err(Error::InvalidInstance(
            "sensitivity map is inconsistent".into(),
        ));
    }
    let variances = table
        .levels()
        .iter()
        .map(|l| table.single_pe_variance(l.code))
        .collect::<Result<Vec<T>>>()?;
    let mut cost = Vec::with_capacity(map.len());
    let mut weight = Vec::with_capacity(map.len());
    for n in 0..map.len() {
        let es2 = map.squared_sum(n);
        let k = T::from_count(map.fan_in[n]);
        cost.push(table.levels().iter().map(|l| mode.cost(l.volts)).collect());
        weight.push(variances.iter().map(|&v| es2 * k * v).collect());
    }
    let budget = if baseline_mse == T::zero() {
        T::zero()
    } else {
        mse_ub_relative * baseline_mse
    };
    AssignmentInstance::new(
        map.neurons.iter().map(|n| n.id).collect(),
        map.fan_in.clone(),
        table.levels().to_vec(),
        cost,
        weight,
        budget,
    )
}

/// One voltage level per neuron.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VoltageAssignment<T> {
    pub neuron_ids: Vec<usize>,
    pub codes: Vec<u32>,
    pub volts: Vec<f64>,
    pub objective: T,
    pub predicted_mse: T,
    pub budget: T,
    pub feasible: bool,
}

impl<T: Real> VoltageAssignment<T> {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// CSV with columns `neuron_id,voltage_code,volts`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["neuron_id", "voltage_code", "volts"])?;
        for ((id, code), volts) in self.neuron_ids.iter().zip(&self.codes).zip(&self.volts) {
            w.write_record([id.to_string(), code.to_string(), volts.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `Σ_n w[n][chosen(n)]` for an assignment covering every neuron.
pub fn predicted_mse<T: Real>(instance: &AssignmentInstance<T>, codes: &[u32]) -> Result<T> {
    instance.evaluate(codes).map(|(_, w)| w)
}
