use super::instance::{AssignmentInstance, VoltageAssignment};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest search space [`brute_force_assignment`] accepts.
pub const MAX_COMBINATIONS: f64 = 1e8;

struct Search<'a, T> {
    inst: &'a AssignmentInstance<T>,
    codes: Vec<u32>,
    best: Option<(T, T, Vec<u32>)>,
}

impl<T: Real> Search<'_, T> {
    fn visit(&mut self, j: usize, c: T, w: T) {
        if j == self.codes.len() {
            let better = match &self.best {
                None => true,
                Some((bc, bw, _)) => c < *bc || (c == *bc && w < *bw),
            };
            if better {
                self.best = Some((c, w, self.codes.clone()));
            }
            return;
        }
        for code in 0..self.inst.levels().len() as u32 {
            let nw = w + self.inst.weight(j, code);
            // weights are nonnegative, so an overfull prefix stays overfull
            if nw > self.inst.budget() {
                continue;
            }
            self.codes[j] = code;
            self.visit(j + 1, c + self.inst.cost(j, code), nw);
        }
    }
}

/// Exhaustive optimum in lexicographic order, with the same tie-breaking as
/// [`super::solve_assignment`].
pub fn brute_force_assignment<T: Real>(
    inst: &AssignmentInstance<T>,
) -> Result<VoltageAssignment<T>> {
    let combos = (inst.levels().len() as f64).powi(inst.neuron_count() as i32);
    if combos > MAX_COMBINATIONS {
        return Err(Error::TooLarge(combos));
    }
    let mut s = Search {
        inst,
        codes: vec![0; inst.neuron_count()],
        best: None,
    };
    s.visit(0, T::zero(), T::zero());
    let (_, _, codes) = s.best.expect("all-nominal is always feasible");
    inst.assignment(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::VoltageLevel;

    fn levels(n: usize) -> Vec<VoltageLevel> {
        (0..n)
            .map(|i| VoltageLevel {
                code: i as u32,
                volts: 0.5 + 0.1 * i as f64,
            })
            .collect()
    }

    #[test]
    fn picks_cheaper_level_when_budget_allows() {
        let inst = AssignmentInstance::new(
            vec![0],
            vec![1],
            levels(2),
            vec![vec![0.5, 0.6]],
            vec![vec![1.0, 0.0]],
            2.0,
        )
        .unwrap();
        assert_eq!(brute_force_assignment(&inst).unwrap().codes, vec![0]);
    }

    #[test]
    fn empty_instance_has_zero_objective() {
        let inst =
            AssignmentInstance::<f64>::new(vec![], vec![], levels(2), vec![], vec![], 0.0).unwrap();
        let a = brute_force_assignment(&inst).unwrap();
        assert!(a.is_empty());
        assert_eq!(a.objective, 0.0);
    }

    #[test]
    fn refuses_huge_instances() {
        let n = 14;
        let inst = AssignmentInstance::new(
            (0..n).collect(),
            vec![1; n],
            levels(4),
            vec![vec![0.5, 0.6, 0.7, 0.8]; n],
            vec![vec![3.0, 2.0, 1.0, 0.0]; n],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            brute_force_assignment(&inst),
            Err(Error::TooLarge(_))
        ));
    }
}
