use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean absolute error.
    Mae,
    /// Mean squared error.
    Mse,
    /// Mean relative error distance, `|t - o| / |t|` averaged over nonzero targets.
    Mred,
    /// Cross-entropy against class (or soft) targets; outputs must be probabilities.
    Ce,
}

/// Loss between a target vector and an output vector.
///
/// MRED skips terms with `t_i == 0` and averages over the remaining ones;
/// with no nonzero target it returns `+inf`. CE returns `+inf` when a class
/// with positive target weight has a nonpositive predicted probability.
pub fn loss<T: Real>(kind: LossKind, targets: &[T], outputs: &[T]) -> Result<T> {
    if targets.len() != outputs.len() {
        return Err(Error::Dimension(format!(
            "{} targets vs {} outputs",
            targets.len(),
            outputs.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Dimension("empty loss input".into()));
    }
    let n = T::from_count(targets.len());
    let pairs = targets.iter().zip(outputs).map(|(&t, &o)| (t, o));
    Ok(match kind {
        LossKind::Mae => pairs.map(|(t, o)| (t - o).abs()).sum::<T>() / n,
        LossKind::Mse => pairs.map(|(t, o)| (t - o) * (t - o)).sum::<T>() / n,
        LossKind::Mred => {
            let (total, count) = pairs
                .filter(|(t, _)| *t != T::zero())
                .fold((T::zero(), 0usize), |(s, c), (t, o)| {
                    (s + ((t - o) / t).abs(), c + 1)
                });
            if count == 0 {
                T::infinity()
            } else {
                total / T::from_count(count)
            }
        }
        LossKind::Ce => {
            let mut total = T::zero();
            for (t, o) in pairs {
                if t == T::zero() {
                    continue;
                }
                if o <= T::zero() {
                    return Ok(T::infinity());
                }
                total -= t * o.ln();
            }
            total
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(loss(LossKind::Mse, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(loss(LossKind::Mse, &[2.0], &[0.0]).unwrap(), 4.0);
        assert_eq!(
            loss(LossKind::Ce, &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            0.0
        );
        assert_eq!(loss(LossKind::Mae, &[1.0, -1.0], &[0.0, 1.0]).unwrap(), 1.5);
    }

    #[test]
    fn mred_skips_zero_targets() {
        // terms: |2-1|/2 = 0.5 ; t=0 skipped ; |4-5|/4 = 0.25
        let v = loss::<f64>(LossKind::Mred, &[2.0, 0.0, 4.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((v - 0.375).abs() < 1e-15);
        assert!(loss::<f64>(LossKind::Mred, &[0.0, 0.0], &[1.0, 1.0])
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn ce_with_zero_probability_is_infinite() {
        let v = loss::<f64>(LossKind::Ce, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(v.is_infinite() && v > 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(loss(LossKind::Mae, &[1.0f64], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn mse_zero_iff_equal_and_mae_squared_bounded(
            pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20)
        ) {
            let (t, o): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mse = loss(LossKind::Mse, &t, &o).unwrap();
            let mae = loss(LossKind::Mae, &t, &o).unwrap();
            prop_assert!(mae * mae <= mse * (1.0 + 1e-12) + 1e-12);
            prop_assert_eq!(loss(LossKind::Mse, &t, &t).unwrap(), 0.0);
            if t != o {
                prop_assert!(mse > 0.0);
            }
        }
    }
}
