use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Per-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    /// Whether the activation can produce negative values, which decides the
    /// signed (`[-128, 127]`) or unsigned (`[0, 255]`) 8-bit range used when
    /// its output feeds another layer.
    pub fn is_signed(self) -> bool {
        matches!(self, Activation::Linear | Activation::Tanh)
    }

    pub fn quant_range(self) -> (i32, i32) {
        if self.is_signed() {
            (-128, 127)
        } else {
            (0, 255)
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "identity" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "softmax" => Ok(Activation::Softmax),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

/// Scalar activation. Softmax is vector-valued and handled by [`softmax`];
/// here it acts as the identity.
///
/// Sigmoid and tanh saturate cleanly: `sigmoid(x)` is evaluated through
/// `exp(-|x|)` so it never overflows and returns exactly 0 or 1 only once the
/// result rounds there.
pub fn activation<T: Real>(kind: Activation, x: T) -> T {
    match kind {
        Activation::Linear | Activation::Softmax => x,
        Activation::Relu => {
            if x > T::zero() {
                x
            } else {
                T::zero()
            }
        }
        Activation::Sigmoid => {
            let e = (-x.abs()).exp();
            if x >= T::zero() {
                T::one() / (T::one() + e)
            } else {
                e / (T::one() + e)
            }
        }
        Activation::Tanh => x.tanh(),
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(xs: &[T]) -> Vec<T> {
    if xs.is_empty() {
        return Vec::new();
    }
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = xs.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Apply a layer activation to a whole pre-activation vector.
pub fn activate_vector<T: Real>(kind: Activation, pre: &[T]) -> Vec<T> {
    match kind {
        Activation::Softmax => softmax(pre),
        k => pre.iter().map(|&x| activation(k, x)).collect(),
    }
}
