// Negated comparisons are used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aging;
pub mod error;
pub mod error_model;
pub mod model;
pub mod optimizer;
pub mod scalar;
pub mod sensitivity;
pub mod systolic;

pub use error::{Error, Result};
pub use model::mnist::load_mnist_idx;
pub use model::{Activation, Dataset, Layer, LossKind, NeuronRef, QuantizedModel, Targets};
pub use scalar::Real;

pub use error_model::VoltageLevel;

pub type ErrorModelTable = error_model::ErrorModelTable<f64>;
pub type SensitivityMap = sensitivity::SensitivityMap<f64>;
pub type AssignmentInstance = optimizer::AssignmentInstance<f64>;
pub type VoltageAssignment = optimizer::VoltageAssignment<f64>;
pub type SimulationReport = systolic::SimulationReport<f64>;
pub type AgingParams = aging::AgingParams<f64>;
