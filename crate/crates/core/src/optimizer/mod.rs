//! Voltage assignment: build the knapsack instance from sensitivities and the
//! error model, solve it exactly, and report energy.

mod brute;
mod energy;
mod instance;
mod solver;

pub use brute::{brute_force_assignment, MAX_COMBINATIONS};
pub use energy::{energy_report, EnergyParams, EnergyReport};
pub use instance::{
    build_instance, predicted_mse, AssignmentInstance, ObjectiveMode, VoltageAssignment,
};
pub use solver::solve_assignment;
