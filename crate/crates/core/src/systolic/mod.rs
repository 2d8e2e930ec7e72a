//! Weight-stationary systolic array with per-column supply voltages.
//!
//! Each column of the array computes one neuron. The voltage of a column is
//! stored as selection bits above the 8-bit weight in every weight-memory
//! word, and only the multipliers of overscaled columns produce errors.

mod cycles;
mod inference;
mod memory;
mod sim;

pub use cycles::{cycle_count, tile_cycles, CycleCount};
pub use inference::{
    inference_cycles, output_error_variance, simulate_inference, SimConfig, SimMode,
    SimulationReport, Violation,
};
pub use memory::{
    decode_voltage, encode_weight_memory, encode_word, v_bits_for, LayerMemory, WeightMemory,
};
pub use sim::{layer_cycles, simulate_mm, MmOutput};
