//! Prioritized frequency response from populations of thermostatically
//! controlled loads: device dynamics, fitness scoring, threshold allocation,
//! synthetic frequency events, closed-loop simulation and the experiment
//! harness.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the harness and CLI use throughout.

// `!(x > 0)` style guards are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod device;
pub mod error;
pub mod event;
pub mod fitness;
pub mod harness;
pub mod io;
pub mod scalar;
pub mod sim;

pub use allocation::{
    assign_thresholds, discrete_error_bound, max_guaranteed_capacity, prioritize, required_capacity,
    select_committed, shuffled, success_probability, Candidate, ResponseCurveSpec, Selection, ThresholdAssignment,
    ThresholdedDevice, Tolerance,
};
pub use device::{AcParams, DeviceKind, DeviceParams, DeviceRecord, EwhParams, GenericDeviceParams, Thermal};
pub use error::{Error, Result};
pub use event::{ingest, synthesize, Dip, EventSpec, FrequencyTrace};
pub use fitness::{availability, availability_over, availability_under, fitness, fitness_table, FitnessReport, QualityParams, Service};
pub use scalar::Scalar;
pub use sim::{
    compute_rmvt, evaluate_sampling_error, run, sampling_error_estimate, static_droop_sweep, ResponseMode, RmvtMode,
    SimConfig, SimulationResult,
};

pub type Device = DeviceRecord<f64>;
pub type Params = DeviceParams<f64>;
pub type Report = FitnessReport<f64>;
pub type Curve = ResponseCurveSpec<f64>;
pub type Assignment = ThresholdAssignment<f64>;
pub type Trace = FrequencyTrace<f64>;
pub type Event = EventSpec<f64>;
pub type SimResult = SimulationResult<f64>;

/// Single-precision device, for memory-bound ensembles.
pub type Device32 = DeviceRecord<f32>;
