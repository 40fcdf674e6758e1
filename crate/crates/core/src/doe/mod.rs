//! Sequential design of experiments.

pub mod acquisition;
pub mod design;
pub mod run;

pub use acquisition::{acquisition, monte_carlo_acquisition, sigma_tilde, AcquisitionValue, Acquirer};
pub use design::{candidate_set, initial_design, latin_hypercube};
pub use run::{
    derive_seed, estimate_dataset, run_loop, DoeConfig, DoeTrace, RunOutput, RunState, SampleSize, Simulator, TraceRow,
};
