//! Single-qubit state preparation under pure dephasing.
//!
//! The toolkit compares two ways of steering a qubit from an initial pure
//! state to a pure target with one controllable Rabi drive while a white
//! dephasing noise acts:
//!
//! * the **mean-path** route ([`mp`]) evolves the averaged (Lindblad) state
//!   and searches numerically for drives that maximize the final-state
//!   fidelity — a single-amplitude scan, gradient ascent over piecewise
//!   pulses, and a randomized-Fourier simplex search;
//! * the **most-likely-path** route ([`mlp`]) asks instead for the control
//!   under which the most probable noise realization carries the qubit
//!   exactly onto the target, which admits closed-form drive and duration
//!   for arbitrary boundary states.
//!
//! [`trajectory`] unravels the averaged dynamics into noisy pure-state
//! trajectories and scores controls by **success rate** — the share of
//! trajectories ending within an infidelity tolerance of the target — and
//! [`bench`] packages the comparison experiments (success-rate sweeps over
//! target states and dephasing rates, a multi-pulse comparison table,
//! tolerance calibration from finite-ensemble fluctuations, and trajectory
//! diagnostics).
//!
//! Everything is deterministic given a master seed: trajectories draw from
//! counter-based per-index streams, so any degree of parallelism produces
//! bit-identical results.

pub mod bench;
pub mod bloch;
pub mod cli;
pub mod error;
mod jsonfmt;
pub mod mlp;
pub mod mp;
pub mod pulse;
pub mod rng;
pub mod trajectory;

pub use bloch::{
    exact_rotation_step, fidelity, ito_mean_step, lindblad_evolve, lindblad_evolve_exact,
    unravelled_step, BlochVector, ConjugateVector, SystemParams,
};
pub use error::{Error, Result};
pub use mlp::{
    analytic_path, geometric_solve, optimal_rabi, optimal_time, verify_variational_solution,
    BoundaryPair, MlpControl,
};
pub use mp::{
    crab_optimize, grape_optimize, objective, optimize_single_pulse, OptimizationProblem,
    OptimizationResult,
};
pub use pulse::{ControlPulse, PulseSegment};
pub use trajectory::{
    evolve_with_noise, final_state_histogram, path_log_likelihood, sample_noise,
    simulate_ensemble, simulate_ensemble_renormalized, simulate_trajectory, success_rate, Axis,
    EnsembleResult, Histogram, NoisePath, SuccessRateReport,
};
