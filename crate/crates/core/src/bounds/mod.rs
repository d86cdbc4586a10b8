//! Certified quantities derived from the controlled dynamics: envelopes,
//! control-effort bounds and robustness margins.

pub mod effort;
pub mod envelope;
pub mod robust;
pub mod solver;

pub use effort::{solve_q, solve_r_lower, solve_r_upper, u_min, EffortBoundProblem, EffortReport, EffortSettings};
pub use envelope::{entry_time_estimate, envelope_z, EnvelopeResult, ExponentialBound, Side};
pub use robust::{
    find_min_delta, find_min_delta_worst_case, MarginRule, robust_delta_check, robust_delta_check_worst_case, robust_lhs, robust_lhs_worst_case,
};
