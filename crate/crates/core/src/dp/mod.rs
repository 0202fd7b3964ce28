//! Discounted dynamic program over the SoC grid and threshold extraction.

mod discrete;
mod grid;
mod policy;
mod solve;
mod value;

pub use discrete::{DiscreteModel, TransitionMatrix};
pub use grid::SocGrid;
pub use policy::ThresholdPolicy;
pub use solve::{
    bellman_operator, build_transition_matrix, clamp_deviation, evaluate_linear, greedy_band,
    policy_evaluation, solve, solve_thresholds_by_roots, solve_thresholds_direct, u_of_pi,
    value_iteration, DirectSolution, SolveReport, ValueIteration, DEFAULT_GRID, DEFAULT_MAX_ITER,
};
pub use value::ValueFunction;
