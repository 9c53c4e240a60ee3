//! Optimisers: the expected-shortfall irrelevance construction, the
//! pointwise concave solver and the two-stage limited-liability problem.

mod digital;
mod limited;
mod pointwise;
mod sweep;

pub use digital::{digital_for_target, DigitalConstruction, DigitalOptions, EsFloor};
pub use limited::{
    binding_criterion, left_problem, right_problem, solve_limited_liability, BindingCriterion, LeftSolution,
    LimitedOptions, RightSolution, SolveReport,
};
pub use pointwise::pointwise_concave_solve;
pub use sweep::{divergence_sweep, is_divergent, SweepRow};
