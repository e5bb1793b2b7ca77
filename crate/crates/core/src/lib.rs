//! Optimal control of the discrete Poisson equation under state constraints
//! handled by exact (infinite-valued) penalization.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cone_qp;
pub mod constraints;
pub mod error;
pub mod grid;
pub mod optimizer;
pub mod oracle;
pub mod pde;
pub mod region;

pub use constraints::{
    is_feasible, max_feasible_step, min_norm_subgradient, normal_cone_box, penalized_cost,
    tracking_cost, ActiveSet, Activity, Bounds, ConeInterval, Constraint, Cost, Feasibility,
    Selection, SubgradientSelector, Violation, DEFAULT_BETA,
};
pub use error::{Error, Result};
pub use grid::{build_grid, inner_product, DomainSpec, Field, Grid, NodeKind, Quadrant};
pub use optimizer::{
    armijo_search, descend, descend_with, find_feasible_start, kkt_residual, smooth_gradient,
    ArmijoParams, DescentParams, DescentTrace, InitialStep, IterateView, IterationRecord,
    LineSearch, Termination,
};
pub use oracle::{
    coverage_scan_oracle, enumerate_box_qp, wi_qp_oracle, BoxQpSolution, DenseProblem, NodePattern,
    ScanResult, WiQpSolution,
};
pub use pde::{DiscreteOperator, Preconditioner, DEFAULT_SOLVER_TOL};
pub use region::Region;
