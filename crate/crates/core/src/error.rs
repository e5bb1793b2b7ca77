use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field has {got} values but the grid has {expected} interior nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid has no interior nodes")]
    NoInteriorNodes,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradients did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("state is infeasible for the constraint (overshoot {overshoot:.3e})")]
    Infeasible { overshoot: f64 },

    #[error("no feasible starting control found")]
    NoFeasibleStart,

    #[error("oracle found no feasible candidate")]
    EmptyFeasible,

    #[error("singular linear system")]
    SingularSystem,

    #[error("problem too large for this oracle: {size} unknowns (limit {limit})")]
    ProblemTooLarge { size: usize, limit: usize },
}
