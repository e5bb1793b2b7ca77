//! Refinement sweeps: one descent run per grid size.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statecon::{
    build_grid, descend, find_feasible_start, inner_product, kkt_residual, Bounds, Constraint,
    DiscreteOperator, Field, Grid, Region, Termination,
};

use crate::config::{ConfigError, ConstraintKind, ExperimentConfig};
use crate::dump;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid size {size}: {source}")]
    Solver {
        size: usize,
        source: statecon::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report has no rows")]
    EmptyReport,
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 3,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub grid_size: usize,
    pub node_count: usize,
    pub opt_cost: f64,
    pub iters: usize,
    pub pde_solves: usize,
    pub kkt_residual: f64,
    pub constraint_value: f64,
    pub termination: Termination,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
}

impl RunReport {
    /// 0 when every run converged, 3 on a solver failure, 2 if a run hit
    /// the iteration cap.
    pub fn exit_code(&self) -> i32 {
        if self
            .rows
            .iter()
            .any(|r| r.termination == Termination::SolverFailure)
        {
            3
        } else if self
            .rows
            .iter()
            .any(|r| r.termination == Termination::MaxIters)
        {
            2
        } else {
            0
        }
    }
}

/// Everything needed to run one grid size.
pub struct Problem {
    pub grid: Arc<Grid>,
    pub op: DiscreteOperator,
    pub target: Field,
    pub constraint: Constraint,
    /// Weight support or coverage region.
    pub region: Option<Region>,
}

pub fn build_problem(cfg: &ExperimentConfig, size: usize) -> Result<Problem, RunError> {
    let solver = |source| RunError::Solver { size, source };
    let grid = build_grid(&cfg.domain.spec(), size).map_err(solver)?;
    let op = DiscreteOperator::new(&grid)
        .with_tolerance(cfg.solver.pde_tol)
        .and_then(|op| op.with_preconditioner(cfg.solver.preconditioner()))
        .map_err(solver)?;
    let target = op.build_target().map_err(solver)?;

    let c = &cfg.constraint;
    let region = c.region.map(|r| r.region());
    let lower = c.lower.unwrap_or(f64::NEG_INFINITY);
    let mut upper = c.upper.unwrap_or(f64::INFINITY);
    let constraint = match c.kind {
        ConstraintKind::Box => Constraint::box_constraint(bounds(lower, upper, size)?),
        ConstraintKind::WeightedIntegral => {
            let weight = Field::indicator(&grid, region.as_ref().expect("validated"));
            if let Some(factor) = c.upper_from_target {
                upper = factor * inner_product(&weight, &target).map_err(solver)?;
            }
            Constraint::weighted_integral(weight, bounds(lower, upper, size)?)
        }
        ConstraintKind::TotalCoverage => {
            let nodes = grid.region_nodes(region.as_ref().expect("validated"));
            let coverage = c.coverage.expect("validated");
            Constraint::total_coverage(&grid, nodes, bounds(lower, upper, size)?, coverage)
                .map_err(solver)?
        }
    };
    Ok(Problem {
        grid,
        op,
        target,
        constraint,
        region,
    })
}

fn bounds(lower: f64, upper: f64, size: usize) -> Result<Bounds, RunError> {
    Bounds::new(lower, upper).map_err(|source| RunError::Solver { size, source })
}

/// Runs every grid size of `cfg` and writes artifacts under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    let params = cfg.descent_params()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let rows: Vec<Result<RunRow, RunError>> = cfg
        .grid
        .sizes
        .par_iter()
        .map(|&size| run_single(cfg, &params, size, out))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport { rows })
}

pub fn run_experiment_from_path(path: &Path, out: Option<&Path>) -> Result<RunReport, RunError> {
    let cfg = ExperimentConfig::load(path)?;
    let out = out
        .map(Path::to_owned)
        .unwrap_or_else(|| cfg.output.dir.clone());
    run_experiment(&cfg, &out)
}

pub fn run_dir(out: &Path, size: usize) -> PathBuf {
    out.join(format!("n{size}"))
}

fn run_single(
    cfg: &ExperimentConfig,
    params: &statecon::DescentParams,
    size: usize,
    out: &Path,
) -> Result<RunRow, RunError> {
    let solver = |source| RunError::Solver { size, source };
    let p = build_problem(cfg, size)?;
    let q0 = find_feasible_start(&p.constraint, &p.op).map_err(solver)?;
    let (q, trace) = descend(&q0, &p.constraint, &p.op, &p.target, params).map_err(solver)?;
    let psi = p.op.solve_state(&q).map_err(solver)?;
    let kkt = kkt_residual(&q, &p.constraint, &p.op, &p.target, params.alpha).map_err(solver)?;
    let residual = Field::lin_comb(1.0, &psi, -1.0, &p.target)
        .map_err(solver)?
        .map(f64::abs);

    let dir = run_dir(out, size);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    dump::write_convergence(&dir.join("convergence.csv"), &trace)?;
    dump::write_field(&dir.join("control.dat"), &q)?;
    dump::write_field(&dir.join("state.dat"), &psi)?;
    dump::write_field(&dir.join("target.dat"), &p.target)?;
    dump::write_field(&dir.join("residual.dat"), &residual)?;
    if let Some(region) = &p.region {
        dump::write_polyline(
            &dir.join("weight_support.dat"),
            &region.boundary_polyline(128),
        )?;
    }

    Ok(RunRow {
        grid_size: size,
        node_count: p.grid.len(),
        opt_cost: trace.final_cost,
        iters: trace.iterations(),
        pde_solves: trace.total_solves(),
        kkt_residual: kkt,
        constraint_value: p.constraint.value(&psi).map_err(solver)?,
        termination: trace.termination,
    })
}

/// Outcome of `check` for one grid size.
#[derive(Clone, Debug)]
pub struct CheckRow {
    pub grid_size: usize,
    pub node_count: usize,
    /// Largest `|⟨Eq,r⟩ − ⟨q,E*r⟩| / (‖q‖‖r‖)` over the random pairs.
    pub adjoint_defect: f64,
    pub feasible_start: bool,
}

/// Builds each problem and runs seeded adjoint-identity checks.
pub fn check_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    pairs: usize,
) -> Result<Vec<CheckRow>, RunError> {
    cfg.grid
        .sizes
        .iter()
        .map(|&size| {
            let solver = |source| RunError::Solver { size, source };
            let p = build_problem(cfg, size)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size as u64);
            let mut defect = 0.0f64;
            for _ in 0..pairs {
                let q = random_field(&p.grid, &mut rng);
                let r = random_field(&p.grid, &mut rng);
                let lhs =
                    inner_product(&p.op.solve_state(&q).map_err(solver)?, &r).map_err(solver)?;
                let rhs =
                    inner_product(&q, &p.op.solve_adjoint(&r).map_err(solver)?).map_err(solver)?;
                defect = defect.max((lhs - rhs).abs() / (q.norm() * r.norm()));
            }
            let feasible_start = find_feasible_start(&p.constraint, &p.op).is_ok();
            Ok(CheckRow {
                grid_size: size,
                node_count: p.grid.len(),
                adjoint_defect: defect,
                feasible_start,
            })
        })
        .collect()
}

fn random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
    let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Field::from_values(grid, values).expect("length matches grid")
}
