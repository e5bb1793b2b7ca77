//! Subgradient descent for the exactly penalized tracking problem.
//!
//! Each iteration computes the state and adjoint (two solves), the minimal
//! norm element `ρ + g` of the subdifferential, and backtracks along
//! `d = −(ρ + g)`. Infeasible trial points have infinite cost and are always
//! rejected, so every iterate is feasible.

use crate::constraints::{
    is_feasible, max_feasible_step, penalized_cost, tracking_cost, Bounds, Constraint, Cost,
    Feasibility, SubgradientSelector, DEFAULT_BETA,
};
use crate::error::{Error, Result};
use crate::grid::{inner_product, Field};
use crate::pde::DiscreteOperator;

/// Choice of the first trial step of each line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialStep {
    /// `1/(α‖d‖)`.
    InverseAlpha,
    Fixed(f64),
    /// Barzilai–Borwein `⟨s,s⟩/⟨s,y⟩` on the smooth gradient, capped at `1/α`;
    /// `1/α` when no curvature information is available.
    BarzilaiBorwein,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmijoParams {
    pub c1: f64,
    pub shrink: f64,
    pub initial: InitialStep,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            c1: 1e-4,
            shrink: 0.5,
            initial: InitialStep::BarzilaiBorwein,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentParams {
    pub alpha: f64,
    pub tol: f64,
    pub beta: f64,
    pub armijo: ArmijoParams,
    pub max_iters: usize,
}

impl Default for DescentParams {
    fn default() -> Self {
        DescentParams {
            alpha: 1e-3,
            tol: 1e-5,
            beta: DEFAULT_BETA,
            armijo: ArmijoParams::default(),
            max_iters: 500,
        }
    }
}

impl DescentParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        let a = &self.armijo;
        if !(a.c1 > 0.0 && a.c1 < 1.0) {
            return bad(format!("armijo c1 must lie in (0, 1), got {}", a.c1));
        }
        if !(a.shrink > 0.0 && a.shrink < 1.0) {
            return bad(format!(
                "armijo shrink must lie in (0, 1), got {}",
                a.shrink
            ));
        }
        if let InitialStep::Fixed(t) = a.initial {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("initial step must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MinNormBelowTol,
    StepBelowTol,
    MaxIters,
    SolverFailure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Cost at the iterate `q_k`.
    pub cost: f64,
    /// `‖ρ + g‖` at `q_k`.
    pub min_norm: f64,
    /// Accepted step from `q_k` (zero on the terminating iteration or on a
    /// failed search).
    pub step: f64,
    pub constraint_value: f64,
    pub constraint_active: bool,
    /// Cumulative PDE solves at the end of the iteration.
    pub solves: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Cost at the returned control.
    pub final_cost: f64,
    pub line_search_trials: usize,
    pub constraint_solves: usize,
}

impl DescentTrace {
    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.step > 0.0).count()
    }

    pub fn total_solves(&self) -> usize {
        self.records.last().map_or(0, |r| r.solves)
    }
}

/// State `ψ = Eq` and smooth gradient `g = E*(ψ − ψ̄) + αq`. Two solves.
pub fn smooth_gradient(
    q: &Field,
    op: &DiscreteOperator,
    target: &Field,
    alpha: f64,
) -> Result<(Field, Field)> {
    let psi = op.solve_state(q)?;
    let residual = Field::lin_comb(1.0, &psi, -1.0, target)?;
    let mut g = op.solve_adjoint(&residual)?;
    g.axpy(alpha, q)?;
    Ok((psi, g))
}

/// Outcome of a backtracking search.
#[derive(Clone, Debug)]
pub struct LineSearch {
    /// Accepted control; equal to the input when `step == 0`.
    pub q: Field,
    /// State of the accepted control, when a step was taken.
    pub psi: Option<Field>,
    pub step: f64,
    /// Cost at the accepted control.
    pub cost: f64,
    pub trials: usize,
}

/// Backtracking from `t0` by `shrink` until
/// `j(q + t d) ≤ j(q) − c₁ t ‖d‖²` with `q + t d` feasible.
///
/// The state is affine in `t`, so the first infeasible trial predicts the
/// whole path; the search then jumps once to the largest predicted feasible
/// step (see [`max_feasible_step`]) before resuming the backtracking.
#[allow(clippy::too_many_arguments)]
pub fn armijo_search(
    q: &Field,
    psi: &Field,
    cost: f64,
    d: &Field,
    t0: f64,
    con: &Constraint,
    op: &DiscreteOperator,
    target: &Field,
    alpha: f64,
    armijo: &ArmijoParams,
) -> Result<LineSearch> {
    let dd = inner_product(d, d)?;
    let mut t = t0;
    let mut trials = 0;
    let mut landed = false;
    for _ in 0..=armijo.max_backtracks {
        let trial = Field::lin_comb(1.0, q, t, d)?;
        let trial_psi = op.solve_state(&trial)?;
        trials += 1;
        match penalized_cost(con, &trial_psi, &trial, target, alpha)? {
            Cost::Finite(c) => {
                if c <= cost - armijo.c1 * t * dd {
                    return Ok(LineSearch {
                        q: trial,
                        psi: Some(trial_psi),
                        step: t,
                        cost: c,
                        trials,
                    });
                }
            }
            Cost::Infeasible if !landed => {
                landed = true;
                let mut dpsi = Field::lin_comb(1.0, &trial_psi, -1.0, psi)?;
                dpsi.scale(1.0 / t);
                if let Some(t_land) = max_feasible_step(con, psi, &dpsi, t)? {
                    t = t_land;
                    continue;
                }
            }
            Cost::Infeasible => {}
        }
        t *= armijo.shrink;
    }
    Ok(LineSearch {
        q: q.clone(),
        psi: None,
        step: 0.0,
        cost,
        trials,
    })
}

/// An iterate as seen by a [`descend_with`] observer.
#[derive(Clone, Copy, Debug)]
pub struct IterateView<'a> {
    pub k: usize,
    pub q: &'a Field,
    pub psi: &'a Field,
    pub cost: f64,
}

/// Runs the descent from a feasible `q0`.
pub fn descend(
    q0: &Field,
    con: &Constraint,
    op: &DiscreteOperator,
    target: &Field,
    params: &DescentParams,
) -> Result<(Field, DescentTrace)> {
    descend_with(q0, con, op, target, params, |_| {})
}

/// [`descend`] calling `observer` once for every iterate, including the
/// returned one.
pub fn descend_with(
    q0: &Field,
    con: &Constraint,
    op: &DiscreteOperator,
    target: &Field,
    params: &DescentParams,
    mut observer: impl FnMut(IterateView<'_>),
) -> Result<(Field, DescentTrace)> {
    params.validate()?;
    q0.ensure_same_grid(target)?;
    if q0.grid().as_ref() != op.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let psi0 = op.solve_state(q0)?;
    if let Feasibility::Violated(v) = is_feasible(con, &psi0)? {
        return Err(Error::Infeasible {
            overshoot: v.overshoot,
        });
    }

    let mut selector = SubgradientSelector::new(con, op);
    let mut q = q0.clone();
    let mut records = Vec::new();
    let mut solves = 0usize;
    let mut trials_total = 0usize;
    let mut constraint_solves = 0usize;
    let mut prev: Option<(Field, Field)> = None;
    let mut final_cost = tracking_cost(&psi0, q0, target, params.alpha)?;
    let mut termination = Termination::MaxIters;

    for k in 0..params.max_iters {
        let (psi, g) = match smooth_gradient(&q, op, target, params.alpha) {
            Ok(v) => v,
            Err(Error::SolverFailure { .. }) => {
                termination = Termination::SolverFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        solves += 2;
        let cost = tracking_cost(&psi, &q, target, params.alpha)?;
        final_cost = cost;
        observer(IterateView {
            k,
            q: &q,
            psi: &psi,
            cost,
        });
        let sel = match selector.select(&psi, &g, params.beta) {
            Ok(s) => s,
            Err(Error::SolverFailure { .. }) => {
                termination = Termination::SolverFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        solves += sel.adjoint_solves;
        constraint_solves += sel.adjoint_solves;

        let d = Field::lin_comb(-1.0, &sel.rho, -1.0, &g)?;
        let min_norm = d.norm();
        let mut record = IterationRecord {
            k,
            cost,
            min_norm,
            step: 0.0,
            constraint_value: con.value(&psi)?,
            constraint_active: sel.constraint_active,
            solves,
        };
        if min_norm <= params.tol {
            records.push(record);
            termination = Termination::MinNormBelowTol;
            break;
        }

        let t0 = initial_step(
            &params.armijo.initial,
            params.alpha,
            min_norm,
            prev.as_ref(),
            &q,
            &g,
        )?;
        let search = match armijo_search(
            &q,
            &psi,
            cost,
            &d,
            t0,
            con,
            op,
            target,
            params.alpha,
            &params.armijo,
        ) {
            Ok(s) => s,
            Err(Error::SolverFailure { .. }) => {
                records.push(record);
                termination = Termination::SolverFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        solves += search.trials;
        trials_total += search.trials;
        record.step = search.step;
        record.solves = solves;
        records.push(record);

        if search.step == 0.0 {
            termination = Termination::StepBelowTol;
            break;
        }
        prev = Some((q, g));
        q = search.q;
        final_cost = search.cost;
        let last = k + 1 == params.max_iters;
        let small = search.step * min_norm <= params.tol;
        if last || small {
            if let Some(psi) = &search.psi {
                observer(IterateView {
                    k: k + 1,
                    q: &q,
                    psi,
                    cost: final_cost,
                });
            }
        }
        if small {
            termination = Termination::StepBelowTol;
            break;
        }
    }

    Ok((
        q,
        DescentTrace {
            records,
            termination,
            final_cost,
            line_search_trials: trials_total,
            constraint_solves,
        },
    ))
}

fn initial_step(
    rule: &InitialStep,
    alpha: f64,
    dnorm: f64,
    prev: Option<&(Field, Field)>,
    q: &Field,
    g: &Field,
) -> Result<f64> {
    Ok(match *rule {
        InitialStep::InverseAlpha => 1.0 / (alpha * dnorm),
        InitialStep::Fixed(t) => t,
        InitialStep::BarzilaiBorwein => {
            let cap = 1.0 / alpha;
            match prev {
                None => cap,
                Some((q_prev, g_prev)) => {
                    let s = Field::lin_comb(1.0, q, -1.0, q_prev)?;
                    let y = Field::lin_comb(1.0, g, -1.0, g_prev)?;
                    let sy = inner_product(&s, &y)?;
                    if sy > 0.0 {
                        (inner_product(&s, &s)? / sy).min(cap)
                    } else {
                        cap
                    }
                }
            }
        }
    })
}

/// `dist(0, g + S)` at a feasible `q`, where `S` is the constraint's
/// subgradient set. Zero certifies optimality for box and weighted-integral
/// constraints; for total coverage it is only a stationarity measure.
pub fn kkt_residual(
    q: &Field,
    con: &Constraint,
    op: &DiscreteOperator,
    target: &Field,
    alpha: f64,
) -> Result<f64> {
    let (psi, g) = smooth_gradient(q, op, target, alpha)?;
    let sel = SubgradientSelector::new(con, op).select_inner(&psi, &g, 0.0)?;
    Ok(Field::lin_comb(1.0, &sel.rho, 1.0, &g)?.norm())
}

const MAX_BISECTIONS: usize = 60;

/// A feasible control: zero when admissible, otherwise a scaled manufactured
/// control `s·A(ψ_c)` for a constant state `ψ_c`.
pub fn find_feasible_start(con: &Constraint, op: &DiscreteOperator) -> Result<Field> {
    let grid = op.grid();
    let zero = Field::zeros(grid);
    if is_feasible(con, &zero)?.is_feasible() {
        return Ok(zero);
    }
    let bounds = con.bounds();
    let level = match con {
        Constraint::WeightedIntegral { .. } => 1.0,
        _ => bounds.interior_point(),
    };
    let q0 = op.apply_a(&Field::constant(grid, level))?;
    let psi1 = op.solve_state(&q0)?;

    // ψ(s) = s·ψ1 by linearity; search s without further solves.
    let side = |s: f64| -> Result<Side> { classify(con, &bounds, &psi1.scaled(s)) };
    let mut lo = 0.0;
    let lo_side = side(lo)?;
    let mut hi = 1.0;
    let mut iters = 0;
    loop {
        match side(hi)? {
            Side::Feasible => return Ok(q0.scaled(hi)),
            s if s == lo_side => {
                lo = hi;
                hi *= 2.0;
            }
            _ => break,
        }
        iters += 1;
        if iters >= MAX_BISECTIONS {
            return Err(Error::NoFeasibleStart);
        }
    }
    for _ in iters..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        match side(mid)? {
            Side::Feasible => return Ok(q0.scaled(mid)),
            s if s == lo_side => lo = mid,
            _ => hi = mid,
        }
    }
    Err(Error::NoFeasibleStart)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Low,
    High,
    Feasible,
}

fn classify(con: &Constraint, bounds: &Bounds, psi: &Field) -> Result<Side> {
    if is_feasible(con, psi)?.is_feasible() {
        return Ok(Side::Feasible);
    }
    let weights = psi.grid().quad_weights();
    let (below, above) = match con {
        Constraint::WeightedIntegral { .. } => {
            let v = con.value(psi)?;
            (
                (v < bounds.lower) as u8 as f64,
                (v > bounds.upper) as u8 as f64,
            )
        }
        Constraint::Box { .. } => weighted_sides(psi.values(), weights, bounds, 0..psi.len()),
        Constraint::TotalCoverage { region, .. } => {
            weighted_sides(psi.values(), weights, bounds, region.iter().copied())
        }
    };
    Ok(if below >= above {
        Side::Low
    } else {
        Side::High
    })
}

fn weighted_sides(
    values: &[f64],
    weights: &[f64],
    bounds: &Bounds,
    nodes: impl Iterator<Item = usize>,
) -> (f64, f64) {
    let mut below = 0.0;
    let mut above = 0.0;
    for k in nodes {
        if values[k] < bounds.lower {
            below += weights[k];
        } else if values[k] > bounds.upper {
            above += weights[k];
        }
    }
    (below, above)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Grid};
    use crate::region::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn square(n: usize) -> Arc<Grid> {
        build_grid(
            &DomainSpec::Rectangle {
                min: [0.0, 0.0],
                max: [1.0, 1.0],
            },
            n,
        )
        .unwrap()
    }

    fn random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_values(grid, v).unwrap()
    }

    fn smooth_cost(q: &Field, op: &DiscreteOperator, target: &Field, alpha: f64) -> f64 {
        let psi = op.solve_state(q).unwrap();
        tracking_cost(&psi, q, target, alpha).unwrap()
    }

    /// CG on `(E*E + αI) q = E*ψ̄`.
    fn normal_equations(op: &DiscreteOperator, target: &Field, alpha: f64) -> Field {
        let apply = |v: &Field| {
            let mut out = op.solve_adjoint(&op.solve_state(v).unwrap()).unwrap();
            out.axpy(alpha, v).unwrap();
            out
        };
        let b = op.solve_adjoint(target).unwrap();
        let mut x = Field::zeros(target.grid());
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = r.inner(&r).unwrap();
        let stop = 1e-28 * rr;
        for _ in 0..500 {
            if rr <= stop {
                break;
            }
            let ap = apply(&p);
            let step = rr / p.inner(&ap).unwrap();
            x.axpy(step, &p).unwrap();
            r.axpy(-step, &ap).unwrap();
            let rr_new = r.inner(&r).unwrap();
            p = Field::lin_comb(1.0, &r, rr_new / rr, &p).unwrap();
            rr = rr_new;
        }
        x
    }

    #[test]
    fn zero_problem_has_zero_gradient() {
        let grid = square(9);
        let op = DiscreteOperator::new(&grid);
        let zero = Field::zeros(&grid);
        let (psi, g) = smooth_gradient(&zero, &op, &zero, 1e-3).unwrap();
        assert_eq!(psi.max_abs(), 0.0);
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(op.solve_count(), 2);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let grid = square(17);
        let op = DiscreteOperator::new(&grid).with_tolerance(1e-14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let target = op.build_target().unwrap();
        let alpha = 1e-3;
        let q = random_field(&grid, &mut rng);
        let (_, g) = smooth_gradient(&q, &op, &target, alpha).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let v = random_field(&grid, &mut rng);
            let plus = smooth_cost(
                &Field::lin_comb(1.0, &q, h, &v).unwrap(),
                &op,
                &target,
                alpha,
            );
            let minus = smooth_cost(
                &Field::lin_comb(1.0, &q, -h, &v).unwrap(),
                &op,
                &target,
                alpha,
            );
            let fd = (plus - minus) / (2.0 * h);
            let exact = g.inner(&v).unwrap();
            assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{fd} vs {exact}");
        }
    }

    #[test]
    fn unconstrained_minimizer_has_vanishing_gradient() {
        let grid = square(13);
        let op = DiscreteOperator::new(&grid).with_tolerance(1e-14).unwrap();
        let target = op.build_target().unwrap();
        let q = normal_equations(&op, &target, 1e-3);
        let (_, g) = smooth_gradient(&q, &op, &target, 1e-3).unwrap();
        assert!(g.norm() <= 1e-8, "{}", g.norm());
    }

    #[test]
    fn armijo_on_quadratic_accepts_near_exact_step() {
        let grid = square(13);
        let op = DiscreteOperator::new(&grid).with_tolerance(1e-13).unwrap();
        let target = op.build_target().unwrap();
        let alpha = 1e-3;
        let con = Constraint::box_constraint(Bounds::unbounded());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_field(&grid, &mut rng);
        let (psi, g) = smooth_gradient(&q, &op, &target, alpha).unwrap();
        let cost = tracking_cost(&psi, &q, &target, alpha).unwrap();
        let d = g.scaled(-1.0);
        // exact minimizer of t ↦ j(q + t d): ‖d‖² / ⟨d, Hd⟩
        let mut hd = op.solve_adjoint(&op.solve_state(&d).unwrap()).unwrap();
        hd.axpy(alpha, &d).unwrap();
        let t_exact = d.inner(&d).unwrap() / d.inner(&hd).unwrap();
        let armijo = ArmijoParams::default();
        let ls = armijo_search(
            &q,
            &psi,
            cost,
            &d,
            1.0 / alpha,
            &con,
            &op,
            &target,
            alpha,
            &armijo,
        )
        .unwrap();
        assert!(
            ls.step >= t_exact * armijo.shrink,
            "{} vs {}",
            ls.step,
            t_exact
        );
        assert!(ls.cost < cost);
    }

    #[test]
    fn armijo_rejects_directions_leaving_the_feasible_set() {
        let grid = build_grid(&DomainSpec::unit_disk(), 17).unwrap();
        let op = DiscreteOperator::new(&grid);
        let target = op.build_target().unwrap();
        let w = Field::indicator(
            &grid,
            &Region::Ball {
                center: [0.0, 0.0],
                radius: 0.25,
            },
        );
        let q = op.apply_a(&Field::constant(&grid, 0.1)).unwrap();
        let psi = op.solve_state(&q).unwrap();
        let b = inner_product(&w, &psi).unwrap();
        let con = Constraint::weighted_integral(w.clone(), Bounds::upper_only(b).unwrap());
        let cost = tracking_cost(&psi, &q, &target, 1e-3).unwrap();
        // E*(w) raises ⟨w, ψ⟩ for any positive step
        let d = op.solve_adjoint(&w).unwrap();
        // enough backtracks to exhaust the search while t·‖d‖ stays above solver noise
        let armijo = ArmijoParams {
            max_backtracks: 20,
            ..ArmijoParams::default()
        };
        let ls = armijo_search(&q, &psi, cost, &d, 1.0, &con, &op, &target, 1e-3, &armijo).unwrap();
        assert_eq!(ls.trials, 21);
        assert_eq!(ls.step, 0.0);
        assert_eq!(ls.q.values(), q.values());
    }

    #[test]
    fn armijo_descends_when_inactive() {
        let grid = square(11);
        let op = DiscreteOperator::new(&grid);
        let target = op.build_target().unwrap();
        let con = Constraint::box_constraint(Bounds::new(-10.0, 10.0).unwrap());
        let q = Field::zeros(&grid);
        let (psi, g) = smooth_gradient(&q, &op, &target, 1e-3).unwrap();
        let cost = tracking_cost(&psi, &q, &target, 1e-3).unwrap();
        let ls = armijo_search(
            &q,
            &psi,
            cost,
            &g.scaled(-1.0),
            1e3,
            &con,
            &op,
            &target,
            1e-3,
            &ArmijoParams::default(),
        )
        .unwrap();
        assert!(ls.step > 0.0);
        assert!(ls.cost < cost);
    }

    #[test]
    fn vacuous_constraint_reaches_unconstrained_minimizer() {
        let grid = square(17);
        let op = DiscreteOperator::new(&grid).with_tolerance(1e-13).unwrap();
        let target = op.build_target().unwrap();
        let params = DescentParams {
            tol: 1e-9,
            ..DescentParams::default()
        };
        let con = Constraint::box_constraint(Bounds::unbounded());
        let (q, trace) = descend(&Field::zeros(&grid), &con, &op, &target, &params).unwrap();
        assert_eq!(trace.termination, Termination::MinNormBelowTol);
        let oracle = normal_equations(&op, &target, params.alpha);
        let err = Field::lin_comb(1.0, &q, -1.0, &oracle).unwrap().norm() / oracle.norm();
        assert!(err <= 1e-4, "{err}");
        assert!(kkt_residual(&q, &con, &op, &target, params.alpha).unwrap() <= 2.0 * params.tol);
    }

    #[test]
    fn trace_is_monotone_and_ledger_balances() {
        let grid = build_grid(&DomainSpec::unit_disk(), 17).unwrap();
        let op = DiscreteOperator::new(&grid);
        let target = op.build_target().unwrap();
        let w = Field::indicator(
            &grid,
            &Region::Ball {
                center: [0.0, 0.0],
                radius: 0.25,
            },
        );
        let b = 0.5 * inner_product(&w, &target).unwrap();
        let con = Constraint::weighted_integral(w, Bounds::upper_only(b).unwrap());
        let q0 = find_feasible_start(&con, &op).unwrap();
        let before = op.solve_count();
        let (q, trace) = descend(&q0, &con, &op, &target, &DescentParams::default()).unwrap();
        let used = op.solve_count() - before - 1; // the initial feasibility solve
        assert_eq!(trace.total_solves(), used);
        assert_eq!(
            used,
            2 * trace.records.len() + trace.line_search_trials + trace.constraint_solves
        );
        for pair in trace.records.windows(2) {
            assert!(pair[1].cost <= pair[0].cost);
        }
        assert!(trace.records.iter().all(|r| r.constraint_value <= b));
        let psi = op.solve_state(&q).unwrap();
        assert!(is_feasible(&con, &psi).unwrap().is_feasible());
    }

    #[test]
    fn kkt_residual_does_not_certify_non_optimal_points() {
        let grid = square(13);
        let op = DiscreteOperator::new(&grid);
        let target = op.build_target().unwrap().scaled(50.0);
        let con = Constraint::box_constraint(Bounds::new(-100.0, 100.0).unwrap());
        let q = Field::zeros(&grid);
        let (_, g) = smooth_gradient(&q, &op, &target, 1e-3).unwrap();
        assert!(g.norm() >= 1.0);
        let r = kkt_residual(&q, &con, &op, &target, 1e-3).unwrap();
        assert!(r > 0.01 * g.norm());
    }

    #[test]
    fn rejects_infeasible_start_and_bad_params() {
        let grid = square(9);
        let op = DiscreteOperator::new(&grid);
        let target = op.build_target().unwrap();
        let con = Constraint::box_constraint(Bounds::new(1.0, 2.0).unwrap());
        let zero = Field::zeros(&grid);
        assert!(matches!(
            descend(&zero, &con, &op, &target, &DescentParams::default()),
            Err(Error::Infeasible { .. })
        ));
        let bad = DescentParams {
            alpha: 0.0,
            ..DescentParams::default()
        };
        assert!(descend(&zero, &con, &op, &target, &bad).is_err());
        let bad = DescentParams {
            armijo: ArmijoParams {
                shrink: 1.0,
                ..ArmijoParams::default()
            },
            ..DescentParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn feasible_start_zero_when_admissible() {
        let grid = build_grid(&DomainSpec::unit_disk(), 17).unwrap();
        let op = DiscreteOperator::new(&grid);
        let w = Field::indicator(
            &grid,
            &Region::Ball {
                center: [0.0, 0.0],
                radius: 0.25,
            },
        );
        let con = Constraint::weighted_integral(w, Bounds::upper_only(0.12).unwrap());
        let q = find_feasible_start(&con, &op).unwrap();
        assert_eq!(q.max_abs(), 0.0);
        assert_eq!(op.solve_count(), 0);
    }

    #[test]
    fn feasible_start_manufactured_box() {
        let grid = square(12);
        let op = DiscreteOperator::new(&grid);
        let con = Constraint::box_constraint(Bounds::new(1.0, 2.0).unwrap());
        let q = find_feasible_start(&con, &op).unwrap();
        let psi = op.solve_state(&q).unwrap();
        assert!(is_feasible(&con, &psi).unwrap().is_feasible());
        assert!(psi.values().iter().all(|v| (v - 1.5).abs() < 1e-6));
    }

    #[test]
    fn feasible_start_weighted_band() {
        let grid = build_grid(&DomainSpec::unit_disk(), 17).unwrap();
        let op = DiscreteOperator::new(&grid);
        let w = Field::indicator(
            &grid,
            &Region::Ball {
                center: [0.0, 0.0],
                radius: 0.25,
            },
        );
        let con = Constraint::weighted_integral(w.clone(), Bounds::new(0.05, 0.12).unwrap());
        let q = find_feasible_start(&con, &op).unwrap();
        let v = inner_product(&w, &op.solve_state(&q).unwrap()).unwrap();
        assert!((0.05..=0.12).contains(&v), "{v}");
    }

    #[test]
    fn feasible_start_fails_when_band_is_below_solver_accuracy() {
        let grid = square(10);
        let op = DiscreteOperator::new(&grid);
        let con = Constraint::box_constraint(Bounds::new(1.0, 1.0 + 1e-15).unwrap());
        assert!(matches!(
            find_feasible_start(&con, &op),
            Err(Error::NoFeasibleStart)
        ));
    }
}
