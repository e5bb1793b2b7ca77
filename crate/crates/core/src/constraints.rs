//! State constraints, their exact (infinite-valued) penalization, normal
//! cones and the minimal-norm subgradient selections that drive descent.
//!
//! The penalized reduced cost is
//!
//! ```text
//! j(q) = ½‖Eq − ψ̄‖² + (α/2)‖q‖² + I_S(Eq)
//! ```
//!
//! where `I_S` is `0` on the admissible states and `+∞` elsewhere. Infeasible
//! evaluations are reported as [`Cost::Infeasible`], never as a large number.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::cone_qp::solve_sign_qp;
use crate::error::{Error, Result};
use crate::grid::{inner_product, Field, Grid};
use crate::pde::DiscreteOperator;

/// Default Tikhonov weight of the step-2 subproblem.
pub const DEFAULT_BETA: f64 = 1e-8;

const ACTIVE_REL: f64 = 1e-6;

/// Closed interval `[lower, upper]`; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "bounds [{lower}, {upper}] need lower < upper"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn upper_only(upper: f64) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, upper)
    }

    pub fn lower_only(lower: f64) -> Result<Self> {
        Self::new(lower, f64::INFINITY)
    }

    pub fn unbounded() -> Self {
        Bounds {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Distance from `x` to the interval.
    pub fn overshoot(&self, x: f64) -> f64 {
        (self.lower - x).max(x - self.upper).max(0.0)
    }

    /// Activity tolerance: `1e-6·(b−a)` for finite intervals, `1e-6` otherwise.
    pub fn active_tol(&self) -> f64 {
        if self.lower.is_finite() && self.upper.is_finite() {
            ACTIVE_REL * (self.upper - self.lower)
        } else {
            ACTIVE_REL
        }
    }

    pub fn activity(&self, x: f64, tol: f64) -> Activity {
        let lo = x <= self.lower + tol;
        let hi = x >= self.upper - tol;
        match (lo, hi) {
            (true, true) => Activity::Pinned,
            (true, false) => Activity::ActiveLower,
            (false, true) => Activity::ActiveUpper,
            (false, false) => Activity::Inactive,
        }
    }

    /// A point strictly inside the interval.
    pub fn interior_point(&self) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => 0.5 * (self.lower + self.upper),
            (true, false) => self.lower + self.lower.abs().max(1.0),
            (false, true) => self.upper - self.upper.abs().max(1.0),
            (false, false) => 0.0,
        }
    }
}

/// Normal cone to an interval at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeInterval {
    /// `{0}`
    Zero,
    /// `(−∞, 0]`
    NonPositive,
    /// `[0, ∞)`
    NonNegative,
    /// `(−∞, ∞)`; only when both bounds are active at once.
    Whole,
}

impl ConeInterval {
    pub fn contains(self, v: f64) -> bool {
        match self {
            ConeInterval::Zero => v == 0.0,
            ConeInterval::NonPositive => v <= 0.0,
            ConeInterval::NonNegative => v >= 0.0,
            ConeInterval::Whole => !v.is_nan(),
        }
    }

    /// Nearest element of the cone.
    pub fn project(self, v: f64) -> f64 {
        match self {
            ConeInterval::Zero => 0.0,
            ConeInterval::NonPositive => v.min(0.0),
            ConeInterval::NonNegative => v.max(0.0),
            ConeInterval::Whole => v,
        }
    }
}

/// `N_[a,b](x)` with activity decided up to `tol`.
pub fn normal_cone_box(x: f64, a: f64, b: f64, tol: f64) -> Result<ConeInterval> {
    if x < a - tol || x > b + tol {
        return Err(Error::Infeasible {
            overshoot: (a - x).max(x - b),
        });
    }
    let bounds = Bounds { lower: a, upper: b };
    Ok(bounds.activity(x, tol).cone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activity {
    Inactive,
    ActiveLower,
    ActiveUpper,
    /// Within tolerance of both bounds (degenerate narrow interval).
    Pinned,
}

impl Activity {
    pub fn cone(self) -> ConeInterval {
        match self {
            Activity::Inactive => ConeInterval::Zero,
            Activity::ActiveLower => ConeInterval::NonPositive,
            Activity::ActiveUpper => ConeInterval::NonNegative,
            Activity::Pinned => ConeInterval::Whole,
        }
    }

    pub fn is_active(self) -> bool {
        self != Activity::Inactive
    }
}

/// Per-node activity of a pointwise bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    pub tags: Vec<Activity>,
    pub tol_active: f64,
}

impl ActiveSet {
    pub fn classify(values: &[f64], bounds: &Bounds) -> Self {
        let tol = bounds.active_tol();
        ActiveSet {
            tags: values.iter().map(|&v| bounds.activity(v, tol)).collect(),
            tol_active: tol,
        }
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = (usize, Activity)> + '_ {
        self.tags
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, a)| a.is_active())
    }
}

#[derive(Clone, Debug)]
pub enum Constraint {
    /// `a ≤ ψ(x) ≤ b` at every node.
    Box { bounds: Bounds },
    /// `a ≤ ⟨w, ψ⟩ ≤ b`.
    WeightedIntegral { weight: Field, bounds: Bounds },
    /// `|{x ∈ Z : a ≤ ψ(x) ≤ b}| ≥ c·|Z|`.
    TotalCoverage {
        region: Vec<usize>,
        bounds: Bounds,
        coverage: f64,
    },
}

impl Constraint {
    pub fn box_constraint(bounds: Bounds) -> Self {
        Constraint::Box { bounds }
    }

    pub fn weighted_integral(weight: Field, bounds: Bounds) -> Self {
        Constraint::WeightedIntegral { weight, bounds }
    }

    pub fn total_coverage(
        grid: &Grid,
        region: Vec<usize>,
        bounds: Bounds,
        coverage: f64,
    ) -> Result<Self> {
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coverage fraction {coverage} not in (0, 1)"
            )));
        }
        if region.is_empty() {
            return Err(Error::InvalidParameter(
                "coverage region contains no interior node".into(),
            ));
        }
        if let Some(&bad) = region.iter().find(|&&k| k >= grid.len()) {
            return Err(Error::InvalidParameter(format!(
                "coverage region node {bad} out of range"
            )));
        }
        let mut region = region;
        region.sort_unstable();
        region.dedup();
        Ok(Constraint::TotalCoverage {
            region,
            bounds,
            coverage,
        })
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            Constraint::Box { bounds }
            | Constraint::WeightedIntegral { bounds, .. }
            | Constraint::TotalCoverage { bounds, .. } => *bounds,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::Box { .. } => "box",
            Constraint::WeightedIntegral { .. } => "weighted_integral",
            Constraint::TotalCoverage { .. } => "total_coverage",
        }
    }

    /// Scalar summary of the constraint at `psi`: the extreme nodal value for
    /// box constraints (max if an upper bound exists, else min), `⟨w,ψ⟩` for
    /// weighted integrals and the covered fraction of `Z` for coverage.
    pub fn value(&self, psi: &Field) -> Result<f64> {
        match self {
            Constraint::Box { bounds } => {
                let vals = psi.values().iter().copied();
                Ok(if bounds.upper.is_finite() || !bounds.lower.is_finite() {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.fold(f64::INFINITY, f64::min)
                })
            }
            Constraint::WeightedIntegral { weight, .. } => inner_product(weight, psi),
            Constraint::TotalCoverage { region, bounds, .. } => {
                let c = coverage_stats(psi, region, bounds);
                Ok(c.covered / c.total)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct CoverageStats {
    total: f64,
    covered: f64,
    violating: f64,
    min_weight: f64,
}

fn coverage_stats(psi: &Field, region: &[usize], bounds: &Bounds) -> CoverageStats {
    let grid = psi.grid();
    let mut s = CoverageStats {
        total: 0.0,
        covered: 0.0,
        violating: 0.0,
        min_weight: f64::INFINITY,
    };
    for &k in region {
        let w = grid.quad_weight(k);
        s.total += w;
        s.min_weight = s.min_weight.min(w);
        if bounds.contains(psi.values()[k]) {
            s.covered += w;
        } else {
            s.violating += w;
        }
    }
    s
}

const MEASURE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    /// Box: largest nodal distance outside `[a,b]`. Weighted integral:
    /// distance of `⟨w,ψ⟩` outside `[a,b]`. Coverage: violating measure in
    /// excess of the allowance `(1−c)|Z|`.
    pub overshoot: f64,
    /// Measure of the violating nodes (zero for weighted integrals).
    pub measure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Feasibility {
    Feasible,
    Violated(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

pub fn is_feasible(con: &Constraint, psi: &Field) -> Result<Feasibility> {
    match con {
        Constraint::Box { bounds } => {
            let grid = psi.grid();
            let mut overshoot = 0.0f64;
            let mut measure = 0.0;
            for (k, &v) in psi.values().iter().enumerate() {
                if !bounds.contains(v) {
                    overshoot = overshoot.max(bounds.overshoot(v));
                    measure += grid.quad_weight(k);
                }
            }
            Ok(if measure == 0.0 {
                Feasibility::Feasible
            } else {
                Feasibility::Violated(Violation { overshoot, measure })
            })
        }
        Constraint::WeightedIntegral { weight, bounds } => {
            let v = inner_product(weight, psi)?;
            Ok(if bounds.contains(v) {
                Feasibility::Feasible
            } else {
                Feasibility::Violated(Violation {
                    overshoot: bounds.overshoot(v),
                    measure: 0.0,
                })
            })
        }
        Constraint::TotalCoverage {
            region,
            bounds,
            coverage,
        } => {
            if region.iter().any(|&k| k >= psi.len()) {
                return Err(Error::GridMismatch);
            }
            let s = coverage_stats(psi, region, bounds);
            Ok(
                if s.covered >= coverage * s.total - MEASURE_SLACK * s.total {
                    Feasibility::Feasible
                } else {
                    Feasibility::Violated(Violation {
                        overshoot: s.violating - (1.0 - coverage) * s.total,
                        measure: s.violating,
                    })
                },
            )
        }
    }
}

/// Value of the penalized cost: finite on the admissible set, `+∞` off it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infeasible,
}

impl Cost {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infeasible => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }
}

/// Smooth tracking part `½‖ψ − ψ̄‖² + (α/2)‖q‖²`.
pub fn tracking_cost(psi: &Field, q: &Field, target: &Field, alpha: f64) -> Result<f64> {
    let diff = Field::lin_comb(1.0, psi, -1.0, target)?;
    q.ensure_same_grid(psi)?;
    let d = diff.norm();
    let qn = q.norm();
    Ok(0.5 * d * d + 0.5 * alpha * qn * qn)
}

pub fn penalized_cost(
    con: &Constraint,
    psi: &Field,
    q: &Field,
    target: &Field,
    alpha: f64,
) -> Result<Cost> {
    if !is_feasible(con, psi)?.is_feasible() {
        return Ok(Cost::Infeasible);
    }
    Ok(Cost::Finite(tracking_cost(psi, q, target, alpha)?))
}

/// Fraction of the activity tolerance left between a landed node and its
/// bound.
const LANDING_GAP: f64 = 0.1;

/// Largest `t ∈ (0, t_hi)` for which the affine path `ψ + s·dψ`, `0 ≤ s ≤ t`,
/// stays feasible, stopping short of the first blocking crossing so that the
/// blocking node ends within the activity tolerance of its bound.
///
/// `None` when no crossing is predicted before `t_hi` or when the blocking
/// node is already at its bound.
pub fn max_feasible_step(
    con: &Constraint,
    psi: &Field,
    dpsi: &Field,
    t_hi: f64,
) -> Result<Option<f64>> {
    psi.ensure_same_grid(dpsi)?;
    let bounds = con.bounds();
    let gap = LANDING_GAP * bounds.active_tol();
    let (v, dv) = (psi.values(), dpsi.values());
    let land = |tau: f64, rate: f64| {
        let t = tau - gap / rate.abs();
        (t > 0.0 && t < t_hi).then_some(t)
    };
    match con {
        Constraint::Box { .. } => {
            let mut first: Option<(f64, f64)> = None;
            for k in 0..v.len() {
                if let Some(tau) = crossing(v[k], dv[k], &bounds) {
                    if tau < t_hi && first.is_none_or(|(t, _)| tau < t) {
                        first = Some((tau, dv[k]));
                    }
                }
            }
            Ok(first.and_then(|(tau, rate)| land(tau, rate)))
        }
        Constraint::WeightedIntegral { weight, .. } => {
            let value = inner_product(weight, psi)?;
            let rate = inner_product(weight, dpsi)?;
            Ok(crossing(value, rate, &bounds)
                .filter(|&tau| tau < t_hi)
                .and_then(|tau| land(tau, rate)))
        }
        Constraint::TotalCoverage {
            region, coverage, ..
        } => {
            let grid = psi.grid();
            let s = coverage_stats(psi, region, &bounds);
            let allowance = (1.0 - coverage) * s.total + MEASURE_SLACK * s.total;
            // (time, measure change, rate) of band exits and entries
            let mut events: Vec<(f64, f64, f64)> = Vec::new();
            for &k in region {
                let w = grid.quad_weight(k);
                if bounds.contains(v[k]) {
                    if let Some(tau) = crossing(v[k], dv[k], &bounds) {
                        events.push((tau, w, dv[k]));
                    }
                } else if let Some(tau) = entry(v[k], dv[k], &bounds) {
                    events.push((tau, -w, dv[k]));
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut measure = s.violating;
            for (tau, change, rate) in events {
                if tau >= t_hi {
                    break;
                }
                measure += change;
                if measure > allowance {
                    return Ok(land(tau, rate));
                }
            }
            Ok(None)
        }
    }
}

/// First `t > 0` where `x + t·r` leaves `[a, b]` (x inside).
fn crossing(x: f64, r: f64, b: &Bounds) -> Option<f64> {
    if r > 0.0 && b.upper.is_finite() {
        Some((b.upper - x) / r)
    } else if r < 0.0 && b.lower.is_finite() {
        Some((b.lower - x) / r)
    } else {
        None
    }
}

/// First `t > 0` where `x + t·r` enters `[a, b]` (x outside).
fn entry(x: f64, r: f64, b: &Bounds) -> Option<f64> {
    if x > b.upper && r < 0.0 {
        Some((b.upper - x) / r)
    } else if x < b.lower && r > 0.0 {
        Some((b.lower - x) / r)
    } else {
        None
    }
}

/// Result of the step-2 subproblem.
#[derive(Clone, Debug)]
pub struct Selection {
    /// Minimizer `ρ` of `½‖ρ + g‖² + (β/2)‖ρ‖²` over the subgradient set.
    pub rho: Field,
    /// Whether the constraint contributed a nonzero cone at this state.
    pub constraint_active: bool,
    /// Adjoint solves spent computing the selection.
    pub adjoint_solves: usize,
}

/// Minimal-norm subgradient selection with per-run caches.
///
/// The subgradient set of `q ↦ I_S(Eq)` is
///
/// * box: `{E* η : η_i ∈ N_[a,b](ψ_i)}`;
/// * weighted integral: `N_[a,b](⟨w,ψ⟩) · E*(w)`;
/// * total coverage, when no violation allowance is left:
///   `{E* η : η_i ∈ N_[a,b](ψ_i), i ∈ Z with a ≤ ψ_i ≤ b}`, otherwise `{0}`.
///
/// For the node-wise sets the minimizer is found from the Gram matrix of the
/// active generators `E*(e_i)`, which are cached across calls.
#[derive(Debug)]
pub struct SubgradientSelector<'a> {
    con: &'a Constraint,
    op: &'a DiscreteOperator,
    weight_adjoint: Option<Field>,
    columns: HashMap<usize, Field>,
}

impl<'a> SubgradientSelector<'a> {
    pub fn new(con: &'a Constraint, op: &'a DiscreteOperator) -> Self {
        SubgradientSelector {
            con,
            op,
            weight_adjoint: None,
            columns: HashMap::new(),
        }
    }

    pub fn constraint(&self) -> &Constraint {
        self.con
    }

    /// Minimizer for `β > 0`. `psi` must be feasible.
    pub fn select(&mut self, psi: &Field, g: &Field, beta: f64) -> Result<Selection> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        self.select_inner(psi, g, beta)
    }

    /// Same as [`select`](Self::select) but allows `β = 0`.
    pub(crate) fn select_inner(&mut self, psi: &Field, g: &Field, beta: f64) -> Result<Selection> {
        psi.ensure_same_grid(g)?;
        if let Feasibility::Violated(v) = is_feasible(self.con, psi)? {
            return Err(Error::Infeasible {
                overshoot: v.overshoot,
            });
        }
        let con = self.con;
        match con {
            Constraint::Box { bounds } => {
                let set = ActiveSet::classify(psi.values(), bounds);
                let active: Vec<(usize, Activity)> = set.active_nodes().collect();
                self.nodal_selection(&active, g, beta)
            }
            Constraint::WeightedIntegral { weight, bounds } => {
                let value = inner_product(weight, psi)?;
                let act = bounds.activity(value, bounds.active_tol());
                if !act.is_active() {
                    return Ok(Selection {
                        rho: Field::zeros(psi.grid()),
                        constraint_active: false,
                        adjoint_solves: 0,
                    });
                }
                let mut solves = 0;
                if self.weight_adjoint.is_none() {
                    self.weight_adjoint = Some(self.op.solve_adjoint(weight)?);
                    solves += 1;
                }
                let m = self.weight_adjoint.as_ref().expect("cached above");
                let mm = inner_product(m, m)?;
                let r = if mm > 0.0 {
                    -inner_product(m, g)? / ((1.0 + beta) * mm)
                } else {
                    0.0
                };
                let r = act.cone().project(r);
                Ok(Selection {
                    rho: m.scaled(r),
                    constraint_active: true,
                    adjoint_solves: solves,
                })
            }
            Constraint::TotalCoverage {
                region,
                bounds,
                coverage,
            } => {
                let s = coverage_stats(psi, region, bounds);
                let allowance = (1.0 - coverage) * s.total;
                // No room for one more violating node.
                let active = s.violating + s.min_weight > allowance + MEASURE_SLACK * s.total;
                if !active {
                    return Ok(Selection {
                        rho: Field::zeros(psi.grid()),
                        constraint_active: false,
                        adjoint_solves: 0,
                    });
                }
                let tol = bounds.active_tol();
                let nodes: Vec<(usize, Activity)> = region
                    .iter()
                    .filter(|&&k| bounds.contains(psi.values()[k]))
                    .map(|&k| (k, bounds.activity(psi.values()[k], tol)))
                    .filter(|(_, a)| a.is_active())
                    .collect();
                let mut sel = self.nodal_selection(&nodes, g, beta)?;
                sel.constraint_active = true;
                Ok(sel)
            }
        }
    }

    fn nodal_selection(
        &mut self,
        active: &[(usize, Activity)],
        g: &Field,
        beta: f64,
    ) -> Result<Selection> {
        let grid = g.grid();
        if active.is_empty() {
            return Ok(Selection {
                rho: Field::zeros(grid),
                constraint_active: false,
                adjoint_solves: 0,
            });
        }
        let mut solves = 0;
        for &(k, _) in active {
            if !self.columns.contains_key(&k) {
                let mut e = Field::zeros(grid);
                e.values_mut()[k] = 1.0;
                let mut col = self.op.solve_adjoint(&e)?;
                let n = col.norm();
                col.scale(1.0 / n);
                self.columns.insert(k, col);
                solves += 1;
            }
        }
        let m = active.len();
        let sign = |a: Activity| {
            if a == Activity::ActiveLower {
                -1.0
            } else {
                1.0
            }
        };
        let cols: Vec<&Field> = active.iter().map(|(k, _)| &self.columns[k]).collect();
        let mut gram = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let v = sign(active[a].1) * sign(active[b].1) * inner_product(cols[a], cols[b])?;
                gram[(a, b)] = (1.0 + beta) * v;
                gram[(b, a)] = (1.0 + beta) * v;
            }
        }
        let mut lin = DVector::zeros(m);
        for a in 0..m {
            lin[a] = sign(active[a].1) * inner_product(cols[a], g)?;
        }
        let free: Vec<bool> = active.iter().map(|(_, a)| *a == Activity::Pinned).collect();
        let nu = solve_sign_qp(&gram, &lin, &free)?;

        let mut rho = Field::zeros(grid);
        for a in 0..m {
            if nu[a] != 0.0 {
                rho.axpy(sign(active[a].1) * nu[a], cols[a])?;
            }
        }
        Ok(Selection {
            rho,
            constraint_active: true,
            adjoint_solves: solves,
        })
    }
}

/// One-shot minimal-norm selection `ρ` for smooth gradient `g` at state `psi`.
pub fn min_norm_subgradient(
    con: &Constraint,
    psi: &Field,
    g: &Field,
    op: &DiscreteOperator,
    beta: f64,
) -> Result<Field> {
    Ok(SubgradientSelector::new(con, op).select(psi, g, beta)?.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use crate::region::Region;
    use std::sync::Arc;

    fn interval(n: usize) -> Arc<Grid> {
        build_grid(&DomainSpec::Interval { min: 0.0, max: 1.0 }, n).unwrap()
    }

    #[test]
    fn cone_cases() {
        assert_eq!(
            normal_cone_box(0.5, 0.0, 1.0, 1e-8).unwrap(),
            ConeInterval::Zero
        );
        assert_eq!(
            normal_cone_box(1.0, 0.0, 1.0, 1e-8).unwrap(),
            ConeInterval::NonNegative
        );
        assert_eq!(
            normal_cone_box(0.0, 0.0, 1.0, 1e-8).unwrap(),
            ConeInterval::NonPositive
        );
        assert!(matches!(
            normal_cone_box(1.1, 0.0, 1.0, 1e-8),
            Err(Error::Infeasible { .. })
        ));
        assert_eq!(
            normal_cone_box(0.5, 0.5 - 1e-9, 0.5 + 1e-9, 1e-8).unwrap(),
            ConeInterval::Whole
        );
    }

    #[test]
    fn cone_projection_is_idempotent_and_closed_under_scaling() {
        for cone in [
            ConeInterval::Zero,
            ConeInterval::NonPositive,
            ConeInterval::NonNegative,
            ConeInterval::Whole,
        ] {
            for v in [-2.0, -0.5, 0.0, 0.3, 4.0] {
                let p = cone.project(v);
                assert!(cone.contains(p));
                assert_eq!(cone.project(p), p);
                assert!(cone.contains(3.0 * p));
            }
        }
    }

    #[test]
    fn bounds_validation() {
        assert!(Bounds::new(1.0, 1.0).is_err());
        assert!(Bounds::new(2.0, 1.0).is_err());
        assert!(Bounds::new(f64::NAN, 1.0).is_err());
        assert_eq!(Bounds::new(0.0, 2.0).unwrap().active_tol(), 2e-6);
        assert_eq!(Bounds::upper_only(0.12).unwrap().active_tol(), 1e-6);
    }

    #[test]
    fn box_feasibility() {
        let g = interval(10);
        let bounds = Bounds::new(-1.0, 3.0).unwrap();
        let con = Constraint::box_constraint(bounds);
        let mid = Field::constant(&g, 1.0);
        assert!(is_feasible(&con, &mid).unwrap().is_feasible());
        let mut bad = mid.clone();
        bad.values_mut()[2] = 3.5;
        bad.values_mut()[4] = -1.25;
        match is_feasible(&con, &bad).unwrap() {
            Feasibility::Violated(v) => {
                assert_eq!(v.overshoot, 0.5);
                assert!((v.measure - 2.0 * g.quad_weight(0)).abs() < 1e-15);
            }
            _ => panic!("expected violation"),
        }
    }

    #[test]
    fn coverage_half_is_feasible_at_c_half() {
        let g = build_grid(
            &DomainSpec::Rectangle {
                min: [0.0, 0.0],
                max: [1.0, 1.0],
            },
            10,
        )
        .unwrap();
        let region = g.region_nodes(&Region::Rect {
            min: [0.2, 0.2],
            max: [0.8, 0.8],
        });
        assert!(region.len().is_multiple_of(2) && !region.is_empty());
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let con = Constraint::total_coverage(&g, region.clone(), bounds, 0.5).unwrap();
        let mut psi = Field::constant(&g, 0.5);
        for &k in region.iter().take(region.len() / 2) {
            psi.values_mut()[k] = 2.0;
        }
        assert!(is_feasible(&con, &psi).unwrap().is_feasible());
        psi.values_mut()[region[region.len() / 2]] = 2.0;
        assert!(!is_feasible(&con, &psi).unwrap().is_feasible());
    }

    #[test]
    fn coverage_validation() {
        let g = interval(10);
        let b = Bounds::new(0.0, 1.0).unwrap();
        assert!(Constraint::total_coverage(&g, vec![1, 2], b, 1.0).is_err());
        assert!(Constraint::total_coverage(&g, vec![], b, 0.5).is_err());
        assert!(Constraint::total_coverage(&g, vec![100], b, 0.5).is_err());
    }

    #[test]
    fn penalized_cost_values() {
        let g = interval(12);
        let target = Field::from_fn(&g, |p| (3.0 * p[0]).sin());
        let con = Constraint::box_constraint(Bounds::new(-3.0, 3.0).unwrap());
        let zero = Field::zeros(&g);
        assert_eq!(
            penalized_cost(&con, &target, &zero, &target, 0.1).unwrap(),
            Cost::Finite(0.0)
        );

        let mut delta = Field::constant(&g, 1.0);
        delta.scale(1.0 / delta.norm());
        let psi = Field::lin_comb(1.0, &target, 1.0, &delta).unwrap();
        let c = penalized_cost(&con, &psi, &zero, &target, 7.0)
            .unwrap()
            .finite()
            .unwrap();
        assert!((c - 0.5).abs() < 1e-14);

        let far = Field::constant(&g, 5.0);
        assert_eq!(
            penalized_cost(&con, &far, &zero, &target, 0.1).unwrap(),
            Cost::Infeasible
        );
    }

    #[test]
    fn inactive_box_returns_zero() {
        let g = interval(10);
        let op = DiscreteOperator::new(&g);
        let con = Constraint::box_constraint(Bounds::new(-1.0, 1.0).unwrap());
        let psi = Field::constant(&g, 0.0);
        let grad = Field::from_fn(&g, |p| p[0] - 0.3);
        let rho = min_norm_subgradient(&con, &psi, &grad, &op, DEFAULT_BETA).unwrap();
        assert!(rho.values().iter().all(|&v| v == 0.0));
        let sum = Field::lin_comb(1.0, &rho, 1.0, &grad).unwrap();
        assert_eq!(sum.norm(), grad.norm());
        assert_eq!(op.solve_count(), 0);
    }

    #[test]
    fn single_active_node_cancels_its_generator() {
        // One node at the upper bound; if g = −2·E*(e_k)/‖E*(e_k)‖ the cone
        // [0, ∞) admits the cancelling multiplier 2/(1+β).
        let g = interval(10);
        let op = DiscreteOperator::new(&g);
        let con = Constraint::box_constraint(Bounds::new(-1.0, 1.0).unwrap());
        let mut psi = Field::constant(&g, 0.0);
        psi.values_mut()[3] = 1.0;
        let mut e = Field::zeros(&g);
        e.values_mut()[3] = 1.0;
        let mut col = op.solve_adjoint(&e).unwrap();
        col.scale(1.0 / col.norm());
        let grad = col.scaled(-2.0);
        let beta = 1e-8;
        let rho = min_norm_subgradient(&con, &psi, &grad, &op, beta).unwrap();
        // minimize (ρ−2)² + βρ² over ρ ≥ 0 (calculus): ρ = 2/(1+β)
        let expected = col.scaled(2.0 / (1.0 + beta));
        let mut d = rho.clone();
        d.axpy(-1.0, &expected).unwrap();
        assert!(d.norm() < 1e-12, "{}", d.norm());

        // opposite sign: the cone cannot cancel, ρ = 0
        let rho = min_norm_subgradient(&con, &psi, &col.scaled(2.0), &op, beta).unwrap();
        assert!(rho.norm() < 1e-15);
    }

    #[test]
    fn weighted_integral_clamps_wrong_sign() {
        let g = build_grid(&DomainSpec::unit_disk(), 17).unwrap();
        let op = DiscreteOperator::new(&g);
        let w = Field::indicator(
            &g,
            &Region::Ball {
                center: [0.0, 0.0],
                radius: 0.4,
            },
        );
        let psi = Field::constant(&g, 1.0);
        let b = inner_product(&w, &psi).unwrap();
        let con = Constraint::weighted_integral(w.clone(), Bounds::upper_only(b).unwrap());
        let m = op.solve_adjoint(&w).unwrap();
        // g = +E*(w) → unconstrained r < 0 violates r ≥ 0 → ρ = 0
        let rho = min_norm_subgradient(&con, &psi, &m, &op, DEFAULT_BETA).unwrap();
        assert_eq!(rho.norm(), 0.0);
        // g = −E*(w) → r = 1/(1+β) cancels it
        let rho = min_norm_subgradient(&con, &psi, &m.scaled(-1.0), &op, DEFAULT_BETA).unwrap();
        let mut d = rho;
        d.axpy(-1.0 / (1.0 + DEFAULT_BETA), &m).unwrap();
        assert!(d.norm() < 1e-14 * m.norm());
    }

    #[test]
    fn infeasible_state_and_bad_beta_rejected() {
        let g = interval(10);
        let op = DiscreteOperator::new(&g);
        let con = Constraint::box_constraint(Bounds::new(-1.0, 1.0).unwrap());
        let grad = Field::zeros(&g);
        let bad = Field::constant(&g, 2.0);
        assert!(matches!(
            min_norm_subgradient(&con, &bad, &grad, &op, 1e-8),
            Err(Error::Infeasible { .. })
        ));
        let ok = Field::zeros(&g);
        assert!(min_norm_subgradient(&con, &ok, &grad, &op, 0.0).is_err());
    }

    #[test]
    fn coverage_selection_only_when_no_allowance_left() {
        let g = interval(12);
        let op = DiscreteOperator::new(&g);
        let region: Vec<usize> = (2..8).collect();
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let con = Constraint::total_coverage(&g, region, bounds, 0.6).unwrap();
        let grad = Field::constant(&g, -1.0);
        // allowance is 0.4·6 = 2.4 nodes; one violator leaves room
        let mut psi = Field::constant(&g, 0.5);
        psi.values_mut()[2] = 1.0;
        psi.values_mut()[3] = 2.0;
        let sel = SubgradientSelector::new(&con, &op)
            .select(&psi, &grad, 1e-8)
            .unwrap();
        assert!(!sel.constraint_active);
        assert_eq!(sel.rho.norm(), 0.0);
        // two violators: a third would break feasibility
        psi.values_mut()[4] = 2.0;
        let sel = SubgradientSelector::new(&con, &op)
            .select(&psi, &grad, 1e-8)
            .unwrap();
        assert!(sel.constraint_active);
        assert_eq!(sel.adjoint_solves, 1); // only node 2 sits at the bound
        assert!(sel.rho.norm() > 0.0);
    }

    #[test]
    fn landing_stops_inside_the_activity_band() {
        let g = interval(12);
        let bounds = Bounds::new(-1.0, 1.0).unwrap();
        let con = Constraint::box_constraint(bounds);
        let psi = Field::constant(&g, 0.5);
        let mut dpsi = Field::zeros(&g);
        dpsi.values_mut()[3] = 1.0; // reaches 1 at t = 0.5
        dpsi.values_mut()[5] = -0.5; // reaches −1 at t = 3
        let t = max_feasible_step(&con, &psi, &dpsi, 10.0).unwrap().unwrap();
        let x = 0.5 + t;
        assert!(x < 1.0 && 1.0 - x <= bounds.active_tol(), "{x}");
        assert_eq!(max_feasible_step(&con, &psi, &dpsi, 0.4).unwrap(), None);
    }

    #[test]
    fn coverage_landing_uses_the_allowance() {
        let g = interval(12);
        let region: Vec<usize> = (0..10).collect();
        let con =
            Constraint::total_coverage(&g, region, Bounds::new(0.0, 1.0).unwrap(), 0.8).unwrap();
        let psi = Field::constant(&g, 0.5);
        // nodes 0..4 leave the band at t = 1, 2, 3, 4; two exits are allowed
        let dpsi = Field::from_values(
            &g,
            (0..10)
                .map(|k| if k < 4 { 0.5 / (k as f64 + 1.0) } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let t = max_feasible_step(&con, &psi, &dpsi, 100.0)
            .unwrap()
            .unwrap();
        assert!(t > 2.0 && t < 3.0, "{t}");
    }

    #[test]
    fn constraint_values() {
        let g = interval(12);
        let psi = Field::from_fn(&g, |p| p[0]);
        let con = Constraint::box_constraint(Bounds::upper_only(2.0).unwrap());
        assert!((con.value(&psi).unwrap() - 10.0 / 11.0).abs() < 1e-15);
        let con = Constraint::box_constraint(Bounds::lower_only(-2.0).unwrap());
        assert!((con.value(&psi).unwrap() - 1.0 / 11.0).abs() < 1e-15);
        let con =
            Constraint::total_coverage(&g, (0..10).collect(), Bounds::new(0.0, 0.5).unwrap(), 0.3)
                .unwrap();
        assert!((con.value(&psi).unwrap() - 0.5).abs() < 1e-15);
    }
}
