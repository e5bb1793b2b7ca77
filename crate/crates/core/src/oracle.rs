//! Dense brute-force reference solvers for small problems.
//!
//! Everything here works on an explicitly inverted Laplacian and never calls
//! the iterative solver in [`crate::pde`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::constraints::Bounds;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Largest dense problem that can be assembled.
pub const DENSE_LIMIT: usize = 1200;
/// Largest problem for active-set enumeration (`3^N` patterns).
pub const ENUMERATION_LIMIT: usize = 10;
/// Largest problem for the coverage lattice scan (`21^N` points).
pub const SCAN_LIMIT: usize = 6;
/// Lattice points per coordinate in the coverage scan.
pub const SCAN_POINTS: usize = 21;

const FEAS_TOL: f64 = 1e-10;

/// `min ½‖Eq − t‖²_W + (α/2)‖q‖²_W` with `W = diag(weights)`.
#[derive(Clone, Debug)]
pub struct DenseProblem {
    pub e: DMatrix<f64>,
    pub target: DVector<f64>,
    pub weights: DVector<f64>,
    pub alpha: f64,
    pub bounds: Bounds,
}

impl DenseProblem {
    pub fn new(
        e: DMatrix<f64>,
        target: DVector<f64>,
        weights: DVector<f64>,
        alpha: f64,
        bounds: Bounds,
    ) -> Result<Self> {
        let n = target.len();
        if n > DENSE_LIMIT {
            return Err(Error::ProblemTooLarge {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        if e.nrows() != n || e.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: e.nrows(),
            });
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter(
                "quadrature weights must be positive".into(),
            ));
        }
        Ok(DenseProblem {
            e,
            target,
            weights,
            alpha,
            bounds,
        })
    }

    /// Assembles `-Δ_h` on `grid` and inverts it.
    pub fn from_grid(grid: &Grid, target: &Field, alpha: f64, bounds: Bounds) -> Result<Self> {
        let n = grid.len();
        if n > DENSE_LIMIT {
            return Err(Error::ProblemTooLarge {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        if target.len() != n || target.grid().as_ref() != grid {
            return Err(Error::GridMismatch);
        }
        let st = grid.stencil();
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n {
            a[(k, k)] = st.diag;
            for (slot, nb) in grid.neighbors(k).iter().enumerate() {
                if let Some(m) = nb {
                    a[(k, *m)] += st.off[slot];
                }
            }
        }
        let e = a.try_inverse().ok_or(Error::SingularSystem)?;
        Self::new(
            e,
            DVector::from_column_slice(target.values()),
            DVector::from_column_slice(grid.quad_weights()),
            alpha,
            bounds,
        )
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn state(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.e * q
    }

    pub fn cost(&self, q: &DVector<f64>) -> f64 {
        let r = self.state(q) - &self.target;
        0.5 * weighted_sq(&r, &self.weights) + 0.5 * self.alpha * weighted_sq(q, &self.weights)
    }

    /// Hessian `EᵀWE + αW` and linear term `EᵀWt` of the cost in coordinates.
    pub fn normal_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let we = DMatrix::from_fn(self.len(), self.len(), |i, j| {
            self.weights[i] * self.e[(i, j)]
        });
        let mut h = self.e.transpose() * &we;
        for i in 0..self.len() {
            h[(i, i)] += self.alpha * self.weights[i];
        }
        let f = we.transpose() * &self.target;
        (h, f)
    }

    /// Unconstrained minimizer.
    pub fn unconstrained(&self) -> Result<DVector<f64>> {
        let (h, f) = self.normal_system();
        spd_solve(h, &f)
    }
}

fn weighted_sq(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum()
}

fn spd_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => m.lu().solve(rhs).ok_or(Error::SingularSystem),
    }
}

/// Activity pattern of one node in the box enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodePattern {
    Free,
    AtLower,
    AtUpper,
}

#[derive(Clone, Debug)]
pub struct BoxQpSolution {
    pub q: DVector<f64>,
    pub cost: f64,
    pub pattern: Vec<NodePattern>,
    /// Multipliers of the coordinate KKT system `Hq − f + Σ μ_i E_i = 0`:
    /// `μ_i ≥ 0` at the upper bound, `≤ 0` at the lower, `0` when free.
    pub multipliers: DVector<f64>,
}

/// Exact box-constrained minimizer by enumerating all `3^N` activity patterns.
pub fn enumerate_box_qp(p: &DenseProblem) -> Result<BoxQpSolution> {
    let n = p.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::ProblemTooLarge {
            size: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (h, f) = p.normal_system();
    let total = 3usize.pow(n as u32);
    let scale = 1.0 + p.target.amax();

    let best = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let pattern = decode(code, n);
            let rows: Vec<(usize, f64)> = pattern
                .iter()
                .enumerate()
                .filter_map(|(i, pat)| match pat {
                    NodePattern::Free => None,
                    NodePattern::AtLower => Some((i, p.bounds.lower)),
                    NodePattern::AtUpper => Some((i, p.bounds.upper)),
                })
                .collect();
            if rows.iter().any(|(_, v)| !v.is_finite()) {
                return None;
            }
            let m = rows.len();
            let mut kkt = DMatrix::zeros(n + m, n + m);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            let mut rhs = DVector::zeros(n + m);
            rhs.rows_mut(0, n).copy_from(&f);
            for (r, &(i, v)) in rows.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = p.e[(i, j)];
                    kkt[(j, n + r)] = p.e[(i, j)];
                }
                rhs[n + r] = v;
            }
            let sol = kkt.lu().solve(&rhs)?;
            let q = sol.rows(0, n).into_owned();
            let psi = p.state(&q);
            let tol = FEAS_TOL * scale;
            if psi
                .iter()
                .any(|&v| v < p.bounds.lower - tol || v > p.bounds.upper + tol)
            {
                return None;
            }
            let mut mult = DVector::zeros(n);
            for (r, &(i, _)) in rows.iter().enumerate() {
                mult[i] = sol[n + r];
            }
            Some((code, p.cost(&q), q, mult, pattern))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let (_, cost, q, multipliers, pattern) = best.ok_or(Error::EmptyFeasible)?;
    Ok(BoxQpSolution {
        q,
        cost,
        pattern,
        multipliers,
    })
}

fn decode(mut code: usize, n: usize) -> Vec<NodePattern> {
    (0..n)
        .map(|_| {
            let p = match code % 3 {
                0 => NodePattern::Free,
                1 => NodePattern::AtLower,
                _ => NodePattern::AtUpper,
            };
            code /= 3;
            p
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WiQpSolution {
    pub q: DVector<f64>,
    pub cost: f64,
    /// `⟨w, Eq⟩_W` at the solution.
    pub value: f64,
    /// Multiplier of the active bound (positive at the upper bound), zero if
    /// the unconstrained solution is feasible.
    pub multiplier: f64,
}

/// Exact minimizer under `a ≤ ⟨w, Eq⟩_W ≤ b`.
pub fn wi_qp_oracle(p: &DenseProblem, w: &DVector<f64>) -> Result<WiQpSolution> {
    let n = p.len();
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let (h, f) = p.normal_system();
    // ⟨w, Eq⟩_W = cᵀq
    let ww = w.component_mul(&p.weights);
    let c = p.e.transpose() * &ww;
    let value_of = |q: &DVector<f64>| c.dot(q);

    let q0 = spd_solve(h.clone(), &f)?;
    let v0 = value_of(&q0);
    let tol = FEAS_TOL * (1.0 + v0.abs());
    if v0 >= p.bounds.lower - tol && v0 <= p.bounds.upper + tol {
        return Ok(WiQpSolution {
            cost: p.cost(&q0),
            value: v0,
            q: q0,
            multiplier: 0.0,
        });
    }

    let mut best: Option<WiQpSolution> = None;
    for bound in [p.bounds.lower, p.bounds.upper] {
        if !bound.is_finite() {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for j in 0..n {
            kkt[(n, j)] = c[j];
            kkt[(j, n)] = c[j];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&f);
        rhs[n] = bound;
        let sol = kkt.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let q = sol.rows(0, n).into_owned();
        let cand = WiQpSolution {
            cost: p.cost(&q),
            value: value_of(&q),
            multiplier: sol[n],
            q,
        };
        if best.as_ref().is_none_or(|b| cand.cost < b.cost) {
            best = Some(cand);
        }
    }
    best.ok_or(Error::EmptyFeasible)
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub q: DVector<f64>,
    pub cost: f64,
    /// Lattice spacing.
    pub spacing: f64,
    /// Estimated lattice gap `‖∇J(q)‖·r + ½λ_max·r²` with `r = spacing·√N/2`,
    /// the cost variation within half a lattice diagonal of the winner.
    pub gap: f64,
}

/// Best lattice control satisfying
/// `|{i ∈ Z : a ≤ ψ_i ≤ b}|_W ≥ c·|Z|_W`.
///
/// Approximate: only suitable for one-sided comparisons with the gap.
pub fn coverage_scan_oracle(
    p: &DenseProblem,
    region: &[usize],
    coverage: f64,
) -> Result<ScanResult> {
    let n = p.len();
    if n > SCAN_LIMIT {
        return Err(Error::ProblemTooLarge {
            size: n,
            limit: SCAN_LIMIT,
        });
    }
    if n == 0 || region.is_empty() {
        return Err(Error::InvalidParameter(
            "coverage scan needs a nonempty problem and region".into(),
        ));
    }
    if let Some(&bad) = region.iter().find(|&&k| k >= n) {
        return Err(Error::InvalidParameter(format!(
            "region node {bad} out of range"
        )));
    }
    if !(0.0..1.0).contains(&coverage) {
        return Err(Error::InvalidParameter(format!(
            "coverage fraction {coverage} not in [0, 1)"
        )));
    }

    let (h, f) = p.normal_system();
    let center = spd_solve(h.clone(), &f)?;
    let mut half = 3.0 * center.amax();
    if half == 0.0 {
        half = 1.0;
    }
    let spacing = 2.0 * half / (SCAN_POINTS - 1) as f64;
    let lo: Vec<f64> = center.iter().map(|c| c - half).collect();
    let total: f64 = region.iter().map(|&k| p.weights[k]).sum();
    let needed = coverage * total - 1e-12 * total;
    let b = p.bounds;

    // Coordinate 0 is swept incrementally, coordinate n−1 is split across
    // threads and the ones in between are enumerated per line.
    let mid = SCAN_POINTS.pow(n.saturating_sub(2) as u32);
    let col = p.e.column(0).into_owned() * spacing;
    let scan = |outer: usize| -> Option<(f64, usize)> {
        let mut local: Option<(f64, usize)> = None;
        let mut q = DVector::zeros(n);
        for line in 0..mid {
            let mut code = line;
            for j in 1..n.saturating_sub(1) {
                q[j] = lo[j] + spacing * (code % SCAN_POINTS) as f64;
                code /= SCAN_POINTS;
            }
            if n >= 2 {
                q[n - 1] = lo[n - 1] + spacing * outer as f64;
            }
            q[0] = lo[0];
            let mut psi = &p.e * &q;
            let rest: f64 = (1..n).map(|j| p.weights[j] * q[j] * q[j]).sum();
            for i0 in 0..SCAN_POINTS {
                let covered: f64 = region
                    .iter()
                    .filter(|&&k| b.contains(psi[k]))
                    .map(|&k| p.weights[k])
                    .sum();
                if covered >= needed {
                    let q0 = lo[0] + spacing * i0 as f64;
                    let track: f64 = (0..n)
                        .map(|k| p.weights[k] * (psi[k] - p.target[k]).powi(2))
                        .sum();
                    let cost = 0.5 * track + 0.5 * p.alpha * (rest + p.weights[0] * q0 * q0);
                    if local.is_none_or(|(c, _)| cost < c) {
                        local = Some((cost, i0 + SCAN_POINTS * line + SCAN_POINTS * mid * outer));
                    }
                }
                psi += &col;
            }
        }
        local
    };
    let outers = if n >= 2 { SCAN_POINTS } else { 1 };
    let best = (0..outers)
        .into_par_iter()
        .map(scan)
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(f64, usize)>, |acc, x| match acc {
            Some(a) if a.0 <= x.0 => Some(a),
            _ => Some(x),
        });

    let (_, flat) = best.ok_or(Error::EmptyFeasible)?;
    let q = decode_lattice(flat, n, &lo, spacing);
    let cost = p.cost(&q);
    let grad = &h * &q - &f;
    let lambda_max = h.symmetric_eigenvalues().max();
    let r = spacing * (n as f64).sqrt() / 2.0;
    Ok(ScanResult {
        q,
        cost,
        spacing,
        gap: grad.norm() * r + 0.5 * lambda_max * r * r,
    })
}

/// Inverse of the lattice numbering: coordinate 0 is the least significant digit.
fn decode_lattice(mut flat: usize, n: usize, lo: &[f64], spacing: f64) -> DVector<f64> {
    DVector::from_fn(n, |j, _| {
        let idx = flat % SCAN_POINTS;
        flat /= SCAN_POINTS;
        lo[j] + spacing * idx as f64
    })
}
