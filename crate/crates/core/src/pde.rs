//! Discrete Poisson operator `A = -Δ_h` with homogeneous Dirichlet data, its
//! solution operator `E = A⁻¹` and the adjoint `E*`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
    /// Symmetric SOR with relaxation factor `omega ∈ (0, 2)`.
    Ssor {
        omega: f64,
    },
}

/// Matrix-free `-Δ_h` on the interior unknowns of a grid.
///
/// Linear solves use conjugate gradients; every call to
/// [`solve_state`](Self::solve_state) or [`solve_adjoint`](Self::solve_adjoint)
/// bumps an atomic counter so experiments sharing an operator can still
/// report PDE-solve totals.
#[derive(Debug)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    solver_tol: f64,
    preconditioner: Preconditioner,
    solve_count: AtomicUsize,
}

impl DiscreteOperator {
    pub fn new(grid: &Arc<Grid>) -> Self {
        DiscreteOperator {
            grid: Arc::clone(grid),
            solver_tol: DEFAULT_SOLVER_TOL,
            preconditioner: Preconditioner::None,
            solve_count: AtomicUsize::new(0),
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance {tol} not in (0, 1)"
            )));
        }
        self.solver_tol = tol;
        Ok(self)
    }

    pub fn with_preconditioner(mut self, pc: Preconditioner) -> Result<Self> {
        if let Preconditioner::Ssor { omega } = pc {
            if !(omega > 0.0 && omega < 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "SSOR omega {omega} not in (0, 2)"
                )));
            }
        }
        self.preconditioner = pc;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn solver_tol(&self) -> f64 {
        self.solver_tol
    }

    pub fn preconditioner(&self) -> Preconditioner {
        self.preconditioner
    }

    /// Number of linear solves performed so far.
    pub fn solve_count(&self) -> usize {
        self.solve_count.load(Ordering::SeqCst)
    }

    fn check(&self, f: &Field) -> Result<()> {
        if Arc::ptr_eq(f.grid(), &self.grid) || **f.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `-Δ_h u`; Dirichlet neighbours contribute zero.
    pub fn apply_a(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut out = vec![0.0; u.len()];
        self.apply_raw(u.values(), &mut out);
        Field::from_values(&self.grid, out)
    }

    fn apply_raw(&self, u: &[f64], out: &mut [f64]) {
        let st = self.grid.stencil();
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = st.diag * u[k];
            for (slot, nb) in self.grid.neighbors(k).iter().enumerate() {
                if let Some(m) = nb {
                    acc += st.off[slot] * u[*m];
                }
            }
            *o = acc;
        }
    }

    /// State solve `ψ = E q`.
    pub fn solve_state(&self, q: &Field) -> Result<Field> {
        self.check(q)?;
        self.solve_count.fetch_add(1, Ordering::SeqCst);
        let x = self.cg(q.values())?;
        Field::from_values(&self.grid, x)
    }

    /// Adjoint solve `λ = E* r`. The stencil is symmetric so this is the
    /// same linear solve as [`solve_state`](Self::solve_state).
    pub fn solve_adjoint(&self, r: &Field) -> Result<Field> {
        self.check(r)?;
        self.solve_count.fetch_add(1, Ordering::SeqCst);
        let x = self.cg(r.values())?;
        Field::from_values(&self.grid, x)
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let st = self.grid.stencil();
        match self.preconditioner {
            Preconditioner::None => z.copy_from_slice(r),
            Preconditioner::Jacobi => {
                for (zi, ri) in z.iter_mut().zip(r) {
                    *zi = ri / st.diag;
                }
            }
            Preconditioner::Ssor { omega } => {
                // (D + ωL) y = r ; y ← D y ; (D + ωU) z = y ; z ← ω(2-ω) z
                // Interior numbering is row-major, so slots x- and y- point
                // to lower indices and x+, y+ to higher ones.
                let n = r.len();
                for k in 0..n {
                    let mut acc = r[k];
                    for slot in [0, 2] {
                        if let Some(m) = self.grid.neighbors(k)[slot] {
                            acc -= omega * st.off[slot] * z[m];
                        }
                    }
                    z[k] = acc / st.diag;
                }
                for zk in z.iter_mut() {
                    *zk *= st.diag;
                }
                for k in (0..n).rev() {
                    let mut acc = z[k];
                    for slot in [1, 3] {
                        if let Some(m) = self.grid.neighbors(k)[slot] {
                            acc -= omega * st.off[slot] * z[m];
                        }
                    }
                    z[k] = acc / st.diag;
                }
                let s = omega * (2.0 - omega);
                z.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    fn cg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let bnorm = norm2(b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let target = self.solver_tol * bnorm;
        let cap = 10 * n;
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ap = vec![0.0; n];
        let mut iters = 0;

        // Restart from the true residual if the recursive one drifted.
        while iters < cap {
            self.precondition(&r, &mut z);
            p.copy_from_slice(&z);
            let mut rz = dot(&r, &z);
            while iters < cap {
                iters += 1;
                self.apply_raw(&p, &mut ap);
                let pap = dot(&p, &ap);
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                if norm2(&r) <= target {
                    break;
                }
                self.precondition(&r, &mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
            self.apply_raw(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            if norm2(&r) <= target {
                return Ok(x);
            }
        }
        Err(Error::SolverFailure {
            iterations: iters,
            residual: norm2(&r) / bnorm,
        })
    }

    /// Target state `ψ̄ = E(g) / ‖E(g)‖` with `g(x) = exp(-|x|²/4)`.
    pub fn build_target(&self) -> Result<Field> {
        let g = Field::from_fn(&self.grid, |p| (-(p[0] * p[0] + p[1] * p[1]) / 4.0).exp());
        let mut psi = self.solve_state(&g)?;
        let nrm = psi.norm();
        psi.scale(1.0 / nrm);
        Ok(psi)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
