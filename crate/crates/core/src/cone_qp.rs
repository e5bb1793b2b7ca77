//! Small dense QP `min ½ νᵀQν + cᵀν` with `ν_j ≥ 0` on the non-free
//! coordinates, solved by a Lawson–Hanson style active-set iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn solve_sign_qp(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    free: &[bool],
) -> Result<DVector<f64>> {
    let m = c.len();
    debug_assert_eq!(q.nrows(), m);
    debug_assert_eq!(free.len(), m);
    if m == 0 {
        return Ok(DVector::zeros(0));
    }

    let scale = c.amax().max(q.amax() * 1e-300).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;

    let mut passive: Vec<bool> = free.to_vec();
    let mut x = DVector::zeros(m);
    if passive.iter().any(|&p| p) {
        x = solve_subsystem(q, c, &passive)?;
    }

    let max_outer = 3 * m + 10;
    for _ in 0..max_outer {
        let w = -(q * &x + c);
        let mut best = None;
        for j in 0..m {
            if !passive[j] && w[j] > tol && best.is_none_or(|b: usize| w[j] > w[b]) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            let z = solve_subsystem(q, c, &passive)?;
            let blocking: Vec<usize> = (0..m)
                .filter(|&i| passive[i] && !free[i] && z[i] <= 0.0)
                .collect();
            if blocking.is_empty() {
                x = z;
                break;
            }
            let mut alpha = 1.0f64;
            for &i in &blocking {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            x += (z - &x) * alpha;
            let mut dropped = false;
            for i in 0..m {
                if passive[i] && !free[i] && x[i] <= 1e-15 * scale.max(1.0) {
                    passive[i] = false;
                    x[i] = 0.0;
                    dropped = true;
                }
            }
            if !dropped || inner > m + 5 {
                // numerical stall: keep the feasible iterate
                break;
            }
        }
    }
    for j in 0..m {
        if !free[j] && x[j] < 0.0 {
            x[j] = 0.0;
        }
    }
    Ok(x)
}

fn solve_subsystem(q: &DMatrix<f64>, c: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..c.len()).filter(|&i| passive[i]).collect();
    let k = idx.len();
    let mut out = DVector::zeros(c.len());
    if k == 0 {
        return Ok(out);
    }
    let sub = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(k, |a, _| -c[idx[a]]);
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => sub.lu().solve(&rhs).ok_or(Error::SingularSystem)?,
    };
    for (a, &i) in idx.iter().enumerate() {
        out[i] = sol[a];
    }
    Ok(out)
}
