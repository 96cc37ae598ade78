//! Preconditioned conjugate gradient for symmetric positive (semi)definite
//! operators given only as closures.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgStats {
    pub iterations: usize,
    /// ‖H·x − rhs‖ / ‖rhs‖, recomputed from scratch at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(apply: &impl Fn(&[f64], &mut [f64]), rhs: &[f64], x: &[f64], r: &mut [f64]) {
    apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}

/// Solves `H x = rhs` starting from the contents of `x`.
///
/// `apply(v, out)` writes H·v, `precond(r, out)` writes M⁻¹·r. Stops once the
/// residual, recomputed explicitly rather than taken from the recurrence,
/// satisfies ‖H x − rhs‖ ≤ tol·‖rhs‖, or after `max_iter` iterations.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgStats {
    let n = rhs.len();
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let threshold = tol * rhs_norm;

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    true_residual(&apply, rhs, x, &mut r);
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    let mut iterations = 0;
    while iterations < max_iter {
        if norm(&r) <= threshold {
            // guard against drift of the recursive residual
            true_residual(&apply, rhs, x, &mut r);
            if norm(&r) <= threshold {
                break;
            }
            precond(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !(rz > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        iterations += 1;
    }

    true_residual(&apply, rhs, x, &mut r);
    let relative_residual = norm(&r) / rhs_norm;
    CgStats {
        iterations,
        relative_residual,
        converged: relative_residual <= tol,
    }
}
