//! Dense convex QP with equality constraints and lower bounds:
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx   subject to   Ax = b,  x ≥ lo
//! ```
//!
//! Solved by an OSQP-style ADMM splitting (one Cholesky factorisation of
//! `P + σI + ρ_eq AᵀA + ρI`) followed by a primal-dual active-set polish that
//! solves the reduced KKT system exactly. `P` must be positive definite.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("QP did not reach the requested accuracy (equality residual {eq_residual:e}, kkt residual {kkt_residual:e})")]
    NoConvergence { eq_residual: f64, kkt_residual: f64 },
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// `½ xᵀPx + qᵀx`
    pub objective: f64,
    /// `‖Ax − b‖∞`
    pub eq_residual: f64,
    /// Projected-gradient (KKT stationarity) residual in the max norm.
    pub kkt_residual: f64,
    pub admm_iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    pub max_admm_iterations: usize,
    pub sigma: f64,
    pub rho: f64,
    pub rho_eq: f64,
    pub relaxation: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_admm_iterations: 20_000,
            sigma: 1e-6,
            rho: 0.1,
            rho_eq: 100.0,
            relaxation: 1.6,
        }
    }
}

pub fn solve(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution, QpError> {
    let nx = q.len();
    let na = b.len();
    let (rho, rho_eq, sigma, alpha) = (opts.rho, opts.rho_eq, opts.sigma, opts.relaxation);

    let mut k = p.clone();
    k += a.transpose() * a * rho_eq;
    for j in 0..nx {
        k[(j, j)] += sigma + rho;
    }
    let chol = k.cholesky().ok_or(QpError::NotPositiveDefinite)?;

    let mut x = DVector::<f64>::zeros(nx);
    let mut z_box = lo.map(|v| v.max(0.0));
    let mut z_eq = b.clone();
    let mut y_box = DVector::<f64>::zeros(nx);
    let mut y_eq = DVector::<f64>::zeros(na);
    let inner_tol = (opts.tol * 1e-2).max(1e-13);
    let mut iterations = 0;

    for it in 0..opts.max_admm_iterations {
        iterations = it + 1;
        let rhs =
            &x * sigma - q + a.transpose() * (&z_eq * rho_eq - &y_eq) + (&z_box * rho - &y_box);
        let x_tilde = chol.solve(&rhs);
        let ax_tilde = a * &x_tilde;

        let x_new = &x_tilde * alpha + &x * (1.0 - alpha);
        let eq_relaxed = &ax_tilde * alpha + &z_eq * (1.0 - alpha);
        let box_relaxed = &x_tilde * alpha + &z_box * (1.0 - alpha);

        let z_eq_new = b.clone();
        let mut z_box_new = &box_relaxed + &y_box / rho;
        for j in 0..nx {
            z_box_new[j] = z_box_new[j].max(lo[j]);
        }
        y_eq += (&eq_relaxed - &z_eq_new) * rho_eq;
        y_box += (&box_relaxed - &z_box_new) * rho;
        x = x_new;
        z_eq = z_eq_new;
        z_box = z_box_new;

        if it % 25 == 24 {
            let prim = (a * &x - b).amax().max((&x - &z_box).amax());
            let dual = (p * &x + q + a.transpose() * &y_eq + &y_box).amax();
            if prim < inner_tol && dual < inner_tol {
                break;
            }
        }
    }

    let mut best = finish(p, q, a, b, lo, project_box(&x, lo), iterations);
    if let Some(polished) = polish(p, q, a, b, lo, &best.x, iterations) {
        if polished.kkt_residual.max(polished.eq_residual)
            <= best.kkt_residual.max(best.eq_residual)
        {
            best = polished;
        }
    }
    if best.eq_residual > opts.tol || best.kkt_residual > opts.tol {
        return Err(QpError::NoConvergence {
            eq_residual: best.eq_residual,
            kkt_residual: best.kkt_residual,
        });
    }
    Ok(best)
}

fn project_box(x: &DVector<f64>, lo: &DVector<f64>) -> DVector<f64> {
    x.zip_map(lo, |v, l| v.max(l))
}

fn finish(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &DVector<f64>,
    x: DVector<f64>,
    admm_iterations: usize,
) -> QpSolution {
    let px = p * &x;
    let objective = 0.5 * x.dot(&px) + q.dot(&x);
    let eq_residual = if b.is_empty() {
        0.0
    } else {
        (a * &x - b).amax()
    };
    let grad = px + q;
    let kkt_residual = projected_gradient(a, &grad, &x, lo);
    QpSolution {
        x,
        objective,
        eq_residual,
        kkt_residual,
        admm_iterations,
    }
}

/// Stationarity residual: best multiplier `ν` for the equalities fitted on the
/// free coordinates, then the free gradient norm and the wrong-sign part on
/// coordinates sitting at their bound.
fn projected_gradient(
    a: &DMatrix<f64>,
    grad: &DVector<f64>,
    x: &DVector<f64>,
    lo: &DVector<f64>,
) -> f64 {
    let nx = x.len();
    let free: Vec<usize> = (0..nx).filter(|&j| x[j] > lo[j] + 1e-12).collect();
    let na = a.nrows();
    let nu = if na == 0 || free.is_empty() {
        DVector::zeros(na)
    } else {
        let af = a.select_columns(&free);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
        let mut m = &af * af.transpose();
        for r in 0..na {
            m[(r, r)] += 1e-14;
        }
        let rhs = -(&af * gf);
        m.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(na))
    };
    let reduced = grad + a.transpose() * nu;
    let mut worst: f64 = 0.0;
    for j in 0..nx {
        let r = reduced[j];
        let v = if x[j] > lo[j] + 1e-12 {
            r.abs()
        } else {
            (-r).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn polish(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &DVector<f64>,
    start: &DVector<f64>,
    admm_iterations: usize,
) -> Option<QpSolution> {
    let nx = start.len();
    let na = b.len();
    let mut active: Vec<bool> = (0..nx).map(|j| start[j] <= lo[j] + 1e-7).collect();
    for _ in 0..50 {
        let free: Vec<usize> = (0..nx).filter(|&j| !active[j]).collect();
        let fixed: Vec<usize> = (0..nx).filter(|&j| active[j]).collect();
        let nf = free.len();
        let dim = nf + na;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (r, &j) in free.iter().enumerate() {
            for (c, &l) in free.iter().enumerate() {
                kkt[(r, c)] = p[(j, l)];
            }
            for e in 0..na {
                kkt[(r, nf + e)] = a[(e, j)];
                kkt[(nf + e, r)] = a[(e, j)];
            }
            rhs[r] = -q[j] - fixed.iter().map(|&l| p[(j, l)] * lo[l]).sum::<f64>();
        }
        for e in 0..na {
            kkt[(nf + e, nf + e)] = -1e-13;
            rhs[nf + e] = b[e] - fixed.iter().map(|&l| a[(e, l)] * lo[l]).sum::<f64>();
        }
        let lu = kkt.clone().lu();
        let mut sol = lu.solve(&rhs)?;
        // two rounds of iterative refinement against the regularised system
        for _ in 0..2 {
            let resid = &rhs - &kkt * &sol;
            if let Some(d) = lu.solve(&resid) {
                sol += d;
            }
        }
        let mut x = lo.clone();
        for (r, &j) in free.iter().enumerate() {
            x[j] = sol[r];
        }
        let nu = sol.rows(nf, na).into_owned();
        let reduced = p * &x + q + a.transpose() * &nu;

        let mut changed = false;
        for j in 0..nx {
            if active[j] && reduced[j] < -1e-10 {
                active[j] = false;
                changed = true;
            } else if !active[j] && x[j] < lo[j] - 1e-12 {
                active[j] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(finish(p, q, a, b, lo, project_box(&x, lo), admm_iterations));
        }
    }
    None
}
