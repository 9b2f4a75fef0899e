//! Levenberg–Marquardt least squares with a central-difference Jacobian.

use crate::error::{Error, Result};

/// Residual vector as a function of the parameters.
pub type Residuals<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub ftol: f64,
    /// Stop when the step is below `xtol · (|x| + xtol)`.
    pub xtol: f64,
    /// Relative finite-difference step.
    pub diff_step: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, ftol: 1e-15, xtol: 1e-12, diff_step: 1e-6, initial_lambda: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub history: Vec<f64>,
    /// `JᵀJ` at the returned point.
    pub jtj: Vec<Vec<f64>>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Central-difference Jacobian, row-major `m × n`.
pub fn jacobian(f: &Residuals, x: &[f64], rel_step: f64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel_step * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let up = f(&xp)?;
        xp[j] = x[j] - h;
        let down = f(&xp)?;
        xp[j] = x[j];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    Ok((0..m).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn normal_equations(j: &[Vec<f64>], r: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = vec![vec![0.0; n]; n];
    let mut g = vec![0.0; n];
    for (row, ri) in j.iter().zip(r) {
        for p in 0..n {
            g[p] += row[p] * ri;
            for q in p..n {
                a[p][q] += row[p] * row[q];
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            a[p][q] = a[q][p];
        }
    }
    (a, g)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k] == 0.0 || !a[p][k].is_finite() {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for c in k..n {
                a[i][c] -= f * a[k][c];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[i][c] * x[c]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Minimizes `Σ r_i(x)²`. A step is only accepted when it lowers the cost,
/// so `history` is non-increasing.
pub fn levenberg_marquardt(f: &Residuals, x0: &[f64], opts: &LmOptions) -> Result<LmResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    if n == 0 {
        return Ok(LmResult { x, cost, residuals: r, iterations: 0, converged: true, history, jtj: Vec::new() });
    }
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut j = jacobian(f, &x, opts.diff_step)?;
    let (mut a, mut g) = normal_equations(&j, &r, n);

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut accepted = false;
        // raise λ until a step lowers the cost
        for _ in 0..40 {
            let mut damped = a.clone();
            for p in 0..n {
                damped[p][p] += lambda * a[p][p].max(1e-30);
            }
            let Some(step) = solve_dense(damped, g.iter().map(|v| -v).collect()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let rt = match f(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) => rt,
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let ct = sum_sq(&rt);
            if ct < cost {
                let small_step = step.iter().zip(&x).all(|(s, xi)| s.abs() <= opts.xtol * (xi.abs() + opts.xtol));
                let small_gain = (cost - ct) <= opts.ftol * cost;
                x = trial;
                r = rt;
                cost = ct;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small_step || small_gain || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a (numerical) minimum
            converged = true;
        }
        j = jacobian(f, &x, opts.diff_step)?;
        (a, g) = normal_equations(&j, &r, n);
        if converged {
            break;
        }
    }
    Ok(LmResult { x, cost, residuals: r, iterations, converged, history, jtj: a })
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// ascending.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        let diag: f64 = (0..n).map(|i| a[i][i].powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
