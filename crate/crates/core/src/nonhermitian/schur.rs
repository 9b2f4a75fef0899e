//! Complex Schur decomposition `A = Z T Z†` and right eigenvectors of `A`.
//!
//! Householder reduction to Hessenberg form, then single-shift QR with
//! Wilkinson shifts and Givens rotations. Eigenvectors come from
//! back-substitution on the triangular factor. Sized for n ≤ 16.

use crate::error::{Error, Result};
use crate::matrix::{norm2, ComplexMatrix, C64, ONE, ZERO};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

pub(crate) struct Schur {
    pub t: ComplexMatrix,
    pub z: ComplexMatrix,
}

pub(crate) fn schur(a: &ComplexMatrix) -> Result<Schur> {
    let n = a.dim();
    let mut h = a.clone();
    let mut z = ComplexMatrix::identity(n);
    hessenberg(&mut h, &mut z);
    qr_iterate(&mut h, &mut z)?;
    Ok(Schur { t: h, z })
}

fn hessenberg(h: &mut ComplexMatrix, z: &mut ComplexMatrix) {
    let n = h.dim();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = norm2(&x);
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { ONE };
        let mut v = x;
        v[0] += phase * xnorm;
        let vnorm = norm2(&v);
        v.iter_mut().for_each(|c| *c /= vnorm);

        // H <- P H with P = I - 2 v v†, acting on rows k+1..n
        for j in 0..n {
            let s: C64 = v.iter().enumerate().map(|(a, va)| va.conj() * h[(k + 1 + a, j)]).sum();
            for (a, va) in v.iter().enumerate() {
                h[(k + 1 + a, j)] -= *va * s * 2.0;
            }
        }
        // H <- H P and Z <- Z P, acting on columns k+1..n
        for m in [&mut *h, &mut *z] {
            for i in 0..n {
                let s: C64 = v.iter().enumerate().map(|(a, va)| m[(i, k + 1 + a)] * va).sum();
                for (a, va) in v.iter().enumerate() {
                    m[(i, k + 1 + a)] -= s * va.conj() * 2.0;
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
}

/// Rotation `G = [[c, s], [-s̄, c]]` with `G (x, y)ᵀ = (·, 0)ᵀ`.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn qr_iterate(h: &mut ComplexMatrix, z: &mut ComplexMatrix) -> Result<()> {
    let n = h.dim();
    if n == 0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let max_total = MAX_SWEEPS_PER_EIGENVALUE * n;
    let mut rotations: Vec<(f64, C64)> = Vec::with_capacity(n);

    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let tol = eps * if diag > 0.0 { diag } else { scale };
            if sub <= tol {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_total {
            return Err(Error::EigenNonConvergence { iterations: total });
        }

        let mu = if iter % 11 == 0 {
            // exceptional shift to break cycles
            h[(hi, hi)] + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rotations.clear();
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let a = h[(k, j)];
                let b = h[(k + 1, j)];
                h[(k, j)] = a * c + s * b;
                h[(k + 1, j)] = -s.conj() * a + b * c;
            }
            h[(k + 1, k)] = ZERO;
            rotations.push((c, s));
        }
        for (idx, &(c, s)) in rotations.iter().enumerate() {
            let k = lo + idx;
            for i in 0..=(k + 1).min(hi) {
                let a = h[(i, k)];
                let b = h[(i, k + 1)];
                h[(i, k)] = a * c + b * s.conj();
                h[(i, k + 1)] = -a * s + b * c;
            }
            for i in 0..n {
                let a = z[(i, k)];
                let b = z[(i, k + 1)];
                z[(i, k)] = a * c + b * s.conj();
                z[(i, k + 1)] = -a * s + b * c;
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(())
}

/// Eigenvalues and unit-norm right eigenvectors, in Schur order.
pub(crate) fn eigen_right(a: &ComplexMatrix) -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = a.dim();
    let Schur { t, z } = schur(a)?;
    let small = f64::EPSILON * t.max_abs().max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = vec![ZERO; n];
        y[k] = ONE;
        for i in (0..k).rev() {
            let s: C64 = (i + 1..=k).map(|j| t[(i, j)] * y[j]).sum();
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            y[i] = -s / denom;
        }
        let mut x = z.mul_vec(&y);
        let nrm = norm2(&x);
        x.iter_mut().for_each(|c| *c /= nrm);
        values.push(lambda);
        vectors.push(x);
    }
    Ok((values, vectors))
}
