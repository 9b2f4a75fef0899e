//! Boltzmann toy model of a single domain with an easy x axis in a z field.
//!
//! `H_an = −B M cos θ − K sin²θ cos²φ`; only `a = BM/k_bT` and `b = K/k_bT`
//! enter. The x–y moment imbalance it produces decays with field roughly as
//! `sech(B/B₀)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energies per unit field and temperature in one shared reduced unit; the
/// field argument of every function uses the same unit (mT in the CLI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    /// Net moment M, energy per field unit.
    pub moment: f64,
    /// Anisotropy energy K.
    pub anisotropy: f64,
    /// Thermal energy k_bT.
    pub temperature: f64,
}

impl ToyModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter { name: "temperature", reason: "must be > 0".into() });
        }
        if !(self.anisotropy >= 0.0) {
            return Err(Error::InvalidParameter { name: "anisotropy", reason: "must be >= 0".into() });
        }
        if !self.moment.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    fn reduced(&self, b: f64) -> (f64, f64) {
        (b * self.moment / self.temperature, self.anisotropy / self.temperature)
    }
}

/// Relative tolerance of each nested Simpson integral.
const TOLERANCE: f64 = 1e-11;
const MAX_DEPTH: u32 = 40;
/// Initial panels per dimension before adaptive refinement.
const PANELS: usize = 16;

type V5 = [f64; 5];

fn add(a: V5, b: V5) -> V5 {
    std::array::from_fn(|k| a[k] + b[k])
}

fn axpy(s: f64, a: V5, b: V5) -> V5 {
    std::array::from_fn(|k| s * a[k] + b[k])
}

struct Simpson<'f> {
    f: &'f dyn Fn(f64) -> Result<V5>,
    abs_tol: f64,
    failed: bool,
}

impl Simpson<'_> {
    fn integrate(&mut self, lo: f64, hi: f64) -> Result<V5> {
        let h = (hi - lo) / PANELS as f64;
        let mut total = [0.0; 5];
        for k in 0..PANELS {
            let (a, b) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            let (fa, fm, fb) = ((self.f)(a)?, (self.f)(0.5 * (a + b))?, (self.f)(b)?);
            let whole = simpson(a, b, fa, fm, fb);
            total = add(total, self.refine(a, b, fa, fm, fb, whole, self.abs_tol / PANELS as f64, 0)?);
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, b: f64, fa: V5, fm: V5, fb: V5, whole: V5, tol: f64, depth: u32) -> Result<V5> {
        let m = 0.5 * (a + b);
        let (flm, frm) = ((self.f)(0.5 * (a + m))?, (self.f)(0.5 * (m + b))?);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let both = add(left, right);
        let err = (0..5).map(|k| (both[k] - whole[k]).abs()).fold(0.0, f64::max);
        if err <= 15.0 * tol {
            // Richardson step
            return Ok(axpy(1.0 / 15.0, std::array::from_fn(|k| both[k] - whole[k]), both));
        }
        if depth >= MAX_DEPTH {
            self.failed = true;
            return Ok(both);
        }
        let l = self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
        let r = self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
        Ok(add(l, r))
    }
}

fn simpson(a: f64, b: f64, fa: V5, fm: V5, fb: V5) -> V5 {
    let w = (b - a) / 6.0;
    std::array::from_fn(|k| w * (fa[k] + 4.0 * fm[k] + fb[k]))
}

fn adaptive(f: &dyn Fn(f64) -> Result<V5>, lo: f64, hi: f64, scale: f64, what: &str) -> Result<V5> {
    let mut s = Simpson { f, abs_tol: TOLERANCE * scale, failed: false };
    let v = s.integrate(lo, hi)?;
    if s.failed {
        return Err(Error::QuadratureNonConvergence(format!("{what}: depth limit {MAX_DEPTH} reached")));
    }
    Ok(v)
}

/// `[Z, ∫ sin²θcos²φ, ∫ sin²θsin²φ, ∫ cos²θ, ∫ cos θ]` with the Boltzmann
/// weight divided by `e^shift`, `shift = |a| + b` (its maximum).
fn moments_scaled(a: f64, b: f64) -> Result<(V5, f64)> {
    let shift = a.abs() + b.max(0.0);
    use std::f64::consts::{FRAC_PI_2, PI};
    let outer = |theta: f64| -> Result<V5> {
        let (st, ct) = theta.sin_cos();
        let radial = (a * ct - shift).exp() * st;
        let inner = |phi: f64| -> Result<V5> {
            let c2 = phi.cos().powi(2);
            let w = (b * st * st * c2).exp();
            Ok([w, w * st * st * c2, w * st * st * (1.0 - c2), w * ct * ct, w * ct])
        };
        // the φ integrand has period π and is even about 0: 4 × [0, π/2]
        let scale = (b * st * st).exp() * FRAC_PI_2 / (1.0 + b.max(0.0)).sqrt();
        let v = adaptive(&inner, 0.0, FRAC_PI_2, scale, "phi")?;
        Ok(v.map(|x| 4.0 * radial * x))
    };
    // magnitude estimate for the absolute tolerance of the outer integral
    let scale = 4.0 * PI / ((1.0 + a.abs()) * (1.0 + b.max(0.0)));
    let v = adaptive(&outer, 0.0, PI, scale, "theta")?;
    Ok((v, shift))
}

/// Partition function `∫∫ e^{−H_an/k_bT} sin θ dθ dφ` at field `b_field`.
pub fn partition_function(p: &ToyModelParams, b_field: f64) -> Result<f64> {
    p.validate()?;
    let (a, b) = p.reduced(b_field);
    let (v, shift) = moments_scaled(a, b)?;
    Ok(v[0] * shift.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentExpectations {
    pub mx2: f64,
    pub my2: f64,
    pub mz2: f64,
    pub mz: f64,
}

/// Boltzmann averages `⟨M_x²⟩, ⟨M_y²⟩, ⟨M_z²⟩, ⟨M_z⟩`.
pub fn moment_expectations(p: &ToyModelParams, b_field: f64) -> Result<MomentExpectations> {
    p.validate()?;
    let (a, b) = p.reduced(b_field);
    let (v, _) = moments_scaled(a, b)?;
    let m2 = p.moment * p.moment;
    Ok(MomentExpectations {
        mx2: m2 * v[1] / v[0],
        my2: m2 * v[2] / v[0],
        mz2: m2 * v[3] / v[0],
        mz: p.moment * v[4] / v[0],
    })
}

/// `D(B) = (⟨M_x²⟩ − ⟨M_y²⟩)(B) / (⟨M_x²⟩ − ⟨M_y²⟩)(0)` on `b_grid`.
pub fn anisotropy_profile(p: &ToyModelParams, b_grid: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    if p.anisotropy == 0.0 || p.moment == 0.0 {
        return Err(Error::DegenerateAnisotropy);
    }
    let imbalance = |b: f64| -> Result<f64> {
        let m = moment_expectations(p, b)?;
        Ok(m.mx2 - m.my2)
    };
    let d0 = imbalance(0.0)?;
    if d0 == 0.0 {
        return Err(Error::DegenerateAnisotropy);
    }
    // the profile is even in B; evaluate on |B| so D(−B) = D(B) bit for bit
    b_grid.iter().map(|&b| if b == 0.0 { Ok(1.0) } else { Ok(imbalance(b.abs())? / d0) }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SechFit {
    pub b0: f64,
    pub rms: f64,
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// One-parameter least-squares fit of `sech(B/B₀)` to a normalized profile.
pub fn fit_sech(b: &[f64], d: &[f64]) -> Result<SechFit> {
    if b.len() != d.len() {
        return Err(Error::Dimension(format!("{} fields vs {} values", b.len(), d.len())));
    }
    if b.len() < 8 {
        return Err(Error::FitNonConvergence(format!("need >= 8 points, got {}", b.len())));
    }
    if b.iter().chain(d).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let span = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if span == 0.0 {
        return Err(Error::FitNonConvergence("field grid has zero span".into()));
    }
    let cost = |log_b0: f64| -> f64 {
        let b0 = log_b0.exp();
        b.iter().zip(d).map(|(x, y)| (y - sech(x / b0)).powi(2)).sum()
    };
    // coarse log scan brackets the minimum, golden section refines it
    let (lo, hi) = ((span * 1e-3).ln(), (span * 1e3).ln());
    let n = 400;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let best = (0..=n).min_by(|&i, &j| cost(grid[i]).total_cmp(&cost(grid[j]))).unwrap_or(0);
    if best == 0 || best == n {
        return Err(Error::FitNonConvergence("B0 at the edge of the search range".into()));
    }
    let (mut x0, mut x3) = (grid[best - 1], grid[best + 1]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = x3 - phi * (x3 - x0);
    let mut x2 = x0 + phi * (x3 - x0);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if x3 - x0 < 1e-14 {
            break;
        }
        if f1 < f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - phi * (x3 - x0);
            f1 = cost(x1);
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + phi * (x3 - x0);
            f2 = cost(x2);
        }
    }
    let log_b0 = 0.5 * (x0 + x3);
    Ok(SechFit { b0: log_b0.exp(), rms: (cost(log_b0) / b.len() as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn toy(k: f64) -> ToyModelParams {
        ToyModelParams { moment: 1.0, anisotropy: k, temperature: 1.0 }
    }

    /// Composite trapezoid on an n×n (θ, φ) grid.
    fn trapezoid(a: f64, b: f64, n: usize) -> [f64; 5] {
        let (ht, hp) = (PI / n as f64, 2.0 * PI / n as f64);
        let mut acc = [0.0; 5];
        for i in 0..=n {
            let t = i as f64 * ht;
            let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
            let (st, ct) = t.sin_cos();
            for j in 0..n {
                // periodic in φ: plain sum is the trapezoid rule
                let c2 = (j as f64 * hp).cos().powi(2);
                let w = wt * (a * ct + b * st * st * c2).exp() * st;
                let s = [1.0, st * st * c2, st * st * (1.0 - c2), ct * ct, ct];
                for k in 0..5 {
                    acc[k] += w * s[k];
                }
            }
        }
        acc.map(|x| x * ht * hp)
    }

    #[test]
    fn isotropic_zero_field() {
        let z = partition_function(&toy(0.0), 0.0).unwrap();
        assert!((z / (4.0 * PI) - 1.0).abs() < 1e-8);
        let m = moment_expectations(&toy(0.0), 0.0).unwrap();
        for v in [m.mx2, m.my2, m.mz2] {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
        assert!(m.mz.abs() < 1e-10);
    }

    #[test]
    fn isotropic_field_matches_sinh() {
        for a in [0.3, 1.0, 4.0, 12.0] {
            let z = partition_function(&toy(0.0), a).unwrap();
            let oracle = 4.0 * PI * a.sinh() / a;
            assert!((z / oracle - 1.0).abs() < 1e-8, "a={a}");
        }
    }

    #[test]
    fn anisotropic_matches_trapezoid() {
        let oracle = trapezoid(1.0, 2.0, 2000);
        let z = partition_function(&toy(2.0), 1.0).unwrap();
        assert!((z / oracle[0] - 1.0).abs() < 1e-6);
        let m = moment_expectations(&toy(2.0), 0.0).unwrap();
        let o0 = trapezoid(0.0, 2.0, 2000);
        assert!((m.mx2 - o0[1] / o0[0]).abs() < 1e-6);
        assert!((m.my2 - o0[2] / o0[0]).abs() < 1e-6);
        assert!(m.mx2 > m.my2);
    }

    #[test]
    fn strong_field_saturates() {
        let m = moment_expectations(&toy(1.0), 200.0).unwrap();
        assert!(m.mz > 0.99);
        assert!(m.mx2 < 0.01 && m.my2 < 0.01);
    }

    #[test]
    fn sum_rule() {
        let p = ToyModelParams { moment: 2.5, anisotropy: 3.0, temperature: 1.5 };
        for b in [-4.0, 0.0, 0.7, 9.0] {
            let m = moment_expectations(&p, b).unwrap();
            assert!((m.mx2 + m.my2 + m.mz2 - 6.25).abs() < 1e-8);
        }
    }

    #[test]
    fn profile_shape() {
        let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.5).collect();
        let d = anisotropy_profile(&toy(2.0), &grid).unwrap();
        assert_eq!(d[20], 1.0);
        for k in 0..20 {
            assert!((d[k] - d[40 - k]).abs() < 1e-9);
            if k > 0 {
                assert!(d[20 + k] < d[20 + k - 1]);
            }
        }
        assert!(matches!(anisotropy_profile(&toy(0.0), &grid), Err(Error::DegenerateAnisotropy)));
    }

    #[test]
    fn sech_round_trip() {
        let b: Vec<f64> = (-40..=40).map(|k| k as f64).collect();
        let d: Vec<f64> = b.iter().map(|x| sech(x / 18.5)).collect();
        let fit = fit_sech(&b, &d).unwrap();
        assert!((fit.b0 - 18.5).abs() < 1e-6);
        assert!(fit.rms < 1e-9);
    }

    #[test]
    fn sech_fit_rejects_short_input() {
        assert!(matches!(fit_sech(&[0.0, 1.0], &[1.0, 0.9]), Err(Error::FitNonConvergence(_))));
    }

    #[test]
    fn toy_profile_is_sech_like() {
        let b: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let d = anisotropy_profile(&toy(2.0), &b).unwrap();
        let fit = fit_sech(&b, &d).unwrap();
        assert!(fit.b0.is_finite() && fit.b0 > 0.0);
        assert!(fit.rms < 0.05, "rms {}", fit.rms);
    }
}
