//! Elimination of the lossy circulator modes and the two-site
//! similarity analysis of the resulting cavity Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{norm2, ComplexMatrix, C64};

use super::{eig_biorthogonal, EigenSystem};

/// Off-diagonal modulus treated as zero, GHz.
const NEGLIGIBLE_COUPLING: f64 = 1e-15;

/// Effective 2x2 cavity Hamiltonian after adiabatic elimination.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReducedModel {
    /// H' in GHz, basis (cavity 1, cavity 2).
    pub h: ComplexMatrix,
    /// Probe frequency the circulator block was evaluated at, GHz.
    pub omega_bar_ghz: f64,
    pub h12_mhz: f64,
    pub h21_mhz: f64,
    /// √(|H₂₁| / |H₁₂|); reported as 1 when `degenerate`.
    pub r: f64,
    /// Set when either off-diagonal coupling vanishes.
    pub degenerate: bool,
}

impl ReducedModel {
    pub fn from_matrix(h: ComplexMatrix, omega_bar_ghz: f64) -> Self {
        let a12 = h[(0, 1)].norm();
        let a21 = h[(1, 0)].norm();
        let degenerate = a12 < NEGLIGIBLE_COUPLING || a21 < NEGLIGIBLE_COUPLING;
        let r = if degenerate { 1.0 } else { (a21 / a12).sqrt() };
        Self { h, omega_bar_ghz, h12_mhz: a12 * 1e3, h21_mhz: a21 * 1e3, r, degenerate }
    }
}

/// Folds the circulator block of a 4x4 Hamiltonian (indices 2, 3) into the
/// cavity block: `H' = A + B (ω̄ I − D)⁻¹ C`.
///
/// `omega_bar_ghz = None` evaluates at the mean bare cavity frequency
/// `(H₁₁ + H₂₂)/2` (real part).
pub fn adiabatic_eliminate(h4: &ComplexMatrix, omega_bar_ghz: Option<f64>) -> Result<ReducedModel> {
    if h4.dim() != 4 {
        return Err(Error::Dimension(format!("expected 4x4, got {}x{}", h4.dim(), h4.dim())));
    }
    let omega_bar = omega_bar_ghz.unwrap_or(0.5 * (h4[(0, 0)].re + h4[(1, 1)].re));
    let a = h4.block(0, 0, 2);
    let b = h4.block(0, 2, 2);
    let c = h4.block(2, 0, 2);
    let d = h4.block(2, 2, 2);
    let resolvent = d
        .resolvent_operand(C64::new(omega_bar, 0.0))
        .inverse()
        .ok_or(Error::SingularBlock { omega_bar })?;
    let h = &a + &(&(&b * &resolvent) * &c);
    Ok(ReducedModel::from_matrix(h, omega_bar))
}

/// Reciprocal image of a reduced model under `S = diag(√r, 1/√r)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimilarityResult {
    /// `S H' S⁻¹`, with equal off-diagonal moduli.
    pub h_rec: ComplexMatrix,
    pub r: f64,
    /// Diagonal of `S`.
    pub transform: [f64; 2],
}

pub fn similarity_analysis(rm: &ReducedModel) -> Result<SimilarityResult> {
    let a12 = rm.h[(0, 1)].norm();
    let a21 = rm.h[(1, 0)].norm();
    if a12 < NEGLIGIBLE_COUPLING || a21 < NEGLIGIBLE_COUPLING {
        return Err(Error::DegenerateCoupling);
    }
    let r = (a21 / a12).sqrt();
    let s = [r.sqrt(), 1.0 / r.sqrt()];
    let h_rec = ComplexMatrix::from_fn(2, |i, j| rm.h[(i, j)] * (s[i] / s[j]));
    Ok(SimilarityResult { h_rec, r, transform: s })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitClass {
    /// R₁ ≈ 1: the mode sits on site 1.
    Unity,
    /// R₁ ≈ r²: the mode sits on site 2.
    RSquared,
    /// r ≈ 1, both limits coincide.
    Reciprocal,
    Intermediate,
}

/// Two-site limit analysis of one reduced eigenmode.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModeLimit {
    pub mode: usize,
    /// |x / y| of the reciprocal-frame right eigenvector.
    pub component_ratio: f64,
    /// R₁ from the two-site closed form.
    pub r1: f64,
    pub class: LimitClass,
}

/// Relative window used to place R₁ in one of the two limits.
pub const LIMIT_WINDOW: f64 = 0.15;

/// Evaluates, for each eigenmode of `H'`, the closed-form site-1 ratio
///
/// `R₁ = r √(|x|²/r + |y|² r) / √(|x|² r + |y|²/r)`
///
/// with `(x, y)` the unit-normalized reciprocal-frame components `S|n_R⟩`,
/// and classifies it against the `R₁ ≈ 1` and `R₁ ≈ r²` limits.
pub fn r_limit_check(rm: &ReducedModel, es2: &EigenSystem) -> Result<Vec<ModeLimit>> {
    if es2.len() != 2 {
        return Err(Error::Dimension("expected a 2-mode eigensystem".into()));
    }
    let r = rm.r;
    let s = [r.sqrt(), 1.0 / r.sqrt()];
    let mut out = Vec::with_capacity(2);
    for (mode, m) in es2.modes.iter().enumerate() {
        let rec: Vec<C64> = m.right.iter().zip(s).map(|(c, f)| c * f).collect();
        let nrm = norm2(&rec);
        let (x, y) = (rec[0].norm() / nrm, rec[1].norm() / nrm);
        let r1 = closed_form_r1(x, y, r);
        let near = |target: f64| (r1 / target - 1.0).abs() <= LIMIT_WINDOW;
        let class = if (r * r - 1.0).abs() <= LIMIT_WINDOW && near(1.0) {
            LimitClass::Reciprocal
        } else if near(1.0) {
            LimitClass::Unity
        } else if near(r * r) {
            LimitClass::RSquared
        } else {
            LimitClass::Intermediate
        };
        let component_ratio = if y > 0.0 { x / y } else { f64::INFINITY };
        out.push(ModeLimit { mode, component_ratio, r1, class });
    }
    Ok(out)
}

fn closed_form_r1(x: f64, y: f64, r: f64) -> f64 {
    let (x2, y2) = (x * x, y * y);
    r * (x2 / r + y2 * r).sqrt() / (x2 * r + y2 / r).sqrt()
}

/// Convenience: eigensystem of the reduced Hamiltonian.
pub fn reduced_eigensystem(rm: &ReducedModel) -> Result<EigenSystem> {
    eig_biorthogonal(&rm.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_four_mode, ModelParams};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn no_coupling_returns_cavity_block() {
        let p = ModelParams { g_x0_mhz: 0.0, g_x1: 0.0, g_y0_mhz: 0.0, g_y1: 0.0, ..ModelParams::hybrid_device() };
        let h4 = build_four_mode(&p, 20.0);
        let rm = adiabatic_eliminate(&h4, None).unwrap();
        assert_eq!(rm.h, h4.block(0, 0, 2));
        assert!(rm.degenerate);
        assert_eq!(rm.r, 1.0);
    }

    #[test]
    fn zero_field_is_reciprocal() {
        let rm = adiabatic_eliminate(&build_four_mode(&ModelParams::hybrid_device(), 0.0), None).unwrap();
        assert!((rm.h12_mhz - rm.h21_mhz).abs() < 1e-12);
        assert!((rm.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_block_detected() {
        let mut h4 = ComplexMatrix::zeros(4);
        h4[(2, 2)] = c(1.0, 0.0);
        h4[(3, 3)] = c(2.0, 0.0);
        assert!(matches!(adiabatic_eliminate(&h4, Some(1.0)), Err(Error::SingularBlock { .. })));
    }

    #[test]
    fn balancing_hand_example() {
        let h = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(4.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let rm = ReducedModel::from_matrix(h, 0.0);
        assert!((rm.r - 0.5).abs() < 1e-15);
        let sim = similarity_analysis(&rm).unwrap();
        assert!((sim.h_rec[(0, 1)] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((sim.h_rec[(1, 0)] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn reciprocal_input_is_unchanged() {
        let h = ComplexMatrix::from_rows(&[vec![c(1.0, -0.1), c(0.3, 0.2)], vec![c(0.3, 0.2), c(1.2, 0.0)]]).unwrap();
        let sim = similarity_analysis(&ReducedModel::from_matrix(h.clone(), 1.0)).unwrap();
        assert_eq!(sim.r, 1.0);
        assert!(sim.h_rec.max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn degenerate_coupling_rejected() {
        let h = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.5, 0.0), c(2.0, 0.0)]]).unwrap();
        assert_eq!(similarity_analysis(&ReducedModel::from_matrix(h, 1.5)), Err(Error::DegenerateCoupling));
    }

    #[test]
    fn closed_form_limits() {
        let r = 2.7;
        assert_eq!(closed_form_r1(1.0, 0.0, r), 1.0);
        assert!((closed_form_r1(1e-9, 1.0, r) - r * r).abs() < 1e-9);
    }

    #[test]
    fn similarity_preserves_spectrum() {
        let rm = adiabatic_eliminate(&build_four_mode(&ModelParams::hybrid_device(), 22.0), None).unwrap();
        let sim = similarity_analysis(&rm).unwrap();
        let a = reduced_eigensystem(&rm).unwrap().eigenvalues();
        let b = eig_biorthogonal(&sim.h_rec).unwrap().eigenvalues();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
        assert!((sim.h_rec[(0, 1)].norm() - sim.h_rec[(1, 0)].norm()).abs() < 1e-10);
    }
}
