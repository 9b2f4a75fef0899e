//! Field-dependent Hamiltonians of the circulator and the cavity-circulator
//! hybrid.
//!
//! Units are fixed across the crate: frequencies are linear (ω/2π) in GHz,
//! linewidths and couplings in MHz, magnetic fields in mT. Matrices returned
//! here are in GHz.
//!
//! The two-mode circulator Hamiltonian in the `(x, y)` basis is
//!
//! ```text
//! | ωx + β cosθ + mB²    β sinθ + i kB      |
//! | β sinθ − i kB        ωy − β cosθ + mB²  |
//! ```
//!
//! and the hybrid model embeds it next to two cavities, basis order
//! `(cavity 1, cavity 2, y, x)`. Only the y-mode couples to the waveguide
//! (loss `κ₃`), and the x-mode couples to the cavities with opposite signs.
//! Both satisfy `H(−B) = Hᵀ(B)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I};

/// Vacuum permeability, T·m/A.
pub const MU_0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Oersted to A/m.
pub const OERSTED_TO_A_PER_M: f64 = 1.0e3 / (4.0 * std::f64::consts::PI);

/// Parameters of the two-mode and four-mode Hamiltonians.
///
/// Field names carry their units. The config-file keys are the field names,
/// so a parameter file reads e.g. `omega_x_ghz = 10.707`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub omega_x_ghz: f64,
    pub omega_y_ghz: f64,
    pub omega_1_ghz: f64,
    pub omega_2_ghz: f64,
    /// Weak probe couplings; they only scale Lorentzian amplitudes.
    pub kappa_1_mhz: f64,
    pub kappa_2_mhz: f64,
    /// Waveguide (port 3) decay of the y-mode.
    pub kappa_3_mhz: f64,
    /// Optional x-mode loss; zero leaves the x mode lossless.
    pub kappa_x_mhz: f64,
    pub k_ghz_per_t: f64,
    pub m_ghz_per_t2: f64,
    pub beta_0_mhz: f64,
    pub b_0_mt: f64,
    pub theta_deg: f64,
    pub g_x0_mhz: f64,
    pub g_x1: f64,
    pub g_y0_mhz: f64,
    pub g_y1: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::hybrid_device()
    }
}

impl ModelParams {
    /// Fitted parameters of the cavity-loaded device (k, m from the unloaded
    /// circulator fit; κ₁, κ₂ are unmeasured and default to 0.1 MHz).
    pub fn hybrid_device() -> Self {
        Self {
            omega_x_ghz: 10.707,
            omega_y_ghz: 10.813,
            omega_1_ghz: 10.8104,
            omega_2_ghz: 10.8040,
            kappa_1_mhz: 0.1,
            kappa_2_mhz: 0.1,
            kappa_3_mhz: 730.0,
            kappa_x_mhz: 0.0,
            k_ghz_per_t: 9.82,
            m_ghz_per_t2: 50.0,
            beta_0_mhz: 139.0,
            b_0_mt: 18.5,
            theta_deg: 37.7,
            g_x0_mhz: 9.0,
            g_x1: 0.011,
            g_y0_mhz: 5.0,
            g_y1: 0.006,
        }
    }

    /// Unloaded circulator fit (degenerate x/y frequencies at 11.054 GHz).
    pub fn unloaded_circulator() -> Self {
        Self {
            omega_x_ghz: 11.054,
            omega_y_ghz: 11.054,
            theta_deg: 0.0,
            ..Self::hybrid_device()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_x_ghz", self.omega_x_ghz),
            ("omega_y_ghz", self.omega_y_ghz),
            ("omega_1_ghz", self.omega_1_ghz),
            ("omega_2_ghz", self.omega_2_ghz),
            ("k_ghz_per_t", self.k_ghz_per_t),
            ("m_ghz_per_t2", self.m_ghz_per_t2),
            ("theta_deg", self.theta_deg),
            ("g_x0_mhz", self.g_x0_mhz),
            ("g_x1", self.g_x1),
            ("g_y0_mhz", self.g_y0_mhz),
            ("g_y1", self.g_y1),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: "must be finite".into() });
            }
        }
        let non_negative = [
            ("kappa_1_mhz", self.kappa_1_mhz),
            ("kappa_2_mhz", self.kappa_2_mhz),
            ("kappa_3_mhz", self.kappa_3_mhz),
            ("kappa_x_mhz", self.kappa_x_mhz),
            ("beta_0_mhz", self.beta_0_mhz),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("must be >= 0, got {v}") });
            }
        }
        if !(self.b_0_mt > 0.0 && self.b_0_mt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "b_0_mt",
                reason: format!("must be > 0, got {}", self.b_0_mt),
            });
        }
        Ok(())
    }

    /// Parses a flat `key = value` parameter file. Missing keys fall back to
    /// [`ModelParams::hybrid_device`].
    pub fn from_config_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("flat struct of f64 always serializes")
    }

    /// Anisotropy splitting β(B) = β₀ sech(B/B₀), MHz.
    pub fn beta_mhz(&self, b_mt: f64) -> f64 {
        beta_of_field(self.beta_0_mhz, self.b_0_mt, b_mt)
    }

    /// Cavity-to-x-mode coupling, MHz: `g_x0 + g_x1 β(B)` with β in MHz.
    pub fn g_x_mhz(&self, b_mt: f64) -> f64 {
        self.g_x0_mhz + self.g_x1 * self.beta_mhz(b_mt)
    }

    /// Cavity-to-y-mode coupling, MHz: `g_y0 + g_y1 β(B)` with β in MHz.
    pub fn g_y_mhz(&self, b_mt: f64) -> f64 {
        self.g_y0_mhz + self.g_y1 * self.beta_mhz(b_mt)
    }

    /// Relation between the waveguide decay of the y-mode and the loaded
    /// circulator half-linewidth, κ₃ = 4κ_c/3.
    pub fn kappa_c_mhz(&self) -> f64 {
        kappa_c_from_kappa_3(self.kappa_3_mhz)
    }

    /// Mean bare cavity frequency, the default probe-band center.
    pub fn mean_cavity_ghz(&self) -> f64 {
        0.5 * (self.omega_1_ghz + self.omega_2_ghz)
    }
}

pub fn kappa_c_from_kappa_3(kappa_3_mhz: f64) -> f64 {
    0.75 * kappa_3_mhz
}

pub fn kappa_3_from_kappa_c(kappa_c_mhz: f64) -> f64 {
    4.0 * kappa_c_mhz / 3.0
}

/// β₀ sech(B/B₀). Even in B, decays monotonically in |B|.
pub fn beta_of_field(beta_0_mhz: f64, b_0_mt: f64, b_mt: f64) -> f64 {
    // cosh overflows to inf for |B/B₀| > ~710, which correctly gives 0
    beta_0_mhz / (b_mt.abs() / b_0_mt).cosh()
}

/// Eigenvalue-free 2x2 circulator Hamiltonian, GHz. Hermitian for real B.
pub fn build_two_mode(p: &ModelParams, b_mt: f64) -> ComplexMatrix {
    let [hxx, hxy, hyx, hyy] = circulator_block(p, b_mt);
    ComplexMatrix::from_rows(&[vec![hxx, hxy], vec![hyx, hyy]]).expect("2x2")
}

/// Returns `[H_xx, H_xy, H_yx, H_yy]` in GHz.
fn circulator_block(p: &ModelParams, b_mt: f64) -> [C64; 4] {
    let beta = p.beta_mhz(b_mt) * 1e-3;
    let theta = p.theta_deg.to_radians();
    let b_t = b_mt * 1e-3;
    let shift = p.m_ghz_per_t2 * b_t * b_t;
    let chiral = p.k_ghz_per_t * b_t;
    let off = beta * theta.sin();
    [
        C64::new(p.omega_x_ghz + beta * theta.cos() + shift, 0.0),
        C64::new(off, chiral),
        C64::new(off, -chiral),
        C64::new(p.omega_y_ghz - beta * theta.cos() + shift, 0.0),
    ]
}

/// Basis indices of the four-mode model.
pub mod basis {
    pub const CAVITY_1: usize = 0;
    pub const CAVITY_2: usize = 1;
    pub const Y_MODE: usize = 2;
    pub const X_MODE: usize = 3;
}

/// Non-Hermitian 4x4 effective Hamiltonian of two cavities coupled to the
/// circulator modes, basis `(cavity 1, cavity 2, y, x)`, GHz.
pub fn build_four_mode(p: &ModelParams, b_mt: f64) -> ComplexMatrix {
    let [hxx, hxy, hyx, hyy] = circulator_block(p, b_mt);
    let gx = C64::new(p.g_x_mhz(b_mt) * 1e-3, 0.0);
    let gy = C64::new(p.g_y_mhz(b_mt) * 1e-3, 0.0);
    let loss = |kappa_mhz: f64| -I * (0.5e-3 * kappa_mhz);
    let z = C64::new(0.0, 0.0);
    let w1 = C64::new(p.omega_1_ghz, 0.0) + loss(p.kappa_1_mhz);
    let w2 = C64::new(p.omega_2_ghz, 0.0) + loss(p.kappa_2_mhz);
    ComplexMatrix::from_rows(&[
        vec![w1, z, gy, gx],
        vec![z, w2, gy, -gx],
        vec![gy, gy, hyy + loss(p.kappa_3_mhz), hyx],
        vec![gx, -gx, hxy, hxx + loss(p.kappa_x_mhz)],
    ])
    .expect("4x4")
}

/// Magnetization under a linear demagnetized ramp, A/m:
/// `clamp(B / (μ₀ N_z), −M_s, M_s)`.
pub fn magnetization_of_field(b_mt: f64, ms_a_per_m: f64, nz: f64) -> Result<f64> {
    if !(ms_a_per_m > 0.0) {
        return Err(Error::InvalidParameter { name: "ms", reason: "must be > 0".into() });
    }
    if !(nz > 0.0 && nz < 1.0) {
        return Err(Error::InvalidParameter { name: "nz", reason: "must lie in (0, 1)".into() });
    }
    Ok((b_mt * 1e-3 / (MU_0 * nz)).clamp(-ms_a_per_m, ms_a_per_m))
}

/// Field at which the linear ramp reaches saturation, mT.
pub fn saturation_field_mt(ms_a_per_m: f64, nz: f64) -> f64 {
    MU_0 * nz * ms_a_per_m * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eig2(h: &ComplexMatrix) -> (C64, C64) {
        let tr = h.trace();
        let det = h.determinant();
        let disc = (tr * tr - det * 4.0).sqrt();
        ((tr - disc) / 2.0, (tr + disc) / 2.0)
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_of_field(139.0, 18.5, 0.0), 139.0);
        assert!(beta_of_field(139.0, 18.5, 1e6) == 0.0);
        let series_cosh1: f64 = (0..20).map(|k| 1.0 / (1..=2 * k).map(|j| j as f64).product::<f64>()).sum();
        assert!((beta_of_field(139.0, 18.5, 18.5) - 139.0 / series_cosh1).abs() < 1e-12);
        assert_eq!(beta_of_field(139.0, 18.5, -7.3), beta_of_field(139.0, 18.5, 7.3));
    }

    #[test]
    fn zero_field_splitting_is_two_beta() {
        let p = ModelParams::unloaded_circulator();
        let (lo, hi) = eig2(&build_two_mode(&p, 0.0));
        assert!(((hi - lo).re * 1e3 - 278.0).abs() < 1e-9);
    }

    #[test]
    fn no_anisotropy_gives_chiral_pair() {
        let p = ModelParams { beta_0_mhz: 0.0, ..ModelParams::unloaded_circulator() };
        for b in [-30.0, 5.0, 40.0] {
            let (lo, hi) = eig2(&build_two_mode(&p, b));
            let bt: f64 = b * 1e-3;
            let centre = 11.054 + 50.0 * bt * bt;
            assert!((lo.re - (centre - 9.82 * bt.abs())).abs() < 1e-12);
            assert!((hi.re - (centre + 9.82 * bt.abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn two_mode_matches_closed_form_quadratic() {
        let p = ModelParams::unloaded_circulator();
        let b: f64 = 22.0;
        let beta = beta_of_field(139.0, 18.5, b) * 1e-3;
        let bt = b * 1e-3;
        let centre = 11.054 + 50.0 * bt * bt;
        // a = βcosθ (θ = 0), off-diagonal modulus² = β²sin²θ + k²B²
        let half = (beta * beta + (9.82 * bt).powi(2)).sqrt();
        let (lo, hi) = eig2(&build_two_mode(&p, b));
        assert!((lo.re - (centre - half)).abs() < 1e-12);
        assert!((hi.re - (centre + half)).abs() < 1e-12);
    }

    #[test]
    fn hermitian_and_transpose_symmetric() {
        let p = ModelParams::hybrid_device();
        for i in -40..=40 {
            let b = i as f64;
            let h = build_two_mode(&p, b);
            assert!(h.max_abs_diff(&h.adjoint()) < 1e-12);
            assert!(build_two_mode(&p, -b).max_abs_diff(&h.transpose()) < 1e-12);
            let h4 = build_four_mode(&p, b);
            assert!(build_four_mode(&p, -b).max_abs_diff(&h4.transpose()) < 1e-12);
        }
    }

    #[test]
    fn four_mode_zero_field_anisotropy_entry() {
        let h = build_four_mode(&ModelParams::hybrid_device(), 0.0);
        let expected = 0.139 * 37.7f64.to_radians().sin();
        assert!((h[(2, 3)] - C64::new(expected, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn four_mode_decoupled_limit_is_diagonal() {
        let p = ModelParams {
            g_x0_mhz: 0.0,
            g_x1: 0.0,
            g_y0_mhz: 0.0,
            g_y1: 0.0,
            kappa_1_mhz: 0.0,
            kappa_2_mhz: 0.0,
            kappa_3_mhz: 0.0,
            beta_0_mhz: 0.0,
            ..ModelParams::hybrid_device()
        };
        let h = build_four_mode(&p, 0.0);
        let d = ComplexMatrix::from_diagonal(&[10.8104, 10.8040, 10.813, 10.707].map(|x| C64::new(x, 0.0)));
        assert!(h.max_abs_diff(&d) < 1e-15);
    }

    #[test]
    fn four_mode_entries_by_hand_at_28_mt() {
        let p = ModelParams::hybrid_device();
        let b = 28.0f64;
        let beta = 139.0 / (b / 18.5).cosh();
        let (s, c) = 37.7f64.to_radians().sin_cos();
        let gx = (9.0 + 0.011 * beta) * 1e-3;
        let gy = (5.0 + 0.006 * beta) * 1e-3;
        let bt = 0.028;
        let shift = 50.0 * bt * bt;
        let h = build_four_mode(&p, b);
        let want = [
            [(10.8104, -0.05e-3), (0.0, 0.0), (gy, 0.0), (gx, 0.0)],
            [(0.0, 0.0), (10.8040, -0.05e-3), (gy, 0.0), (-gx, 0.0)],
            [(gy, 0.0), (gy, 0.0), (10.813 - beta * 1e-3 * c + shift, -0.365), (beta * 1e-3 * s, -9.82 * bt)],
            [(gx, 0.0), (-gx, 0.0), (beta * 1e-3 * s, 9.82 * bt), (10.707 + beta * 1e-3 * c + shift, 0.0)],
        ];
        for i in 0..4 {
            for j in 0..4 {
                let w = C64::new(want[i][j].0, want[i][j].1);
                assert!((h[(i, j)] - w).norm() < 1e-14, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn coupling_law_is_linear_in_beta() {
        let p = ModelParams::hybrid_device();
        assert!((p.g_x_mhz(0.0) - 10.529).abs() < 1e-12);
        for i in 1..50 {
            let b = i as f64;
            let ratio = (p.g_x_mhz(b) - p.g_x0_mhz) / p.beta_mhz(b);
            assert!((ratio - p.g_x1).abs() < 1e-12);
        }
    }

    #[test]
    fn magnetization_ramp() {
        let ms = 2440.0 * OERSTED_TO_A_PER_M;
        assert_eq!(magnetization_of_field(0.0, ms, 0.285).unwrap(), 0.0);
        let half = magnetization_of_field(35.0, ms, 0.285).unwrap();
        assert!((half / (ms / 2.0) - 1.0).abs() < 0.02);
        assert!((saturation_field_mt(ms, 0.285) - 69.54).abs() < 0.05);
        assert_eq!(magnetization_of_field(500.0, ms, 0.285).unwrap(), ms);
        assert_eq!(magnetization_of_field(-20.0, ms, 0.285).unwrap(), -magnetization_of_field(20.0, ms, 0.285).unwrap());
        assert!(magnetization_of_field(1.0, ms, 1.5).is_err());
    }

    #[test]
    fn config_round_trip_and_validation() {
        let p = ModelParams::hybrid_device();
        let text = p.to_config_string();
        assert!(text.contains("omega_x_ghz = 10.707"));
        assert_eq!(ModelParams::from_config_str(&text).unwrap(), p);
        assert!(ModelParams::from_config_str("b_0_mt = 0.0").is_err());
        assert!(ModelParams::from_config_str("kappa_3_mhz = -1.0").is_err());
        assert!(ModelParams::from_config_str("unknown_key = 1.0").is_err());
    }

    #[test]
    fn kappa_c_conversion() {
        assert!((kappa_c_from_kappa_3(730.0) - 547.5).abs() < 1e-12);
        assert!((kappa_3_from_kappa_c(547.5) - 730.0).abs() < 1e-12);
    }
}
