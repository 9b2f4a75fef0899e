//! Ferrite permeability tensors and the Kittel frequency.
//!
//! Magnetizations and fields are SI (A/m), the gyromagnetic ratio is in
//! GHz/T, so `γ μ₀ M` comes out in GHz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ZERO};
use crate::model::{MU_0, OERSTED_TO_A_PER_M};

/// Electron gyromagnetic ratio, GHz/T.
pub const GAMMA_ELECTRON_GHZ_PER_T: f64 = 28.024_951_4;

/// Distance from a resonance pole treated as on-pole, GHz.
pub const POLE_TOLERANCE_GHZ: f64 = 1e-9;

pub fn oersted_to_a_per_m(oe: f64) -> f64 {
    oe * OERSTED_TO_A_PER_M
}

pub fn a_per_m_to_oersted(a_per_m: f64) -> f64 {
    a_per_m / OERSTED_TO_A_PER_M
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FerriteParams {
    pub ms_a_per_m: f64,
    pub gamma_ghz_per_t: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

impl FerriteParams {
    /// YIG disk used in the device: Ms = 2440 Oe, N_z ≈ 0.285.
    pub fn yig_disk() -> Self {
        let nz = 0.285;
        Self {
            ms_a_per_m: oersted_to_a_per_m(2440.0),
            gamma_ghz_per_t: GAMMA_ELECTRON_GHZ_PER_T,
            nx: 0.5 * (1.0 - nz),
            ny: 0.5 * (1.0 - nz),
            nz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ms_a_per_m > 0.0) {
            return Err(Error::InvalidParameter { name: "ms_a_per_m", reason: "must be > 0".into() });
        }
        let sum = self.nx + self.ny + self.nz;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter { name: "demagnetizing factors", reason: format!("sum to {sum}, not 1") });
        }
        Ok(())
    }

    /// `ω_m = γ μ₀ M_s`, GHz.
    pub fn omega_m_ghz(&self) -> f64 {
        omega_m_ghz(self.ms_a_per_m, self.gamma_ghz_per_t)
    }
}

pub fn omega_m_ghz(ms_a_per_m: f64, gamma_ghz_per_t: f64) -> f64 {
    gamma_ghz_per_t * MU_0 * ms_a_per_m
}

/// Uniform-precession frequency `γ[B + μ₀(N_t − N_z)M_s]`, GHz, with the
/// transverse factor `N_t = (N_x + N_y)/2`.
pub fn kittel_frequency(p: &FerriteParams, b_mt: f64) -> f64 {
    let n_t = 0.5 * (p.nx + p.ny);
    p.gamma_ghz_per_t * (1e-3 * b_mt + MU_0 * (n_t - p.nz) * p.ms_a_per_m)
}

/// Relative permeability tensor, rows and columns ordered (x, y, z).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityTensor(pub ComplexMatrix);

impl PermeabilityTensor {
    /// `[[μ, iκ, 0], [−iκ, μ, 0], [0, 0, μ_z]]`
    pub fn gyrotropic(mu: f64, kappa: f64, mu_z: f64) -> Self {
        let mut m = ComplexMatrix::zeros(3);
        m[(0, 0)] = C64::new(mu, 0.0);
        m[(1, 1)] = C64::new(mu, 0.0);
        m[(0, 1)] = I * kappa;
        m[(1, 0)] = -I * kappa;
        m[(2, 2)] = C64::new(mu_z, 0.0);
        Self(m)
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        Self(ComplexMatrix::from_diagonal(&d.map(|x| C64::new(x, 0.0))))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| i == j || self.0[(i, j)] == ZERO))
    }
}

/// Polder scalars `(μ_r, κ)` from frequencies in GHz.
pub fn polder_scalars(omega_ghz: f64, omega_0_ghz: f64, omega_m_ghz: f64) -> Result<(f64, f64)> {
    if (omega_ghz - omega_0_ghz).abs() < POLE_TOLERANCE_GHZ {
        return Err(Error::OnResonancePole { omega: omega_ghz, omega_0: omega_0_ghz });
    }
    let d = omega_0_ghz * omega_0_ghz - omega_ghz * omega_ghz;
    Ok((1.0 + omega_0_ghz * omega_m_ghz / d, omega_ghz * omega_m_ghz / d))
}

/// Saturated-ferrite tensor for internal field `h0` and magnetization `ms`.
pub fn polder_tensor(omega_ghz: f64, h0_a_per_m: f64, ms_a_per_m: f64, gamma_ghz_per_t: f64) -> Result<PermeabilityTensor> {
    let omega_0 = gamma_ghz_per_t * MU_0 * h0_a_per_m;
    let (mu, kappa) = polder_scalars(omega_ghz, omega_0, omega_m_ghz(ms_a_per_m, gamma_ghz_per_t))?;
    Ok(PermeabilityTensor::gyrotropic(mu, kappa, 1.0))
}

/// Demagnetized-state permeability `1/3 + (2/3)√(1 − (ω_m/ω)²)`.
pub fn demagnetized_mu(omega_ghz: f64, omega_m_ghz: f64) -> Result<f64> {
    check_above_omega_m(omega_ghz, omega_m_ghz)?;
    let q = omega_m_ghz / omega_ghz;
    Ok(1.0 / 3.0 + 2.0 / 3.0 * (1.0 - q * q).sqrt())
}

fn check_above_omega_m(omega_ghz: f64, omega_m_ghz: f64) -> Result<()> {
    if !(omega_ghz > omega_m_ghz.abs()) {
        return Err(Error::Domain(format!("ω = {omega_ghz} GHz must exceed ω_m = {omega_m_ghz} GHz")));
    }
    Ok(())
}

/// Scalars of the partially-magnetized tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandyGreen {
    pub mu_d: f64,
    pub mu_p: f64,
    /// Polder κ the off-diagonal is scaled from.
    pub kappa: f64,
    pub kappa_p: f64,
    pub mu_z: f64,
}

impl SandyGreen {
    pub fn tensor(&self) -> PermeabilityTensor {
        PermeabilityTensor::gyrotropic(self.mu_p, self.kappa_p, self.mu_z)
    }
}

/// Partially-magnetized ferrite at net magnetization `mp`.
///
/// `κ_p = κ · M_p/M_s` uses the Polder κ at internal-field frequency
/// `omega_0_ghz` (zero for an unbiased, partially magnetized body).
pub fn sandy_green(
    omega_ghz: f64,
    mp_a_per_m: f64,
    ms_a_per_m: f64,
    gamma_ghz_per_t: f64,
    omega_0_ghz: f64,
) -> Result<SandyGreen> {
    if !(ms_a_per_m >= 0.0) {
        return Err(Error::InvalidParameter { name: "ms_a_per_m", reason: "must be >= 0".into() });
    }
    if ms_a_per_m == 0.0 {
        // no magnetic material response
        return Ok(SandyGreen { mu_d: 1.0, mu_p: 1.0, kappa: 0.0, kappa_p: 0.0, mu_z: 1.0 });
    }
    let frac = mp_a_per_m / ms_a_per_m;
    if frac.abs() > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter { name: "mp_a_per_m", reason: "|Mp| exceeds Ms".into() });
    }
    let frac = frac.clamp(-1.0, 1.0);
    let omega_m = omega_m_ghz(ms_a_per_m, gamma_ghz_per_t);
    let mu_d = demagnetized_mu(omega_ghz, omega_m)?;
    let (_, kappa) = polder_scalars(omega_ghz, omega_0_ghz, omega_m)?;
    let a = frac.abs();
    Ok(SandyGreen {
        mu_d,
        mu_p: mu_d + (1.0 - mu_d) * a.powf(1.5),
        kappa,
        kappa_p: kappa * frac,
        mu_z: mu_d.powf((1.0 - a).powf(2.5)),
    })
}

pub fn sandy_green_tensor(
    omega_ghz: f64,
    mp_a_per_m: f64,
    ms_a_per_m: f64,
    gamma_ghz_per_t: f64,
) -> Result<PermeabilityTensor> {
    Ok(sandy_green(omega_ghz, mp_a_per_m, ms_a_per_m, gamma_ghz_per_t, 0.0)?.tensor())
}

/// `√((ω² − ω_m²)/ω²)`
pub fn mu_eff(omega_ghz: f64, omega_m_ghz: f64) -> Result<f64> {
    check_above_omega_m(omega_ghz, omega_m_ghz)?;
    Ok(((omega_ghz * omega_ghz - omega_m_ghz * omega_m_ghz) / (omega_ghz * omega_ghz)).sqrt())
}

/// Zero-net-moment tensor with domains along `axis` (0 = x, 1 = y, 2 = z):
/// `μ_eff` on the two transverse axes and 1 along the domain axis.
pub fn demagnetized_axis_tensor(omega_ghz: f64, omega_m_ghz: f64, axis: usize) -> Result<PermeabilityTensor> {
    if axis > 2 {
        return Err(Error::Dimension(format!("axis {axis}")));
    }
    let mu = mu_eff(omega_ghz, omega_m_ghz)?;
    let z = PermeabilityTensor::diagonal([mu, mu, 1.0]).0;
    // change of coordinates R·[μ]_z·Rᵀ by the permutation taking z to `axis`
    let perm: [usize; 3] = match axis {
        0 => [2, 0, 1],
        1 => [0, 2, 1],
        _ => [0, 1, 2],
    };
    let r = ComplexMatrix::from_fn(3, |i, j| if perm[j] == i { C64::new(1.0, 0.0) } else { ZERO });
    Ok(PermeabilityTensor(&(&r.transpose() * &z) * &r))
}

/// `(1/3 + δ)[μ]_x + (1/3 − δ)[μ]_y + (1/3)[μ]_z`, an x-axis domain preference
/// of strength `delta`.
pub fn anisotropic_weighted_tensor(omega_ghz: f64, omega_m_ghz: f64, delta: f64) -> Result<PermeabilityTensor> {
    if !(delta.abs() <= 1.0 / 3.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: "|δ| must be <= 1/3".into() });
    }
    let weights = [1.0 / 3.0 + delta, 1.0 / 3.0 - delta, 1.0 / 3.0];
    let mut acc = ComplexMatrix::zeros(3);
    for (axis, w) in weights.into_iter().enumerate() {
        acc = &acc + &demagnetized_axis_tensor(omega_ghz, omega_m_ghz, axis)?.0.scale(C64::new(w, 0.0));
    }
    Ok(PermeabilityTensor(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMA: f64 = 28.0;

    #[test]
    fn kittel_equal_factors_is_linear() {
        let third = 1.0 / 3.0;
        let p = FerriteParams { ms_a_per_m: 1.9e5, gamma_ghz_per_t: GAMMA, nx: third, ny: third, nz: third };
        assert!((kittel_frequency(&p, 100.0) - 2.8).abs() < 1e-12);
        assert_eq!(kittel_frequency(&p, 0.0), 0.0);
        p.validate().unwrap();
    }

    #[test]
    fn kittel_thin_disk_offset() {
        let p = FerriteParams::yig_disk();
        let offset = kittel_frequency(&p, 0.0);
        let expect = p.gamma_ghz_per_t * MU_0 * (0.3575 - 0.285) * p.ms_a_per_m;
        assert!((offset - expect).abs() < 1e-12);
    }

    #[test]
    fn polder_direct_evaluation() {
        let (mu, k) = polder_scalars(10.0, 5.0, 4.9).unwrap();
        assert!((mu - (1.0 + 5.0 * 4.9 / (25.0 - 100.0))).abs() < 1e-15);
        assert!((k - 10.0 * 4.9 / (25.0 - 100.0)).abs() < 1e-15);
        assert!(matches!(polder_scalars(5.0, 5.0, 4.9), Err(Error::OnResonancePole { .. })));
    }

    #[test]
    fn polder_limits_are_identity() {
        let id = ComplexMatrix::identity(3);
        let t = polder_tensor(10.0, 1e5, 0.0, GAMMA).unwrap();
        assert!(t.0.max_abs_diff(&id) < 1e-15);
        let t = polder_tensor(1e12, 1e5, 1.9e5, GAMMA).unwrap();
        assert!(t.0.max_abs_diff(&id) < 1e-9);
    }

    #[test]
    fn sandy_green_limits() {
        let ms = oersted_to_a_per_m(2440.0);
        let zero = sandy_green(11.0, 0.0, ms, GAMMA, 0.0).unwrap();
        assert_eq!(zero.kappa_p, 0.0);
        assert_eq!(zero.mu_p, zero.mu_d);
        assert_eq!(zero.mu_z, zero.mu_d);
        assert!(zero.tensor().is_diagonal());
        let sat = sandy_green(11.0, ms, ms, GAMMA, 0.0).unwrap();
        assert_eq!(sat.mu_p, 1.0);
        assert_eq!(sat.mu_z, 1.0);
        assert_eq!(sat.kappa_p, sat.kappa);
    }

    #[test]
    fn sandy_green_half_magnetized_scalars() {
        let ms = 2440.0 * 1e3 / (4.0 * std::f64::consts::PI);
        let wm = GAMMA * 4e-7 * std::f64::consts::PI * ms;
        let q: f64 = wm / 11.0;
        let mu_d = 1.0 / 3.0 + 2.0 / 3.0 * (1.0 - q * q).sqrt();
        let kappa = 11.0 * wm / (0.0 - 121.0);
        let s = sandy_green(11.0, 0.5 * ms, ms, GAMMA, 0.0).unwrap();
        assert!((s.mu_d - mu_d).abs() < 1e-12);
        assert!((s.mu_p - (mu_d + (1.0 - mu_d) * 0.5f64.powf(1.5))).abs() < 1e-12);
        assert!((s.kappa - kappa).abs() < 1e-12);
        assert!((s.kappa_p - 0.5 * kappa).abs() < 1e-12);
        assert!((s.mu_z - mu_d.powf(0.5f64.powf(2.5))).abs() < 1e-12);
    }

    #[test]
    fn sandy_green_domain_errors() {
        let ms = oersted_to_a_per_m(2440.0);
        assert!(matches!(sandy_green(5.0, 0.0, ms, GAMMA, 0.0), Err(Error::Domain(_))));
        assert!(sandy_green(11.0, 1.5 * ms, ms, GAMMA, 0.0).is_err());
    }

    #[test]
    fn axis_tensors_are_permutations() {
        let x = demagnetized_axis_tensor(11.0, 6.0, 0).unwrap();
        let y = demagnetized_axis_tensor(11.0, 6.0, 1).unwrap();
        let mu = mu_eff(11.0, 6.0).unwrap();
        assert!(x.0.max_abs_diff(&PermeabilityTensor::diagonal([1.0, mu, mu]).0) < 1e-15);
        assert!(y.0.max_abs_diff(&PermeabilityTensor::diagonal([mu, 1.0, mu]).0) < 1e-15);
    }

    #[test]
    fn weighted_tensor_cases() {
        let iso = anisotropic_weighted_tensor(11.0, 6.0, 0.0).unwrap();
        assert!((iso.0[(0, 0)] - iso.0[(1, 1)]).norm() < 1e-15);
        let flat = anisotropic_weighted_tensor(11.0, 0.0, 0.2).unwrap();
        assert!(flat.0.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        let a = anisotropic_weighted_tensor(11.0, 6.0, 0.1).unwrap();
        assert!((a.trace() - iso.trace()).norm() < 1e-14);
        assert!(a.0[(1, 1)].re < a.0[(0, 0)].re);
        assert!(anisotropic_weighted_tensor(11.0, 6.0, 0.5).is_err());
    }

    #[test]
    fn unit_conversion_round_trip() {
        assert!((a_per_m_to_oersted(oersted_to_a_per_m(2440.0)) - 2440.0).abs() < 1e-9);
        assert!((oersted_to_a_per_m(1.0) - 79.577_471_545_947_67).abs() < 1e-9);
    }
}
