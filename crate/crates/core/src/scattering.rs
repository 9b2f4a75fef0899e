//! Input-output scattering from effective Hamiltonians.
//!
//! With `G(ω) = (ω − H)⁻¹` and a port `p` attached to bare mode `m_p` with
//! full-linewidth coupling `κ_p`, `S_ij = δ_ij − i √(κ_i κ_j) G_{m_i m_j}(ω)`.
//! Linewidths are given in MHz and converted to GHz to match `H`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ONE, ZERO};
use crate::model::{basis, ModelParams};
use crate::nonhermitian::eig_biorthogonal;

/// One external port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Port {
    /// Bare-mode index the port couples to.
    pub mode: usize,
    /// Full-linewidth coupling, MHz.
    pub kappa_mhz: f64,
    /// Phase of the coupling, applied as `e^{i(φ_i + φ_j)}` so that the
    /// reciprocity structure of `G` carries over to `S`.
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortMap {
    ports: Vec<Port>,
}

impl PortMap {
    pub fn new(ports: Vec<Port>) -> Result<Self> {
        for p in &ports {
            if !(p.kappa_mhz >= 0.0 && p.kappa_mhz.is_finite()) {
                return Err(Error::InvalidParameter { name: "kappa_mhz", reason: format!("{} < 0", p.kappa_mhz) });
            }
        }
        Ok(Self { ports })
    }

    /// Ports of the cavity-circulator device: 1 and 2 probe the cavities,
    /// 3 is the waveguide on the y-mode with coupling κ₃.
    pub fn hybrid(p: &ModelParams) -> Self {
        Self {
            ports: vec![
                Port { mode: basis::CAVITY_1, kappa_mhz: p.kappa_1_mhz, phase_rad: 0.0 },
                Port { mode: basis::CAVITY_2, kappa_mhz: p.kappa_2_mhz, phase_rad: 0.0 },
                Port { mode: basis::Y_MODE, kappa_mhz: p.kappa_3_mhz, phase_rad: 0.0 },
            ],
        }
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.ports.iter().find(|p| p.mode >= n) {
            Some(p) => Err(Error::Dimension(format!("port mapped to mode {} of a {n}-mode system", p.mode))),
            None => Ok(()),
        }
    }

    /// `√κ e^{iφ}` in √GHz.
    fn amplitude(&self, k: usize) -> C64 {
        let p = &self.ports[k];
        C64::from_polar((p.kappa_mhz * 1e-3).sqrt(), p.phase_rad)
    }
}

/// Retarded Green's function `(ω − H)⁻¹`.
pub fn greens_function(h: &ComplexMatrix, omega_ghz: f64) -> Result<ComplexMatrix> {
    let op = h.resolvent_operand(C64::new(omega_ghz, 0.0));
    let lu = op.lu();
    if lu.is_singular(1e-14) {
        return Err(Error::SingularAtResonance { omega: omega_ghz });
    }
    Ok(lu.inverse())
}

/// Scattering matrix over the mapped ports.
pub fn s_matrix(h: &ComplexMatrix, ports: &PortMap, omega_ghz: f64) -> Result<ComplexMatrix> {
    ports.check(h.dim())?;
    let g = greens_function(h, omega_ghz)?;
    Ok(s_from_greens(&g, ports))
}

fn s_from_greens(g: &ComplexMatrix, ports: &PortMap) -> ComplexMatrix {
    ComplexMatrix::from_fn(ports.len(), |i, j| {
        let delta = if i == j { ONE } else { ZERO };
        delta - I * ports.amplitude(i) * ports.amplitude(j) * g[(ports.ports[i].mode, ports.ports[j].mode)]
    })
}

/// Single transmission element `S_{out,in}` across a frequency grid; avoids
/// forming the full port matrix.
pub fn s_element_spectrum(
    h: &ComplexMatrix,
    ports: &PortMap,
    output: usize,
    input: usize,
    freqs_ghz: &[f64],
) -> Result<Vec<C64>> {
    ports.check(h.dim())?;
    let n = h.dim();
    let (mo, mi) = (ports.ports[output].mode, ports.ports[input].mode);
    let coupling = I * ports.amplitude(output) * ports.amplitude(input);
    let delta = if output == input { ONE } else { ZERO };
    let mut e = vec![ZERO; n];
    e[mi] = ONE;
    freqs_ghz
        .iter()
        .map(|&w| {
            let lu = h.resolvent_operand(C64::new(w, 0.0)).lu();
            if lu.is_singular(1e-14) {
                return Err(Error::SingularAtResonance { omega: w });
            }
            Ok(delta - coupling * lu.solve(&e)[mo])
        })
        .collect()
}

/// One resonance `A e^{iφ} / (−i(ω − ω₀) + κ/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorentzian {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub omega_ghz: f64,
    /// Full linewidth, MHz.
    pub kappa_mhz: f64,
}

impl Lorentzian {
    pub fn weight(&self) -> C64 {
        C64::from_polar(self.amplitude, self.phase_rad)
    }

    pub fn evaluate(&self, omega_ghz: f64) -> C64 {
        self.weight() / (-I * (omega_ghz - self.omega_ghz) + 0.5e-3 * self.kappa_mhz)
    }
}

/// Sum of Lorentzians plus a constant offset (`δ_ij` for reflection).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianSet {
    pub components: Vec<Lorentzian>,
    #[serde(with = "crate::matrix::serde_c64", default)]
    pub offset: C64,
}

impl LorentzianSet {
    pub fn evaluate(&self, omega_ghz: f64) -> C64 {
        self.offset + self.components.iter().map(|c| c.evaluate(omega_ghz)).sum::<C64>()
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            if !(c.kappa_mhz > 0.0) {
                return Err(Error::InvalidParameter { name: "kappa_mhz", reason: "linewidth must be > 0".into() });
            }
            if c.amplitude < 0.0 {
                return Err(Error::InvalidParameter { name: "amplitude", reason: "must be >= 0".into() });
            }
        }
        Ok(())
    }
}

/// Pole expansion of `S_{out,in}` over the eigenmodes of `h`.
///
/// Each eigenmode contributes the complex weight
/// `−√(κ_out κ_in) ⟨out|n_R⟩⟨n_L|in⟩`, returned as modulus and phase, at
/// `ω₀ = Re ω_n` and `κ = −2 Im ω_n`. Components follow the eigensystem order.
pub fn lorentzian_decomposition(h: &ComplexMatrix, ports: &PortMap, input: usize, output: usize) -> Result<LorentzianSet> {
    ports.check(h.dim())?;
    let es = eig_biorthogonal(h)?;
    let (mo, mi) = (ports.ports[output].mode, ports.ports[input].mode);
    let scale = ports.amplitude(output) * ports.amplitude(input);
    let components = es
        .modes
        .iter()
        .map(|m| {
            // c/(ω − ω_n) = (−i c)/(−i(ω − ω_n)) with c = −i√κκ⟨out|R⟩⟨L|in⟩
            let w = -scale * m.right[mo] * m.left[mi].conj();
            Lorentzian {
                amplitude: w.norm(),
                phase_rad: w.arg(),
                omega_ghz: m.frequency_ghz(),
                kappa_mhz: m.linewidth_mhz(),
            }
        })
        .collect();
    let offset = if input == output { ONE } else { ZERO };
    Ok(LorentzianSet { components, offset })
}

/// Report ceiling for isolation, dB.
pub const ISOLATION_CAP_DB: f64 = 120.0;
const NEGLIGIBLE_TRANSMISSION: f64 = 1e-15;

/// `20 log₁₀ |forward / backward|`, clamped to ±[`ISOLATION_CAP_DB`].
///
/// A negligible backward element with a finite forward one reports the cap;
/// both negligible is an error.
pub fn isolation_db(forward: C64, backward: C64) -> Result<f64> {
    let (f, b) = (forward.norm(), backward.norm());
    if b < NEGLIGIBLE_TRANSMISSION {
        if f < NEGLIGIBLE_TRANSMISSION {
            return Err(Error::DivisionByNegligible { what: "S_ij(-B)", value: b });
        }
        return Ok(ISOLATION_CAP_DB);
    }
    if f < NEGLIGIBLE_TRANSMISSION {
        return Ok(-ISOLATION_CAP_DB);
    }
    Ok((20.0 * (f / b).log10()).clamp(-ISOLATION_CAP_DB, ISOLATION_CAP_DB))
}

/// Self-calibrated isolation `20 log₁₀ |S_ij(B) / S_ij(−B)|` from the
/// Hamiltonians at `+B` and `−B`.
pub fn isolation_ratio(
    h_plus: &ComplexMatrix,
    h_minus: &ComplexMatrix,
    ports: &PortMap,
    i: usize,
    j: usize,
    omega_ghz: f64,
) -> Result<f64> {
    let sp = s_matrix(h_plus, ports, omega_ghz)?;
    let sm = s_matrix(h_minus, ports, omega_ghz)?;
    isolation_db(sp[(i, j)], sm[(i, j)])
}

/// Ideal Y-junction circulator: two counter-rotating modes at `ω₀ ± δ/2`
/// coupled to three ports at 120° spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreePort {
    pub omega_0_ghz: f64,
    /// Splitting of the rotating modes, MHz.
    pub delta_mhz: f64,
    /// External half-linewidth of each rotating mode, MHz.
    pub kappa_c_mhz: f64,
    /// Internal full linewidth of each rotating mode, MHz.
    pub kappa_i_mhz: f64,
    /// +1 circulates 1→2→3→1, −1 reverses it (field reversal).
    pub chirality: f64,
}

impl ThreePort {
    /// Working point `δ = 2κ_c/√3` with positive chirality.
    pub fn at_working_point(omega_0_ghz: f64, kappa_c_mhz: f64, kappa_i_mhz: f64) -> Self {
        Self {
            omega_0_ghz,
            delta_mhz: working_splitting_mhz(kappa_c_mhz),
            kappa_c_mhz,
            kappa_i_mhz,
            chirality: 1.0,
        }
    }

    pub fn reversed(&self) -> Self {
        Self { chirality: -self.chirality, ..self.clone() }
    }

    pub fn s_matrix(&self, omega_ghz: f64) -> Result<ComplexMatrix> {
        three_port_circulator(self, omega_ghz)
    }
}

/// `δ = 2κ_c/√3`.
pub fn working_splitting_mhz(kappa_c_mhz: f64) -> f64 {
    2.0 * kappa_c_mhz / 3f64.sqrt()
}

/// Three-port S-matrix from input-output theory, `S = I − i W† G W`.
///
/// Each rotating mode couples to port `p` with `√(2κ_c/3) e^{±i2πp/3}`, so its
/// external full linewidth is `2κ_c`; `κ_i` adds internal loss.
pub fn three_port_circulator(c: &ThreePort, omega_ghz: f64) -> Result<ComplexMatrix> {
    if !(c.kappa_c_mhz > 0.0) {
        return Err(Error::InvalidParameter { name: "kappa_c_mhz", reason: "must be > 0".into() });
    }
    if !(c.kappa_i_mhz >= 0.0) {
        return Err(Error::InvalidParameter { name: "kappa_i_mhz", reason: "must be >= 0".into() });
    }
    let sign = if c.chirality < 0.0 { -1.0 } else { 1.0 };
    let per_port = (2.0 * c.kappa_c_mhz / 3.0 * 1e-3).sqrt();
    let half_width = 0.5e-3 * (2.0 * c.kappa_c_mhz + c.kappa_i_mhz);
    let mut s = ComplexMatrix::identity(3);
    for rot in [1.0f64, -1.0] {
        let omega_m = c.omega_0_ghz + sign * rot * 0.5e-3 * c.delta_mhz;
        let g = ONE / (C64::new(omega_ghz - omega_m, 0.0) + I * half_width);
        let w = |p: usize| C64::from_polar(per_port, rot * 2.0 * std::f64::consts::PI * p as f64 / 3.0);
        for q in 0..3 {
            for p in 0..3 {
                s[(q, p)] -= I * w(q).conj() * g * w(p);
            }
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionLoss {
    /// `1 − |S_thru,in|²`
    pub loss: f64,
    /// `1 − Σ_k |S_k,in|²`, the dissipated fraction (≈ κ_i/κ_c).
    pub dissipated: f64,
}

/// Insertion loss for a signal entering `input` and leaving `through`.
pub fn insertion_loss(s: &ComplexMatrix, input: usize, through: usize) -> InsertionLoss {
    let thru = s[(through, input)].norm_sqr();
    let total: f64 = (0..s.dim()).map(|k| s[(k, input)].norm_sqr()).sum();
    InsertionLoss { loss: 1.0 - thru, dissipated: 1.0 - total }
}

/// Splitting that minimizes the isolated-port leakage `|S₃₁|` at `ω₀`, found
/// by golden-section search on `(0, 4κ_c]`.
pub fn optimize_working_splitting(omega_0_ghz: f64, kappa_c_mhz: f64, kappa_i_mhz: f64) -> Result<f64> {
    let leak = |delta: f64| -> Result<f64> {
        let c = ThreePort { omega_0_ghz, delta_mhz: delta, kappa_c_mhz, kappa_i_mhz, chirality: 1.0 };
        Ok(three_port_circulator(&c, omega_0_ghz)?[(2, 0)].norm())
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (1e-6 * kappa_c_mhz, 4.0 * kappa_c_mhz);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (leak(x1)?, leak(x2)?);
    for _ in 0..200 {
        if (b - a) < 1e-12 * kappa_c_mhz {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = leak(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = leak(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Width of the contiguous band around `center_ghz` where `isolation_db`
/// stays at or above `threshold_db`, MHz, with linear interpolation at the
/// band edges. Zero when the center itself is below threshold.
pub fn isolation_bandwidth_mhz(freqs_ghz: &[f64], isolation_db: &[f64], center_ghz: f64, threshold_db: f64) -> f64 {
    assert_eq!(freqs_ghz.len(), isolation_db.len());
    if freqs_ghz.is_empty() {
        return 0.0;
    }
    let k = freqs_ghz
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - center_ghz).abs().total_cmp(&(b.1 - center_ghz).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if isolation_db[k] < threshold_db {
        return 0.0;
    }
    let edge = |inside: usize, outside: usize| {
        let (fi, fo) = (isolation_db[inside], isolation_db[outside]);
        let t = (fi - threshold_db) / (fi - fo);
        freqs_ghz[inside] + t * (freqs_ghz[outside] - freqs_ghz[inside])
    };
    let mut lo = k;
    while lo > 0 && isolation_db[lo - 1] >= threshold_db {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < freqs_ghz.len() && isolation_db[hi + 1] >= threshold_db {
        hi += 1;
    }
    let f_lo = if lo > 0 { edge(lo, lo - 1) } else { freqs_ghz[0] };
    let f_hi = if hi + 1 < freqs_ghz.len() { edge(hi, hi + 1) } else { freqs_ghz[hi] };
    (f_hi - f_lo) * 1e3
}

/// Evenly spaced grid including both ends.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_four_mode;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn adjugate_inverse_2x2(m: &ComplexMatrix) -> ComplexMatrix {
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        ComplexMatrix::from_rows(&[vec![m[(1, 1)] / det, -m[(0, 1)] / det], vec![-m[(1, 0)] / det, m[(0, 0)] / det]])
            .unwrap()
    }

    #[test]
    fn diagonal_greens_function() {
        let h = ComplexMatrix::from_diagonal(&[c(10.0, -0.01), c(11.0, -0.2)]);
        let g = greens_function(&h, 10.5).unwrap();
        assert!((g[(0, 0)] - ONE / (c(10.5, 0.0) - h[(0, 0)])).norm() < 1e-14);
        assert!((g[(1, 1)] - ONE / (c(10.5, 0.0) - h[(1, 1)])).norm() < 1e-14);
        assert_eq!(g[(0, 1)], ZERO);
    }

    #[test]
    fn two_by_two_greens_matches_cofactors() {
        let h = ComplexMatrix::from_rows(&[vec![c(11.0, -0.1), c(0.2, 0.3)], vec![c(0.2, -0.3), c(11.5, 0.0)]]).unwrap();
        let g = greens_function(&h, 12.0).unwrap();
        let oracle = adjugate_inverse_2x2(&h.resolvent_operand(c(12.0, 0.0)));
        assert!(g.max_abs_diff(&oracle) < 1e-14);
        let residual = &(&h.resolvent_operand(c(12.0, 0.0)) * &g) - &ComplexMatrix::identity(2);
        assert!(residual.max_abs() < 1e-10);
    }

    #[test]
    fn lossless_resonance_is_singular() {
        let h = ComplexMatrix::from_diagonal(&[c(10.0, 0.0), c(11.0, 0.0)]);
        assert!(matches!(greens_function(&h, 10.0), Err(Error::SingularAtResonance { .. })));
    }

    #[test]
    fn uncoupled_ports_give_identity() {
        let p = ModelParams { kappa_1_mhz: 0.0, kappa_2_mhz: 0.0, kappa_3_mhz: 0.0, kappa_x_mhz: 0.1, ..ModelParams::hybrid_device() };
        let h = build_four_mode(&p, 10.0);
        let ports = PortMap::new(vec![
            Port { mode: 0, kappa_mhz: 0.0, phase_rad: 0.0 },
            Port { mode: 1, kappa_mhz: 0.0, phase_rad: 0.0 },
        ])
        .unwrap();
        assert!(s_matrix(&h, &ports, 10.8).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn critically_coupled_single_mode_reflects_minus_one() {
        let h = ComplexMatrix::from_diagonal(&[c(10.0, -0.5e-3 * 4.0)]);
        let ports = PortMap::new(vec![Port { mode: 0, kappa_mhz: 4.0, phase_rad: 0.0 }]).unwrap();
        let s = s_matrix(&h, &ports, 10.0).unwrap();
        assert!((s[(0, 0)] + ONE).norm() < 1e-13);
    }

    #[test]
    fn decomposition_of_diagonal_system() {
        let h = ComplexMatrix::from_diagonal(&[c(10.0, -0.002), c(10.1, -0.003)]);
        let ports = PortMap::new(vec![
            Port { mode: 0, kappa_mhz: 4.0, phase_rad: 0.0 },
            Port { mode: 1, kappa_mhz: 6.0, phase_rad: 0.0 },
        ])
        .unwrap();
        let set = lorentzian_decomposition(&h, &ports, 0, 0).unwrap();
        assert!((set.components[0].amplitude - 4e-3).abs() < 1e-15);
        assert_eq!(set.components[1].amplitude, 0.0);
        assert!((set.components[0].kappa_mhz - 4.0).abs() < 1e-12);
        let cross = lorentzian_decomposition(&h, &ports, 0, 1).unwrap();
        assert!(cross.components.iter().all(|c| c.amplitude == 0.0));
    }

    #[test]
    fn decomposition_reconstructs_s31() {
        let p = ModelParams::hybrid_device();
        let h = build_four_mode(&p, 12.0);
        let ports = PortMap::hybrid(&p);
        let set = lorentzian_decomposition(&h, &ports, 0, 2).unwrap();
        let freqs = linspace(10.78, 10.83, 2001);
        let direct = s_element_spectrum(&h, &ports, 2, 0, &freqs).unwrap();
        for (w, d) in freqs.iter().zip(direct) {
            assert!((set.evaluate(*w) - d).norm() < 1e-9);
        }
    }

    #[test]
    fn ideal_working_point() {
        let c = ThreePort::at_working_point(10.0, 550.0, 0.0);
        assert!((c.delta_mhz - 635.085).abs() < 1e-3);
        let s = c.s_matrix(10.0).unwrap();
        assert!(s[(2, 0)].norm() < 1e-8);
        assert!(s[(1, 0)].norm() > 1.0 - 1e-8);
        assert!(s[(0, 0)].norm() < 1e-8);
        let r = c.reversed().s_matrix(10.0).unwrap();
        assert!(r.max_abs_diff(&s.transpose()) < 1e-12);
    }

    #[test]
    fn degenerate_rotating_modes_are_reciprocal() {
        let c = ThreePort { omega_0_ghz: 10.0, delta_mhz: 0.0, kappa_c_mhz: 300.0, kappa_i_mhz: 0.0, chirality: 1.0 };
        for w in linspace(9.5, 10.5, 21) {
            let s = c.s_matrix(w).unwrap();
            assert!((s[(1, 0)].norm() - s[(0, 1)].norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn insertion_loss_tracks_internal_loss() {
        let ideal = ThreePort::at_working_point(10.0, 550.0, 0.0).s_matrix(10.0).unwrap();
        assert!(insertion_loss(&ideal, 0, 1).loss < 1e-8);
        let c = ThreePort::at_working_point(10.0, 550.0, 4.4);
        let s = c.s_matrix(10.0).unwrap();
        let il = insertion_loss(&s, 0, 1);
        assert!((il.loss - (1.0 - s[(1, 0)].norm_sqr())).abs() < 1e-15);
        assert!((il.loss / 0.008 - 1.0).abs() < 0.1);
    }

    #[test]
    fn isolation_edge_cases() {
        assert_eq!(isolation_db(c(0.5, 0.0), c(0.5, 0.0)).unwrap(), 0.0);
        assert_eq!(isolation_db(c(1.0, 0.0), ZERO).unwrap(), ISOLATION_CAP_DB);
        assert!(isolation_db(ZERO, ZERO).is_err());
        assert!((isolation_db(c(1.0, 0.0), c(0.1, 0.0)).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_isolation_vanishes() {
        let p = ModelParams::hybrid_device();
        let h = build_four_mode(&p, 0.0);
        let iso = isolation_ratio(&h, &h, &PortMap::hybrid(&p), 2, 0, 10.81).unwrap();
        assert_eq!(iso, 0.0);
    }

    #[test]
    fn golden_section_finds_analytic_splitting() {
        let d = optimize_working_splitting(10.0, 550.0, 0.0).unwrap();
        assert!((d / working_splitting_mhz(550.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bandwidth_interpolates_edges() {
        let f = [0.0, 1.0, 2.0, 3.0, 4.0];
        let iso = [0.0, 30.0, 40.0, 30.0, 0.0];
        // crossings at 1 - 10/30 and 3 + 10/30, in GHz -> MHz
        assert!((isolation_bandwidth_mhz(&f, &iso, 2.0, 20.0) - (2.0 + 20.0 / 30.0) * 1e3).abs() < 1e-9);
        assert_eq!(isolation_bandwidth_mhz(&f, &iso, 0.0, 20.0), 0.0);
    }
}
