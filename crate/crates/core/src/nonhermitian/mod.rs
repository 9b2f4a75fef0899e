//! Biorthogonal eigensystems of non-Hermitian Hamiltonians and the
//! non-reciprocity measures built on them.
//!
//! For `H |n_R⟩ = ω_n |n_R⟩` and `H† |n_L⟩ = ω_n* |n_L⟩` the pairs are
//! normalized so that `⟨n_L|m_R⟩ = δ_nm`, giving `H = Σ ω_n |n_R⟩⟨n_L|`.
//! Right vectors have unit norm and their largest component is made real and
//! positive. Every reported quantity that compares left and right structure
//! ([`r_ratio`], [`amplitude_ratio`]) is invariant under the remaining gauge.

mod reduction;
pub(crate) mod schur;
mod tracking;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{inner, norm2, serde_c64_vec, ComplexMatrix, C64, ONE, ZERO};
use crate::model::{basis, build_four_mode, ModelParams};

pub use reduction::{
    adiabatic_eliminate, r_limit_check, reduced_eigensystem, similarity_analysis, LimitClass, ModeLimit, ReducedModel,
    SimilarityResult,
};
pub use tracking::{track_modes, Tracking};

/// Eigenvalue gap below which a spectrum is treated as near an exceptional
/// point, GHz.
pub const NEAR_DEFECTIVE_GAP: f64 = 1e-9;

/// Maximum distance between an eigenvalue of `H` and the conjugate of its
/// partner from `H†`, GHz (scaled by max(1, ‖H‖)).
pub const PAIRING_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EigenQuality {
    /// Smallest pairwise eigenvalue distance, GHz.
    pub min_gap: f64,
    pub near_defective: bool,
    /// max |⟨n_L|m_R⟩ − δ_nm|
    pub biorthogonality_error: f64,
    /// max-norm of Σ|n_R⟩⟨n_L| − I
    pub completeness_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EigenMode {
    #[serde(with = "crate::matrix::serde_c64")]
    pub eigenvalue: C64,
    #[serde(with = "serde_c64_vec")]
    pub right: Vec<C64>,
    #[serde(with = "serde_c64_vec")]
    pub left: Vec<C64>,
}

impl EigenMode {
    pub fn frequency_ghz(&self) -> f64 {
        self.eigenvalue.re
    }

    /// Full linewidth κ_n = −2 Im ω_n, MHz.
    pub fn linewidth_mhz(&self) -> f64 {
        -2.0e3 * self.eigenvalue.im
    }
}

/// Eigenvalues with paired right and left eigenvectors, sorted by
/// (Re ω, Im ω).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EigenSystem {
    pub modes: Vec<EigenMode>,
    pub quality: EigenQuality,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Rebuilds `Σ ω_n |n_R⟩⟨n_L|`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.modes.len();
        let mut h = ComplexMatrix::zeros(n);
        for m in &self.modes {
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += m.eigenvalue * m.right[i] * m.left[j].conj();
                }
            }
        }
        h
    }
}

/// Diagonalizes `h` into a biorthogonal left/right eigensystem.
///
/// Left vectors come from an independent decomposition of `H†`, paired to the
/// right vectors by conjugate eigenvalue. Inside clusters of (nearly)
/// degenerate eigenvalues the left vectors are re-mixed so that the pairs are
/// biorthogonal. Spectra with a gap below [`NEAR_DEFECTIVE_GAP`] are flagged
/// but still returned.
pub fn eig_biorthogonal(h: &ComplexMatrix) -> Result<EigenSystem> {
    let n = h.dim();
    if !h.is_finite() {
        return Err(Error::NonFinite);
    }
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let (mut values, mut rights) = schur::eigen_right(h)?;
    let (left_values, lefts) = schur::eigen_right(&h.adjoint())?;

    // sort right pairs by (Re, Im)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a].re.total_cmp(&values[b].re).then(values[a].im.total_cmp(&values[b].im))
    });
    values = order.iter().map(|&k| values[k]).collect();
    rights = order.iter().map(|&k| rights[k].clone()).collect();

    let min_gap = min_pairwise_gap(&values);
    let near_defective = min_gap < NEAR_DEFECTIVE_GAP;

    let scale = h.max_abs().max(1.0);
    let pairing = pair_by_conjugate(&values, &left_values);
    let worst = pairing
        .iter()
        .enumerate()
        .map(|(k, &j)| (left_values[j].conj() - values[k]).norm())
        .fold(0.0, f64::max);
    if worst > PAIRING_TOLERANCE * scale && !near_defective {
        return Err(Error::EigenPairing { distance: worst });
    }

    for r in rights.iter_mut() {
        fix_gauge(r);
    }
    let mut lefts: Vec<Vec<C64>> = pairing.iter().map(|&j| lefts[j].clone()).collect();

    // biorthogonalize within clusters of close eigenvalues
    let cluster_tol = 1e-7 * scale;
    let mut clusters = Vec::new();
    let mut visited = vec![false; n];
    for k in 0..n {
        if visited[k] {
            continue;
        }
        let members: Vec<usize> =
            (k..n).filter(|&m| !visited[m] && (values[m] - values[k]).norm() < cluster_tol).collect();
        for &m in &members {
            visited[m] = true;
        }
        clusters.push(members);
    }
    for members in clusters {
        let m = members.len();
        let overlap = ComplexMatrix::from_fn(m, |a, b| inner(&lefts[members[a]], &rights[members[b]]));
        match overlap.inverse() {
            Some(inv) => {
                // L_c <- L_c (O⁻¹)†
                let mix = inv.adjoint();
                let old: Vec<Vec<C64>> = members.iter().map(|&i| lefts[i].clone()).collect();
                for (b, &target) in members.iter().enumerate() {
                    lefts[target] = (0..n)
                        .map(|row| (0..m).map(|a| old[a][row] * mix[(a, b)]).sum())
                        .collect();
                }
            }
            None => {
                for &i in &members {
                    let s = inner(&lefts[i], &rights[i]);
                    if s.norm() > 0.0 {
                        let f = ONE / s.conj();
                        lefts[i].iter_mut().for_each(|c| *c *= f);
                    }
                }
            }
        }
    }

    let modes: Vec<EigenMode> = values
        .into_iter()
        .zip(rights)
        .zip(lefts)
        .map(|((eigenvalue, right), left)| EigenMode { eigenvalue, right, left })
        .collect();
    let quality = EigenQuality {
        min_gap,
        near_defective: near_defective
            || !modes.iter().all(|m| m.left.iter().all(|c| c.re.is_finite() && c.im.is_finite())),
        biorthogonality_error: biorthogonality_error(&modes),
        completeness_error: completeness_error(&modes),
    };
    Ok(EigenSystem { modes, quality })
}

fn min_pairwise_gap(values: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

/// Greedy unique assignment of each right eigenvalue to the nearest conjugate
/// left eigenvalue.
fn pair_by_conjugate(right: &[C64], left: &[C64]) -> Vec<usize> {
    let n = right.len();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (k, r) in right.iter().enumerate() {
        for (j, l) in left.iter().enumerate() {
            candidates.push(((l.conj() - r).norm(), k, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, k, j) in candidates {
        if assigned[k] == usize::MAX && !used[j] {
            assigned[k] = j;
            used[j] = true;
        }
    }
    assigned
}

/// Unit norm, largest-modulus component real and positive.
fn fix_gauge(v: &mut [C64]) {
    let nrm = norm2(v);
    if nrm == 0.0 {
        return;
    }
    let big = v
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(b.0.cmp(&a.0)))
        .map(|(_, c)| c)
        .unwrap_or(ONE);
    let phase = big.conj() / big.norm();
    v.iter_mut().for_each(|c| *c = *c * phase / nrm);
}

fn biorthogonality_error(modes: &[EigenMode]) -> f64 {
    let mut err: f64 = 0.0;
    for (a, ma) in modes.iter().enumerate() {
        for (b, mb) in modes.iter().enumerate() {
            let target = if a == b { ONE } else { ZERO };
            err = err.max((inner(&ma.left, &mb.right) - target).norm());
        }
    }
    err
}

fn completeness_error(modes: &[EigenMode]) -> f64 {
    let n = modes.len();
    let mut sum = ComplexMatrix::zeros(n);
    for m in modes {
        for i in 0..n {
            for j in 0..n {
                sum[(i, j)] += m.right[i] * m.left[j].conj();
            }
        }
    }
    sum.max_abs_diff(&ComplexMatrix::identity(n))
}

/// Modulus below which an eigenvector component is treated as zero.
pub const NEGLIGIBLE_COMPONENT: f64 = 1e-12;

/// Non-reciprocity ratio `R_{i,n} = |⟨n_L|i⟩| / |⟨i|n_R⟩|` of eigenmode `n`
/// on bare mode `i`. Equals one for Hermitian matrices.
pub fn r_ratio(es: &EigenSystem, bare: usize, mode: usize) -> Result<f64> {
    let m = es
        .modes
        .get(mode)
        .ok_or_else(|| Error::Dimension(format!("mode index {mode} out of range")))?;
    let r = m
        .right
        .get(bare)
        .ok_or_else(|| Error::Dimension(format!("bare index {bare} out of range")))?
        .norm();
    if r < NEGLIGIBLE_COMPONENT {
        return Err(Error::DivisionByNegligible { what: "<i|n_R>", value: r });
    }
    Ok(m.left[bare].norm() / r)
}

/// Ratio of Lorentzian amplitudes `A_n(B)/A_n(−B)` of the cavity-1 → port-3
/// transmission, evaluated from the eigenvectors at `+B` alone:
/// `|⟨n_L|1⟩⟨y|n_R⟩ / (⟨1|n_R⟩⟨n_L|y⟩)| = R_{1,n} / R_{y,n}`.
pub fn amplitude_ratio_of(es: &EigenSystem, mode: usize) -> Result<f64> {
    Ok(r_ratio(es, basis::CAVITY_1, mode)? / r_ratio(es, basis::Y_MODE, mode)?)
}

/// [`amplitude_ratio_of`] for the four-mode model at field `b_mt`; `mode`
/// indexes the [`hybrid_mode_labels`] order (0 = a, 1 = b, 2 = c, 3 = d).
pub fn amplitude_ratio(p: &ModelParams, b_mt: f64, mode: usize) -> Result<f64> {
    let es = eig_biorthogonal(&build_four_mode(p, b_mt))?;
    let labels = hybrid_mode_labels(&es);
    let idx = *labels
        .get(mode)
        .ok_or_else(|| Error::Dimension(format!("hybrid mode label {mode} out of range")))?;
    amplitude_ratio_of(&es, idx)
}

pub const HYBRID_MODE_NAMES: [&str; 4] = ["a", "b", "c", "d"];

/// Assigns the hybrid-model labels from eigenvalues alone: the two narrowest
/// modes are the cavity-like pair, `a` the higher and `b` the lower in
/// frequency; `c` and `d` are the remaining circulator-like modes by
/// ascending frequency. Because it uses only eigenvalues the labeling is
/// identical at `±B`.
///
/// Returns eigen indices in label order.
pub fn hybrid_mode_labels(es: &EigenSystem) -> Vec<usize> {
    let n = es.len();
    let mut by_width: Vec<usize> = (0..n).collect();
    by_width.sort_by(|&i, &j| {
        es.modes[i]
            .linewidth_mhz()
            .total_cmp(&es.modes[j].linewidth_mhz())
            .then(i.cmp(&j))
    });
    let (mut cavity, mut rest): (Vec<usize>, Vec<usize>) = (by_width[..n.min(2)].to_vec(), by_width[n.min(2)..].to_vec());
    let by_freq = |v: &mut Vec<usize>| {
        v.sort_by(|&i, &j| es.modes[i].frequency_ghz().total_cmp(&es.modes[j].frequency_ghz()).then(i.cmp(&j)))
    };
    by_freq(&mut cavity);
    cavity.reverse();
    by_freq(&mut rest);
    cavity.into_iter().chain(rest).collect()
}
