//! Lorentzian extraction from transmission spectra and global refits of the
//! four-mode model against the extracted tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ZERO};
use crate::model::{build_four_mode, ModelParams};
use crate::nonhermitian::{eig_biorthogonal, hybrid_mode_labels, EigenSystem};
use crate::optimize::{jacobian, levenberg_marquardt, solve_dense, symmetric_eigenvalues, LmOptions};
use crate::scattering::{s_element_spectrum, Lorentzian, LorentzianSet, PortMap};

pub const MIN_TRACE_POINTS: usize = 32;
/// Fitted frequencies closer than this are reported as a collapse, GHz.
pub const COLLAPSE_GHZ: f64 = 1e-4;
/// Output and input port of the transmission the pipeline works on (S₃₁).
pub const TRANSMISSION: (usize, usize) = (2, 0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceData {
    Complex(#[serde(with = "crate::matrix::serde_c64_vec")] Vec<C64>),
    /// Linear magnitude |S|.
    Magnitude(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub b_mt: f64,
    pub freqs_ghz: Vec<f64>,
    pub data: TraceData,
}

impl SpectrumTrace {
    pub fn len(&self) -> usize {
        self.freqs_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_ghz.is_empty()
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, TraceData::Complex(_))
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        match &self.data {
            TraceData::Complex(v) => v.iter().map(|c| c.norm()).collect(),
            TraceData::Magnitude(v) => v.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = match &self.data {
            TraceData::Complex(v) => v.len(),
            TraceData::Magnitude(v) => v.len(),
        };
        if n != self.freqs_ghz.len() {
            return Err(Error::Dimension(format!("{} frequencies vs {n} values", self.freqs_ghz.len())));
        }
        if n < MIN_TRACE_POINTS {
            return Err(Error::Dimension(format!("trace has {n} points, need >= {MIN_TRACE_POINTS}")));
        }
        if self.freqs_ghz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter { name: "freqs_ghz", reason: "must be strictly increasing".into() });
        }
        let finite = match &self.data {
            TraceData::Complex(v) => v.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
            TraceData::Magnitude(v) => v.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

/// Starting frequencies (GHz) and linewidths (MHz) of the two resonances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianGuess {
    pub omega_ghz: [f64; 2],
    pub kappa_mhz: [f64; 2],
}

/// Two highest local maxima of |S|², with half-power widths as linewidths.
pub fn guess_from_peaks(trace: &SpectrumTrace) -> Result<LorentzianGuess> {
    trace.validate()?;
    let p: Vec<f64> = trace.magnitudes().iter().map(|m| m * m).collect();
    let f = &trace.freqs_ghz;
    let n = p.len();
    let mut peaks: Vec<usize> = (1..n - 1).filter(|&k| p[k] >= p[k - 1] && p[k] > p[k + 1]).collect();
    peaks.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let spacing = (f[n - 1] - f[0]) / (n - 1) as f64;
    let width = |k: usize| -> f64 {
        let half = 0.5 * p[k];
        let mut lo = k;
        while lo > 0 && p[lo] > half {
            lo -= 1;
        }
        let mut hi = k;
        while hi + 1 < n && p[hi] > half {
            hi += 1;
        }
        ((f[hi] - f[lo]) * 1e3).max(2e3 * spacing)
    };
    let Some(&first) = peaks.first() else {
        return Err(Error::FitNonConvergence("no peak in trace".into()));
    };
    let second = peaks.iter().copied().find(|&k| k.abs_diff(first) > 2);
    let (k1, w1) = (first, width(first));
    let (w2, om2) = match second {
        Some(k) => (width(k), f[k]),
        // a single visible peak: place the partner one linewidth away
        None => (w1, f[k1] + 1e-3 * w1),
    };
    Ok(LorentzianGuess { omega_ghz: [f[k1], om2], kappa_mhz: [w1, w2] })
}

/// Guess from the two cavity-like eigenmodes of the model at the trace field.
pub fn guess_from_model(p: &ModelParams, b_mt: f64) -> Result<LorentzianGuess> {
    let es = eig_biorthogonal(&build_four_mode(p, b_mt))?;
    let labels = hybrid_mode_labels(&es);
    let (a, b) = (&es.modes[labels[0]], &es.modes[labels[1]]);
    Ok(LorentzianGuess {
        omega_ghz: [a.frequency_ghz(), b.frequency_ghz()],
        kappa_mhz: [a.linewidth_mhz().max(1e-3), b.linewidth_mhz().max(1e-3)],
    })
}

/// Weight floor as a fraction of the trace maximum. At 1% the noise-only
/// tails dominate the objective and linewidths scatter by more than 5% under
/// 1% noise; 10% keeps the peak-region emphasis without that penalty.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.1;

/// Smooth complex background fitted alongside the two resonances; absorbs
/// the tails of broad modes outside the window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    #[default]
    None,
    Constant,
    /// `c₀ + c₁ (ω − ω_c)` about the window center.
    Linear,
}

impl Background {
    fn terms(self) -> usize {
        match self {
            Background::None => 0,
            Background::Constant => 1,
            Background::Linear => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Number of starts including the unperturbed guess.
    pub starts: usize,
    pub seed: u64,
    /// Independent random stream, e.g. the trace index within a sweep.
    pub stream: u64,
    /// Per-point weight floor as a fraction of the trace maximum.
    pub weight_floor: f64,
    pub background: Background,
    pub lm: LmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            stream: 0,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            background: Background::None,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLorentzianFit {
    /// Components in ascending frequency.
    pub set: LorentzianSet,
    /// Background polynomial coefficients in powers of `ω − background_center_ghz`.
    #[serde(with = "crate::matrix::serde_c64_vec")]
    pub background: Vec<C64>,
    pub background_center_ghz: f64,
    /// Weighted RMS residual.
    pub rms: f64,
    pub iterations: usize,
    /// Index of the start that produced the result.
    pub start: usize,
    pub magnitude_only: bool,
    /// One-sigma uncertainties in the same layout as `set.components`.
    pub std_errors: Vec<Lorentzian>,
    /// Condition number of the scaled normal matrix.
    pub condition: f64,
}

impl TwoLorentzianFit {
    pub fn evaluate(&self, omega_ghz: f64) -> C64 {
        let t = omega_ghz - self.background_center_ghz;
        let bg: C64 = self.background.iter().rev().fold(ZERO, |acc, c| acc * t + c);
        self.set.evaluate(omega_ghz) + bg
    }
}

/// Internal parameter layout: per component the amplitude in units of
/// `a_ref`, phase, frequency offset from the guess in MHz and ln κ(MHz);
/// then background coefficients as (re, im) pairs scaled by `b_ref` and the
/// window half-span.
struct Layout {
    magnitude_only: bool,
    guess: [f64; 2],
    a_ref: f64,
    bg_terms: usize,
    b_ref: f64,
    center: f64,
    half_span: f64,
}

impl Layout {
    fn lorentz_len(&self) -> usize {
        if self.magnitude_only { 7 } else { 8 }
    }

    fn components(&self, x: &[f64]) -> [Lorentzian; 2] {
        let (p1, rest) = if self.magnitude_only { (0.0, &x[1..]) } else { (x[1], &x[2..]) };
        let first = Lorentzian {
            amplitude: x[0] * self.a_ref,
            phase_rad: p1,
            omega_ghz: self.guess[0] + 1e-3 * rest[0],
            kappa_mhz: rest[1].exp(),
        };
        let second = Lorentzian {
            amplitude: rest[2] * self.a_ref,
            phase_rad: rest[3],
            omega_ghz: self.guess[1] + 1e-3 * rest[4],
            kappa_mhz: rest[5].exp(),
        };
        [first, second]
    }

    fn background(&self, x: &[f64]) -> Vec<C64> {
        let b = &x[self.lorentz_len()..];
        (0..self.bg_terms)
            .map(|k| C64::new(b[2 * k], b[2 * k + 1]) * self.b_ref / self.half_span.powi(k as i32))
            .collect()
    }

    fn evaluate(&self, x: &[f64], w: f64) -> C64 {
        let c = self.components(x);
        let t = w - self.center;
        let bg = self.background(x).iter().rev().fold(ZERO, |acc, c| acc * t + c);
        c[0].evaluate(w) + c[1].evaluate(w) + bg
    }

    fn pack(&self, c: &[Lorentzian; 2], bg: &[C64]) -> Vec<f64> {
        let mut x = vec![c[0].amplitude / self.a_ref];
        if !self.magnitude_only {
            x.push(c[0].phase_rad);
        }
        x.extend([(c[0].omega_ghz - self.guess[0]) * 1e3, c[0].kappa_mhz.ln()]);
        x.extend([c[1].amplitude / self.a_ref, c[1].phase_rad, (c[1].omega_ghz - self.guess[1]) * 1e3, c[1].kappa_mhz.ln()]);
        for k in 0..self.bg_terms {
            let v = bg.get(k).copied().unwrap_or(ZERO) * self.half_span.powi(k as i32) / self.b_ref;
            x.extend([v.re, v.im]);
        }
        x
    }
}

/// Best complex pole weights and background coefficients for fixed poles,
/// by weighted linear least squares.
fn linear_weights(
    freqs: &[f64],
    data: &[C64],
    weights: &[f64],
    poles: [(f64, f64); 2],
    bg_terms: usize,
    center: f64,
) -> ([C64; 2], Vec<C64>) {
    let nb = 2 + bg_terms;
    let basis = |k: usize, w: f64| -> C64 {
        if k < 2 {
            C64::new(1.0, 0.0) / (-I * (w - poles[k].0) + 0.5e-3 * poles[k].1)
        } else {
            C64::new((w - center).powi((k - 2) as i32), 0.0)
        }
    };
    let mut a = ComplexMatrix::zeros(nb);
    let mut rhs = vec![ZERO; nb];
    for ((&w, &d), &wt) in freqs.iter().zip(data).zip(weights) {
        let b: Vec<C64> = (0..nb).map(|k| basis(k, w) * wt).collect();
        for p in 0..nb {
            rhs[p] += b[p].conj() * d * wt;
            for q in 0..nb {
                a[(p, q)] += b[p].conj() * b[q];
            }
        }
    }
    let lu = a.lu();
    if lu.is_singular(1e-14) {
        return ([ZERO; 2], vec![ZERO; bg_terms]);
    }
    let x = lu.solve(&rhs);
    ([x[0], x[1]], x[2..].to_vec())
}

fn normalize_component(mut c: Lorentzian) -> Lorentzian {
    if c.amplitude < 0.0 {
        c.amplitude = -c.amplitude;
        c.phase_rad += std::f64::consts::PI;
    }
    c.phase_rad = C64::from_polar(1.0, c.phase_rad).arg();
    c
}

/// Fits `Σ A_n e^{iφ_n} / (−i(ω − ω_n) + κ_n/2)` with two components, plus
/// an optional smooth background.
///
/// Complex data are fitted directly; magnitude-only data fit `|model|²` to
/// `|data|²` with the first phase pinned to zero. The best of
/// `opts.starts` Levenberg–Marquardt runs wins; starts that collapse onto
/// one frequency are discarded.
pub fn fit_two_lorentzians(trace: &SpectrumTrace, guess: &LorentzianGuess, opts: &FitOptions) -> Result<TwoLorentzianFit> {
    trace.validate()?;
    let freqs = &trace.freqs_ghz;
    let (lo, hi) = (freqs[0], freqs[freqs.len() - 1]);
    if guess.omega_ghz.iter().any(|w| !(*w >= lo && *w <= hi)) {
        return Err(Error::InvalidParameter { name: "guess", reason: "frequencies outside the trace span".into() });
    }
    if guess.kappa_mhz.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidParameter { name: "guess", reason: "linewidths must be > 0".into() });
    }
    let mags = trace.magnitudes();
    let peak = mags.iter().fold(0.0f64, |m, x| m.max(*x));
    if peak == 0.0 {
        return Err(Error::FitNonConvergence("trace is identically zero".into()));
    }
    let floor = opts.weight_floor * peak;
    let weights: Vec<f64> = mags.iter().map(|m| 1.0 / m.max(floor)).collect();
    let magnitude_only = !trace.is_complex();
    let kappa_ref = guess.kappa_mhz[0].min(guess.kappa_mhz[1]);
    let layout = Layout {
        magnitude_only,
        guess: guess.omega_ghz,
        a_ref: peak * 0.5e-3 * kappa_ref,
        bg_terms: opts.background.terms(),
        b_ref: peak,
        center: 0.5 * (lo + hi),
        half_span: 0.5 * (hi - lo),
    };

    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        match &trace.data {
            TraceData::Complex(d) => {
                let mut r = Vec::with_capacity(2 * d.len());
                for ((&w, &s), &wt) in freqs.iter().zip(d).zip(&weights) {
                    let e = (layout.evaluate(x, w) - s) * wt;
                    r.push(e.re);
                    r.push(e.im);
                }
                Ok(r)
            }
            TraceData::Magnitude(m) => Ok(freqs
                .iter()
                .zip(m)
                .zip(&weights)
                .map(|((&w, &s), &wt)| (layout.evaluate(x, w).norm_sqr() - s * s) * wt * wt)
                .collect()),
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(opts.stream);
    let mut best: Option<(f64, usize, crate::optimize::LmResult)> = None;
    let mut collapsed = 0usize;
    for start in 0..opts.starts.max(1) {
        let (omega, kappa, phase2) = if start == 0 {
            (guess.omega_ghz, guess.kappa_mhz, 0.0)
        } else {
            let om = std::array::from_fn(|k| guess.omega_ghz[k] + 0.5e-3 * guess.kappa_mhz[k] * rng.random_range(-1.0..1.0));
            let ka = std::array::from_fn(|k| guess.kappa_mhz[k] * rng.random_range(-0.5f64..0.5).exp());
            (om, ka, rng.random_range(0.0..std::f64::consts::TAU))
        };
        let (init, bg): ([Lorentzian; 2], Vec<C64>) = match &trace.data {
            TraceData::Complex(d) => {
                let poles = [(omega[0], kappa[0]), (omega[1], kappa[1])];
                let (w, bg) = linear_weights(freqs, d, &weights, poles, layout.bg_terms, layout.center);
                let init = std::array::from_fn(|k| Lorentzian {
                    amplitude: w[k].norm(),
                    phase_rad: w[k].arg(),
                    omega_ghz: omega[k],
                    kappa_mhz: kappa[k],
                });
                (init, bg)
            }
            TraceData::Magnitude(m) => {
                let init = std::array::from_fn(|k| {
                    let idx = freqs.partition_point(|f| *f < omega[k]).min(freqs.len() - 1);
                    Lorentzian {
                        amplitude: m[idx] * 0.5e-3 * kappa[k],
                        phase_rad: if k == 0 { 0.0 } else { phase2 },
                        omega_ghz: omega[k],
                        kappa_mhz: kappa[k],
                    }
                });
                (init, Vec::new())
            }
        };
        let Ok(res) = levenberg_marquardt(&residuals, &layout.pack(&init, &bg), &opts.lm) else {
            continue;
        };
        let c = layout.components(&res.x);
        if (c[0].omega_ghz - c[1].omega_ghz).abs() < COLLAPSE_GHZ {
            collapsed += 1;
            continue;
        }
        if best.as_ref().is_none_or(|b| res.cost < b.0) {
            best = Some((res.cost, start, res));
        }
    }
    let Some((cost, start, res)) = best else {
        if collapsed > 0 {
            return Err(Error::ModeCollapse(COLLAPSE_GHZ));
        }
        return Err(Error::FitNonConvergence(format!("all {} starts failed", opts.starts)));
    };

    let m = res.residuals.len();
    let n = res.x.len();
    let sigma2 = if m > n { cost / (m - n) as f64 } else { 0.0 };
    let (std_internal, condition) = covariance_diagnostics(&res.jtj, sigma2);
    let comps = layout.components(&res.x);
    // internal indices of (amplitude, phase, frequency, ln κ) per component
    let idx: [[Option<usize>; 4]; 2] = if magnitude_only {
        [[Some(0), None, Some(1), Some(2)], [Some(3), Some(4), Some(5), Some(6)]]
    } else {
        [[Some(0), Some(1), Some(2), Some(3)], [Some(4), Some(5), Some(6), Some(7)]]
    };
    let mut pairs: Vec<(Lorentzian, Lorentzian)> = (0..2)
        .map(|k| {
            let sd = |j: usize| idx[k][j].map_or(0.0, |i| std_internal[i]);
            let e = Lorentzian {
                amplitude: sd(0) * layout.a_ref,
                phase_rad: sd(1),
                omega_ghz: 1e-3 * sd(2),
                // d κ = κ d(ln κ)
                kappa_mhz: comps[k].kappa_mhz * sd(3),
            };
            (normalize_component(comps[k].clone()), e)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.omega_ghz.total_cmp(&b.0.omega_ghz));
    let (components, std_errors): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(TwoLorentzianFit {
        set: LorentzianSet { components, offset: ZERO },
        background: layout.background(&res.x),
        background_center_ghz: layout.center,
        rms: (cost / m as f64).sqrt(),
        iterations: res.iterations,
        start,
        magnitude_only,
        std_errors,
        condition,
    })
}

/// Standard errors from `σ² (JᵀJ)⁻¹` and the condition number of the
/// diagonally scaled `JᵀJ`.
fn covariance_diagnostics(jtj: &[Vec<f64>], sigma2: f64) -> (Vec<f64>, f64) {
    let n = jtj.len();
    let d: Vec<f64> = (0..n).map(|i| jtj[i][i].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| jtj[i][j] / (d[i] * d[j])).collect()).collect();
    let ev = symmetric_eigenvalues(&scaled);
    let condition = match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    let std = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            solve_dense(scaled.clone(), e).map_or(f64::INFINITY, |col| (sigma2 * col[i]).max(0.0).sqrt() / d[i])
        })
        .collect();
    (std, condition)
}

/// Field point of an extracted table. `modes[l]` carries label `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPoint {
    pub b_mt: f64,
    pub modes: Option<[Lorentzian; 2]>,
    /// One-sigma uncertainties of `modes`, same labels.
    #[serde(default)]
    pub std_errors: Option<[Lorentzian; 2]>,
    pub rms: f64,
    /// Why the fit failed, for flagged points.
    pub error: Option<String>,
}

/// Mode-tracked Lorentzian parameters over a field sweep. Label 0 is the
/// higher-frequency resonance at the first successful point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTable {
    pub points: Vec<ExtractedPoint>,
}

/// Minimum share of field points that must fit.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

impl ExtractedTable {
    /// Tracks per-trace fits by frequency continuity.
    pub fn assemble(fits: Vec<(f64, Result<TwoLorentzianFit>)>) -> Result<Self> {
        let total = fits.len();
        let mut points = Vec::with_capacity(total);
        let mut previous: Option<[f64; 2]> = None;
        let mut ok = 0usize;
        for (b_mt, fit) in fits {
            match fit {
                Ok(fit) => {
                    ok += 1;
                    let c = &fit.set.components;
                    // ascending order: c[1] is higher
                    let mut pair = [c[1].clone(), c[0].clone()];
                    let mut sd = match fit.std_errors.as_slice() {
                        [lo, hi] => Some([hi.clone(), lo.clone()]),
                        _ => None,
                    };
                    if let Some(prev) = previous {
                        let keep = (pair[0].omega_ghz - prev[0]).abs() + (pair[1].omega_ghz - prev[1]).abs();
                        let swap = (pair[1].omega_ghz - prev[0]).abs() + (pair[0].omega_ghz - prev[1]).abs();
                        if swap < keep {
                            pair.swap(0, 1);
                            if let Some(sd) = sd.as_mut() {
                                sd.swap(0, 1);
                            }
                        }
                    }
                    previous = Some([pair[0].omega_ghz, pair[1].omega_ghz]);
                    points.push(ExtractedPoint { b_mt, modes: Some(pair), std_errors: sd, rms: fit.rms, error: None });
                }
                Err(e) => points.push(ExtractedPoint { b_mt, modes: None, std_errors: None, rms: f64::NAN, error: Some(e.to_string()) }),
            }
        }
        if total == 0 || (ok as f64) < MIN_SUCCESS_FRACTION * total as f64 {
            return Err(Error::FitNonConvergence(format!("{ok} of {total} field points fitted")));
        }
        Ok(Self { points })
    }

    /// `A_l(B) / A_l(−B)` for every point whose mirror field is present.
    pub fn amplitude_ratio(&self, label: usize) -> Vec<(f64, Option<f64>)> {
        self.points
            .iter()
            .map(|p| {
                let mirror = self.points.iter().find(|q| (q.b_mt + p.b_mt).abs() < 1e-9);
                let ratio = match (&p.modes, mirror.and_then(|q| q.modes.as_ref())) {
                    (Some(a), Some(b)) if b[label].amplitude > 0.0 => Some(a[label].amplitude / b[label].amplitude),
                    _ => None,
                };
                (p.b_mt, ratio)
            })
            .collect()
    }
}

/// Fits every trace (guesses from `guess`) and assembles a tracked table.
/// Trace `k` uses random stream `k`.
pub fn sweep_extract(
    traces: &[SpectrumTrace],
    guess: &dyn Fn(&SpectrumTrace) -> Result<LorentzianGuess>,
    opts: &FitOptions,
) -> Result<ExtractedTable> {
    let fits = traces
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let o = FitOptions { stream: k as u64, ..opts.clone() };
            (t.b_mt, guess(t).and_then(|g| fit_two_lorentzians(t, &g, &o)))
        })
        .collect();
    ExtractedTable::assemble(fits)
}

/// S₃₁ Lorentzian of every eigenmode of `es`, in eigen order, for the model
/// `p` the eigensystem came from.
pub fn transmission_lorentzians(p: &ModelParams, es: &EigenSystem) -> Vec<Lorentzian> {
    let ports = PortMap::hybrid(p);
    let (out, inp) = TRANSMISSION;
    let (po, pi) = (&ports.ports()[out], &ports.ports()[inp]);
    let scale = (po.kappa_mhz * pi.kappa_mhz * 1e-6).sqrt();
    es.modes
        .iter()
        .map(|m| {
            let w = -scale * m.right[po.mode] * m.left[pi.mode].conj();
            Lorentzian { amplitude: w.norm(), phase_rad: w.arg(), omega_ghz: m.frequency_ghz(), kappa_mhz: m.linewidth_mhz() }
        })
        .collect()
}

/// Model prediction of the two cavity-like S₃₁ resonances (labels a, b).
pub fn predicted_modes(p: &ModelParams, b_mt: f64) -> Result<[Lorentzian; 2]> {
    let es = eig_biorthogonal(&build_four_mode(p, b_mt))?;
    let labels = hybrid_mode_labels(&es);
    let all = transmission_lorentzians(p, &es);
    Ok([all[labels[0]].clone(), all[labels[1]].clone()])
}

#[derive(Clone, Debug)]
pub struct GlobalFitOptions {
    /// Names of free [`ModelParams`] fields; everything else stays fixed.
    pub free: Vec<String>,
    pub starts: usize,
    pub seed: u64,
    /// Relative half-width of the uniform multi-start ball.
    pub start_spread: f64,
    /// Uncertainty floors, added in quadrature to the per-point fit errors
    /// carried by the table.
    pub sigma_omega_mhz: f64,
    pub sigma_kappa_mhz: f64,
    /// Relative amplitude floor.
    pub sigma_amplitude: f64,
    /// Points with `|B|` below this are left out; at low field broad modes
    /// near the window spoil the two-Lorentzian picture.
    pub min_abs_field_mt: f64,
    /// Fitted modes with `A/σ_A` below this are left out: a resonance buried
    /// in noise fits a noise feature with a deceptively small frequency error.
    pub min_amplitude_snr: f64,
    pub lm: LmOptions,
}

impl Default for GlobalFitOptions {
    fn default() -> Self {
        Self {
            free: Vec::new(),
            starts: 16,
            seed: 0,
            start_spread: 0.2,
            sigma_omega_mhz: 0.005,
            sigma_kappa_mhz: 0.005,
            sigma_amplitude: 0.002,
            min_abs_field_mt: 12.0,
            min_amplitude_snr: 5.0,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalFit {
    pub params: ModelParams,
    pub free: Vec<(String, f64)>,
    /// χ² with the configured uncertainties.
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub start: usize,
    pub warnings: Vec<String>,
}

/// Reads a [`ModelParams`] field by its config key.
pub fn param_value(p: &ModelParams, key: &str) -> Result<f64> {
    let v = serde_json::to_value(p).map_err(|e| Error::Config(e.to_string()))?;
    v.get(key).and_then(|x| x.as_f64()).ok_or_else(|| Error::Config(format!("unknown parameter `{key}`")))
}

/// Returns a copy of `p` with field `key` set to `value`.
pub fn with_param(p: &ModelParams, key: &str, value: f64) -> Result<ModelParams> {
    let mut v = serde_json::to_value(p).map_err(|e| Error::Config(e.to_string()))?;
    match v.get_mut(key) {
        Some(slot) => *slot = serde_json::json!(value),
        None => return Err(Error::Config(format!("unknown parameter `{key}`"))),
    }
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn table_residuals(p: &ModelParams, table: &ExtractedTable, o: &GlobalFitOptions) -> Result<Vec<f64>> {
    p.validate()?;
    let mut r = Vec::with_capacity(6 * table.points.len());
    for pt in &table.points {
        let Some(fit) = &pt.modes else { continue };
        if pt.b_mt.abs() < o.min_abs_field_mt {
            continue;
        }
        let model = predicted_modes(p, pt.b_mt)?;
        let a = |l: usize| fit[l].amplitude.max(f64::MIN_POSITIVE);
        let reliable = |l: usize| pt.std_errors.as_ref().is_none_or(|sd| sd[l].amplitude * o.min_amplitude_snr <= a(l));
        let nearest = |l: usize| {
            let d = |k: usize| (fit[l].omega_ghz - model[k].omega_ghz).abs();
            if d(1) < d(0) { 1 } else { 0 }
        };
        // pair fitted and model resonances by frequency, using only modes
        // that stand above the noise
        let order = match (reliable(0), reliable(1)) {
            (true, true) => {
                let straight = (fit[0].omega_ghz - model[0].omega_ghz).abs() + (fit[1].omega_ghz - model[1].omega_ghz).abs();
                let crossed = (fit[0].omega_ghz - model[1].omega_ghz).abs() + (fit[1].omega_ghz - model[0].omega_ghz).abs();
                if crossed < straight { [1, 0] } else { [0, 1] }
            }
            (true, false) => [nearest(0), 1 - nearest(0)],
            (false, true) => [1 - nearest(1), nearest(1)],
            (false, false) => continue,
        };
        for (l, (f, &k)) in fit.iter().zip(&order).enumerate() {
            if !reliable(l) {
                continue;
            }
            let m = &model[k];
            let (sw, sk, sa) = match &pt.std_errors {
                Some(sd) => (sd[l].omega_ghz * 1e3, sd[l].kappa_mhz, sd[l].amplitude / a(l)),
                None => (0.0, 0.0, 0.0),
            };
            r.push((f.omega_ghz - m.omega_ghz) * 1e3 / sw.hypot(o.sigma_omega_mhz));
            r.push((f.kappa_mhz - m.kappa_mhz) / sk.hypot(o.sigma_kappa_mhz));
            r.push((m.amplitude / a(l) - 1.0) / sa.hypot(o.sigma_amplitude));
        }
    }
    Ok(r)
}

/// Weighted least-squares refit of the free parameters against an extracted
/// table, starting from `initial`.
pub fn fit_global_params(table: &ExtractedTable, initial: &ModelParams, opts: &GlobalFitOptions) -> Result<GlobalFit> {
    let mut seen = std::collections::BTreeSet::new();
    for k in &opts.free {
        param_value(initial, k)?;
        if !seen.insert(k.as_str()) {
            return Err(Error::Config(format!("parameter `{k}` listed twice")));
        }
    }
    let base: Vec<f64> = opts.free.iter().map(|k| param_value(initial, k)).collect::<Result<_>>()?;
    let scale: Vec<f64> = base.iter().map(|v| v.abs().max(1e-3)).collect();
    let unpack = |x: &[f64]| -> Result<ModelParams> {
        let mut p = initial.clone();
        for ((k, b), (s, xi)) in opts.free.iter().zip(&base).zip(scale.iter().zip(x)) {
            p = with_param(&p, k, b + s * xi)?;
        }
        Ok(p)
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> { table_residuals(&unpack(x)?, table, opts) };
    let n = opts.free.len();
    let m = residuals(&vec![0.0; n])?.len();
    if m == 0 {
        return Err(Error::FitNonConvergence("table has no fitted points".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(usize, crate::optimize::LmResult)> = None;
    let starts = if n == 0 { 1 } else { opts.starts.max(1) };
    for start in 0..starts {
        let x0: Vec<f64> = if start == 0 {
            vec![0.0; n]
        } else {
            base.iter().zip(&scale).map(|(b, s)| b * rng.random_range(-opts.start_spread..opts.start_spread) / s).collect()
        };
        let Ok(res) = levenberg_marquardt(&residuals, &x0, &opts.lm) else { continue };
        if best.as_ref().is_none_or(|b| res.cost < b.1.cost) {
            best = Some((start, res));
        }
    }
    let Some((start, res)) = best else {
        return Err(Error::FitNonConvergence(format!("all {starts} starts failed")));
    };

    let mut warnings = Vec::new();
    if n > 0 {
        let j = jacobian(&residuals, &res.x, opts.lm.diff_step)?;
        for (c, key) in opts.free.iter().enumerate() {
            if j.iter().all(|row| row[c] == 0.0) {
                return Err(Error::UnidentifiableParameter(key.clone()));
            }
        }
        let d: Vec<f64> = (0..n).map(|i| res.jtj[i][i].sqrt()).collect();
        let scaled: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| res.jtj[i][k] / (d[i] * d[k])).collect()).collect();
        let ev = symmetric_eigenvalues(&scaled);
        if ev[0] < 1e-8 * ev[n - 1] {
            warnings.push(format!("nearly flat direction in the free set (scaled eigenvalue ratio {:.2e})", ev[0] / ev[n - 1]));
        }
    }
    if !res.converged {
        warnings.push(format!("stopped after {} iterations without meeting tolerances", res.iterations));
    }
    let params = unpack(&res.x)?;
    let free = opts.free.iter().map(|k| Ok((k.clone(), param_value(&params, k)?))).collect::<Result<_>>()?;
    Ok(GlobalFit {
        params,
        free,
        chi2: res.cost,
        reduced_chi2: if m > n { res.cost / (m - n) as f64 } else { f64::NAN },
        iterations: res.iterations,
        start,
        warnings,
    })
}

/// One noisy S₃₁ trace. Noise is circular complex Gaussian with RMS
/// `noise · max|S|`; stream `index` keeps traces independent of evaluation
/// order.
pub fn synthesize_trace(p: &ModelParams, b_mt: f64, freqs_ghz: &[f64], noise: f64, seed: u64, index: u64) -> Result<SpectrumTrace> {
    if !(noise >= 0.0) {
        return Err(Error::InvalidParameter { name: "noise", reason: "must be >= 0".into() });
    }
    let h = build_four_mode(p, b_mt);
    let (out, inp) = TRANSMISSION;
    let mut s = s_element_spectrum(&h, &PortMap::hybrid(p), out, inp, freqs_ghz)?;
    if noise > 0.0 {
        let peak = s.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let normal = Normal::new(0.0, noise * peak / 2f64.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        for v in s.iter_mut() {
            *v += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(SpectrumTrace { b_mt, freqs_ghz: freqs_ghz.to_vec(), data: TraceData::Complex(s) })
}

pub fn synthesize_sweep(p: &ModelParams, b_grid: &[f64], freqs_ghz: &[f64], noise: f64, seed: u64) -> Result<Vec<SpectrumTrace>> {
    b_grid.iter().enumerate().map(|(k, &b)| synthesize_trace(p, b, freqs_ghz, noise, seed, k as u64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::linspace;

    fn evaluate_pair(c: &[Lorentzian; 2], w: f64) -> C64 {
        c[0].evaluate(w) + c[1].evaluate(w)
    }

    fn two_peak_trace(noise: f64, seed: u64) -> (SpectrumTrace, [Lorentzian; 2]) {
        let truth = [
            Lorentzian { amplitude: 2e-3, phase_rad: 0.4, omega_ghz: 10.804, kappa_mhz: 1.2 },
            Lorentzian { amplitude: 1e-3, phase_rad: -2.0, omega_ghz: 10.810, kappa_mhz: 0.9 },
        ];
        let freqs = linspace(10.795, 10.82, 801);
        let peak = freqs.iter().map(|&w| evaluate_pair(&truth, w).norm()).fold(0.0, f64::max);
        let normal = Normal::new(0.0, noise * peak / 2f64.sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = freqs
            .iter()
            .map(|&w| evaluate_pair(&truth, w) + C64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        (SpectrumTrace { b_mt: 0.0, freqs_ghz: freqs, data: TraceData::Complex(data) }, truth)
    }

    fn rough_guess() -> LorentzianGuess {
        LorentzianGuess { omega_ghz: [10.8035, 10.8108], kappa_mhz: [2.0, 2.0] }
    }

    #[test]
    fn noiseless_complex_round_trip() {
        let (trace, truth) = two_peak_trace(0.0, 1);
        let fit = fit_two_lorentzians(&trace, &rough_guess(), &FitOptions::default()).unwrap();
        for (f, t) in fit.set.components.iter().zip(&truth) {
            assert!((f.omega_ghz / t.omega_ghz - 1.0).abs() < 1e-6);
            assert!((f.kappa_mhz / t.kappa_mhz - 1.0).abs() < 1e-6);
            assert!((f.amplitude / t.amplitude - 1.0).abs() < 1e-6);
            assert!((C64::from_polar(1.0, f.phase_rad - t.phase_rad) - 1.0).norm() < 1e-6);
        }
    }

    #[test]
    fn magnitude_only_round_trip() {
        let (trace, truth) = two_peak_trace(0.0, 1);
        let mags = trace.magnitudes();
        let trace = SpectrumTrace { data: TraceData::Magnitude(mags), ..trace };
        let fit = fit_two_lorentzians(&trace, &rough_guess(), &FitOptions::default()).unwrap();
        assert!(fit.magnitude_only);
        for (f, t) in fit.set.components.iter().zip(&truth) {
            assert!((f.omega_ghz - t.omega_ghz).abs() < 1e-3 * t.kappa_mhz * 1e-3);
            assert!((f.kappa_mhz / t.kappa_mhz - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn noisy_fits_meet_tolerance_at_95th_percentile() {
        let (mut dw, mut dk) = (Vec::new(), Vec::new());
        for seed in 0..100 {
            let (trace, truth) = two_peak_trace(0.01, seed);
            let fit = fit_two_lorentzians(&trace, &rough_guess(), &FitOptions { starts: 2, ..Default::default() }).unwrap();
            for (f, t) in fit.set.components.iter().zip(&truth) {
                dw.push((f.omega_ghz - t.omega_ghz).abs() * 1e3 / t.kappa_mhz);
                dk.push((f.kappa_mhz / t.kappa_mhz - 1.0).abs());
            }
        }
        let p95 = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[(0.95 * v.len() as f64) as usize - 1]
        };
        assert!(p95(&mut dw) < 0.1);
        assert!(p95(&mut dk) < 0.05);
    }

    #[test]
    fn peak_guess_finds_both_resonances() {
        let (trace, truth) = two_peak_trace(0.0, 1);
        let g = guess_from_peaks(&trace).unwrap();
        let mut found = g.omega_ghz;
        found.sort_by(f64::total_cmp);
        assert!((found[0] - truth[0].omega_ghz).abs() < 1e-4);
        assert!((found[1] - truth[1].omega_ghz).abs() < 1e-4);
    }

    #[test]
    fn trace_validation() {
        let short = SpectrumTrace { b_mt: 0.0, freqs_ghz: vec![1.0, 2.0], data: TraceData::Magnitude(vec![1.0, 1.0]) };
        assert!(short.validate().is_err());
        let freqs = linspace(1.0, 2.0, 40);
        let mut rev = freqs.clone();
        rev.swap(3, 4);
        let bad = SpectrumTrace { b_mt: 0.0, freqs_ghz: rev, data: TraceData::Magnitude(vec![1.0; 40]) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn guess_outside_span_rejected() {
        let (trace, _) = two_peak_trace(0.0, 1);
        let g = LorentzianGuess { omega_ghz: [9.0, 10.81], kappa_mhz: [1.0, 1.0] };
        assert!(fit_two_lorentzians(&trace, &g, &FitOptions::default()).is_err());
    }

    #[test]
    fn synthesis_is_deterministic_and_exact_without_noise() {
        let p = ModelParams::hybrid_device();
        let freqs = linspace(10.79, 10.82, 64);
        let a = synthesize_trace(&p, 20.0, &freqs, 0.01, 7, 3).unwrap();
        let b = synthesize_trace(&p, 20.0, &freqs, 0.01, 7, 3).unwrap();
        assert_eq!(a, b);
        let clean = synthesize_trace(&p, 20.0, &freqs, 0.0, 7, 3).unwrap();
        let direct = s_element_spectrum(&build_four_mode(&p, 20.0), &PortMap::hybrid(&p), 2, 0, &freqs).unwrap();
        assert_eq!(clean.data, TraceData::Complex(direct));
    }

    #[test]
    fn synthesized_noise_has_nominal_rms() {
        let p = ModelParams::hybrid_device();
        let freqs = linspace(10.79, 10.82, 1000);
        let clean = synthesize_trace(&p, 30.0, &freqs, 0.0, 0, 0).unwrap();
        let noisy = synthesize_trace(&p, 30.0, &freqs, 0.01, 11, 0).unwrap();
        let (TraceData::Complex(c), TraceData::Complex(n)) = (&clean.data, &noisy.data) else { unreachable!() };
        let peak = c.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let rms = (c.iter().zip(n).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / 1000.0).sqrt();
        assert!((rms / (0.01 * peak) - 1.0).abs() < 0.05);
    }

    #[test]
    fn param_access_by_key() {
        let p = ModelParams::hybrid_device();
        assert_eq!(param_value(&p, "kappa_3_mhz").unwrap(), 730.0);
        let q = with_param(&p, "g_x0_mhz", 8.0).unwrap();
        assert_eq!(q.g_x0_mhz, 8.0);
        assert!(param_value(&p, "nope").is_err());
    }

    #[test]
    fn assemble_tracks_by_continuity_and_flags_failures() {
        let mk = |lo: f64, hi: f64| TwoLorentzianFit {
            set: LorentzianSet {
                components: vec![
                    Lorentzian { amplitude: 1.0, phase_rad: 0.0, omega_ghz: lo, kappa_mhz: 1.0 },
                    Lorentzian { amplitude: 2.0, phase_rad: 0.0, omega_ghz: hi, kappa_mhz: 1.0 },
                ],
                offset: ZERO,
            },
            rms: 0.0,
            iterations: 1,
            start: 0,
            magnitude_only: false,
            std_errors: Vec::new(),
            condition: 1.0,
            background: Vec::new(),
            background_center_ghz: 0.0,
        };
        let mut fits: Vec<(f64, Result<TwoLorentzianFit>)> =
            (0..10).map(|k| (k as f64, Ok(mk(10.0 + 0.001 * k as f64, 10.006 - 0.001 * k as f64)))).collect();
        let table = ExtractedTable::assemble(fits.clone()).unwrap();
        // the upper branch descends through the lower one and keeps label 0
        let last = table.points[9].modes.as_ref().unwrap();
        assert!((last[0].omega_ghz - 9.997).abs() < 1e-12);
        fits[3].1 = Err(Error::NonFinite);
        let flagged = ExtractedTable::assemble(fits.clone()).unwrap();
        assert!(flagged.points[3].modes.is_none());
        fits[4].1 = Err(Error::NonFinite);
        assert!(ExtractedTable::assemble(fits).is_err());
    }
}
