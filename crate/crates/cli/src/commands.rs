//! Subcommand bodies. Field points run in parallel; results are collected in
//! grid order so the files do not depend on the thread count.

use std::path::PathBuf;

use ferrocirc::anisotropy::{anisotropy_profile, fit_sech, ToyModelParams};
use ferrocirc::ferrite::{
    anisotropic_weighted_tensor, demagnetized_axis_tensor, kittel_frequency, polder_tensor, sandy_green, FerriteParams,
};
use ferrocirc::fitting::{
    fit_global_params, fit_two_lorentzians, guess_from_model, guess_from_peaks, param_value, synthesize_trace,
    transmission_lorentzians, with_param, ExtractedTable, FitOptions, GlobalFitOptions, TRANSMISSION,
};
use ferrocirc::model::{basis, build_four_mode, build_two_mode};
use ferrocirc::nonhermitian::{
    adiabatic_eliminate, amplitude_ratio_of, eig_biorthogonal, hybrid_mode_labels, r_ratio, HYBRID_MODE_NAMES,
};
use ferrocirc::scattering::{
    isolation_bandwidth_mhz, isolation_db, optimize_working_splitting, s_element_spectrum, working_splitting_mhz,
    PortMap, ThreePort, ISOLATION_CAP_DB,
};
use ferrocirc::{ComplexMatrix, C64};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{counted_grid, stepped_grid, GuessMode, Resolved};
use crate::data::{load_traces, traces_table};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Format, Header, Table, Writer};
use crate::{Command, FitArgs};

pub struct Context {
    pub resolved: Resolved,
    pub out: PathBuf,
    pub format: Format,
}

impl Context {
    fn writer(&self, command: &str, params: Value, extra: &Value) -> CliResult<Writer> {
        let header = Header {
            tool: format!("ferrocirc {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_sha256: self.resolved.hash(command, extra),
            seed: self.resolved.run.seed,
            params,
        };
        Writer::new(&self.out, self.format, header)
    }

    fn model_json(&self) -> Value {
        serde_json::to_value(&self.resolved.model).expect("model serializes")
    }
}

pub fn dispatch(ctx: &Context, command: &Command) -> CliResult<()> {
    let name = command.name();
    match command {
        Command::SweepInternal => sweep_internal(ctx, name),
        Command::SweepHybrid => sweep_hybrid(ctx, name),
        Command::Circulator => circulator(ctx, name),
        Command::Fit(args) => fit(ctx, name, args),
        Command::FerriteTensor => ferrite_tensor(ctx, name),
        Command::AnisotropyProfile => anisotropy(ctx, name),
        Command::Synthesize => synthesize(ctx, name),
    }
}

fn matrix_json(m: &ComplexMatrix) -> Value {
    let n = m.dim();
    Value::Array((0..n).map(|i| Value::Array((0..n).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect())).collect())
}

/// Magnitude in dB, floored at the isolation cap.
fn db(z: C64) -> f64 {
    20.0 * z.norm().max(10f64.powf(-ISOLATION_CAP_DB / 20.0)).log10()
}

fn sweep_internal(ctx: &Context, name: &str) -> CliResult<()> {
    let grid = ctx.resolved.field_grid()?;
    let p = &ctx.resolved.model;
    let rows: Vec<Vec<Cell>> = grid
        .par_iter()
        .map(|&b| {
            // Hermitian 2x2: mean ± √(((a − d)/2)² + |H_xy|²)
            let h = build_two_mode(p, b);
            let (a, d) = (h[(0, 0)].re, h[(1, 1)].re);
            let half = (0.5 * (a - d)).hypot(h[(0, 1)].norm());
            let mean = 0.5 * (a + d);
            vec![b.into(), p.beta_mhz(b).into(), (mean - half).into(), (mean + half).into(), (2e3 * half).into()]
        })
        .collect();
    let mut table = Table::new(&["b_mt", "beta_mhz", "omega_lower_ghz", "omega_upper_ghz", "splitting_mhz"]);
    rows.into_iter().for_each(|r| table.push(r));
    ctx.writer(name, ctx.model_json(), &json!({}))?.table("internal_modes", &table)?;
    Ok(())
}

struct HybridPoint {
    b: f64,
    h: ComplexMatrix,
    s31: Vec<C64>,
    modes: Vec<Vec<Cell>>,
    ratios: [Option<f64>; 2],
    reduced: Vec<Cell>,
}

fn hybrid_point(ctx: &Context, b: f64, freqs: &[f64]) -> CliResult<HybridPoint> {
    let p = &ctx.resolved.model;
    let h = build_four_mode(p, b);
    let es = eig_biorthogonal(&h)?;
    let labels = hybrid_mode_labels(&es);
    let lorentz = transmission_lorentzians(p, &es);
    let (out, inp) = TRANSMISSION;
    let s31 = s_element_spectrum(&h, &PortMap::hybrid(p), out, inp, freqs)?;
    let mut ratios = [None; 2];
    let modes = labels
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let ratio = amplitude_ratio_of(&es, n).ok();
            if l < 2 {
                ratios[l] = ratio;
            }
            let m = &es.modes[n];
            vec![
                b.into(),
                HYBRID_MODE_NAMES[l].into(),
                m.frequency_ghz().into(),
                m.linewidth_mhz().into(),
                lorentz[n].amplitude.into(),
                lorentz[n].phase_rad.into(),
                ratio.into(),
                r_ratio(&es, basis::CAVITY_1, n).ok().into(),
                r_ratio(&es, basis::Y_MODE, n).ok().into(),
                Cell::I(es.quality.near_defective as i64),
            ]
        })
        .collect();
    let rm = adiabatic_eliminate(&h, None)?;
    let reduced = vec![b.into(), rm.h12_mhz.into(), rm.h21_mhz.into(), rm.r.into(), Cell::I(rm.degenerate as i64)];
    Ok(HybridPoint { b, h, s31, modes, ratios, reduced })
}

/// Field of the largest `|ln A(B)/A(−B)|` on the positive half of the grid.
fn ratio_extremum(points: &[HybridPoint], label: usize) -> Value {
    points
        .iter()
        .filter(|p| p.b > 0.0)
        .filter_map(|p| p.ratios[label].map(|r| (p.b, r)))
        .max_by(|a, b| a.1.ln().abs().total_cmp(&b.1.ln().abs()))
        .map_or(Value::Null, |(b, r)| json!({ "label": HYBRID_MODE_NAMES[label], "b_mt": b, "amplitude_ratio": r }))
}

fn sweep_hybrid(ctx: &Context, name: &str) -> CliResult<()> {
    let grid = ctx.resolved.field_grid()?;
    let freqs = ctx.resolved.frequency_grid()?;
    let points: Vec<HybridPoint> = grid.par_iter().map(|&b| hybrid_point(ctx, b, &freqs)).collect::<CliResult<_>>()?;
    let w = ctx.writer(name, ctx.model_json(), &json!({}))?;

    let mut map = Table::new(&["b_mt", "freq_ghz", "s31_re", "s31_im", "s31_db"]);
    let mut eigen = Table::new(&[
        "b_mt",
        "label",
        "freq_ghz",
        "kappa_mhz",
        "amplitude",
        "phase_rad",
        "amplitude_ratio",
        "r_1",
        "r_y",
        "near_defective",
    ]);
    let mut reduced = Table::new(&["b_mt", "h12_mhz", "h21_mhz", "r", "degenerate"]);
    for p in &points {
        for (&f, &s) in freqs.iter().zip(&p.s31) {
            map.push(vec![p.b.into(), f.into(), s.re.into(), s.im.into(), db(s).into()]);
        }
        p.modes.iter().for_each(|r| eigen.push(r.clone()));
        reduced.push(p.reduced.clone());
    }
    w.table("s31_map", &map)?;
    w.table("eigen_sweep", &eigen)?;
    w.table("reduced", &reduced)?;
    let hams: Vec<Value> = points.iter().map(|p| json!({ "b_mt": p.b, "h_ghz": matrix_json(&p.h) })).collect();
    w.report("hamiltonians", Value::Array(hams))?;
    w.report("hybrid_summary", json!({ "ratio_extremum": [ratio_extremum(&points, 0), ratio_extremum(&points, 1)] }))?;
    Ok(())
}

fn circulator(ctx: &Context, name: &str) -> CliResult<()> {
    let run = &ctx.resolved.run;
    let deltas = stepped_grid("delta", run.delta_start_mhz, run.delta_stop_mhz, run.delta_step_mhz)?;
    let w0 = run.circulator_omega_0_ghz;
    let half = 1e-3 * run.circulator_span_mhz;
    let freqs = counted_grid("circulator omega", w0 - half, w0 + half, run.circulator_omega_count)?;
    let device = |delta_mhz: f64| ThreePort {
        omega_0_ghz: w0,
        delta_mhz,
        kappa_c_mhz: run.kappa_c_mhz,
        kappa_i_mhz: run.kappa_i_mhz,
        chirality: 1.0,
    };
    // forward transmission S21 against its field-reversed value
    let isolation_curve = |c: &ThreePort| -> CliResult<Vec<(f64, C64, C64, f64)>> {
        freqs
            .iter()
            .map(|&f| {
                let (sp, sm) = (c.s_matrix(f)?, c.reversed().s_matrix(f)?);
                Ok((f, sp[(1, 0)], sp[(2, 0)], isolation_db(sp[(1, 0)], sm[(1, 0)])?))
            })
            .collect()
    };
    let blocks: Vec<Vec<Vec<Cell>>> = deltas
        .par_iter()
        .map(|&d| {
            Ok(isolation_curve(&device(d))?
                .into_iter()
                .map(|(f, s21, s31, iso)| vec![d.into(), f.into(), db(s21).into(), db(s31).into(), iso.into()])
                .collect())
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&["delta_mhz", "freq_ghz", "s21_db", "s31_db", "isolation_db"]);
    blocks.into_iter().flatten().for_each(|r| table.push(r));

    let analytic = working_splitting_mhz(run.kappa_c_mhz);
    let optimized = optimize_working_splitting(w0, run.kappa_c_mhz, run.kappa_i_mhz)?;
    let best = device(optimized);
    let s = best.s_matrix(w0)?;
    let loss = ferrocirc::scattering::insertion_loss(&s, 0, 1);
    let curve = isolation_curve(&best)?;
    let iso: Vec<f64> = curve.iter().map(|c| c.3).collect();
    let bandwidth = isolation_bandwidth_mhz(&freqs, &iso, w0, run.isolation_threshold_db);
    let params = json!({
        "circulator_omega_0_ghz": w0,
        "kappa_c_mhz": run.kappa_c_mhz,
        "kappa_i_mhz": run.kappa_i_mhz,
        "isolation_threshold_db": run.isolation_threshold_db,
    });
    let w = ctx.writer(name, params, &json!({}))?;
    w.table("isolation_map", &table)?;
    w.report(
        "working_point",
        json!({
            "delta_analytic_mhz": analytic,
            "delta_optimized_mhz": optimized,
            "delta_relative_difference": optimized / analytic - 1.0,
            "isolated_port_magnitude": s[(2, 0)].norm(),
            "through_port_magnitude": s[(1, 0)].norm(),
            "kappa_i_over_kappa_c": run.kappa_i_mhz / run.kappa_c_mhz,
            "insertion_loss": loss.loss,
            "dissipated": loss.dissipated,
            "bandwidth_mhz": bandwidth,
            "threshold_db": run.isolation_threshold_db,
        }),
    )?;
    Ok(())
}

fn parse_fixed(items: &[String]) -> CliResult<Vec<(String, f64)>> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--fixed expects KEY=VALUE, got `{item}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--fixed {}: `{}` is not a number", k.trim(), v.trim())))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn fit(ctx: &Context, name: &str, args: &FitArgs) -> CliResult<()> {
    let run = &ctx.resolved.run;
    let path = match (&args.data, &run.data_file) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => ctx.resolved.base_dir.join(p),
        (None, None) => return Err(CliError::Usage("fit needs --data or data_file".into())),
    };
    let fixed = parse_fixed(&args.fixed)?;
    let mut initial = ctx.resolved.model.clone();
    for (k, v) in &fixed {
        initial = with_param(&initial, k, *v)?;
    }
    initial.validate()?;
    let free: Vec<String> = run.free_params.iter().filter(|k| !fixed.iter().any(|(f, _)| f == *k)).cloned().collect();

    let bytes = std::fs::read(&path).map_err(CliError::io(&path))?;
    let traces = load_traces(&path)?;
    let opts = FitOptions {
        starts: run.fit_starts,
        seed: run.seed,
        weight_floor: run.fit_weight_floor,
        background: run.fit_background,
        ..FitOptions::default()
    };
    let fits: Vec<_> = traces
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            let guess = match run.fit_guess {
                GuessMode::Model => guess_from_model(&initial, t.b_mt),
                GuessMode::Peaks => guess_from_peaks(t),
            };
            let o = FitOptions { stream: k as u64, ..opts.clone() };
            (t.b_mt, guess.and_then(|g| fit_two_lorentzians(t, &g, &o)))
        })
        .collect();
    let table = ExtractedTable::assemble(fits)?;
    let global_opts = GlobalFitOptions {
        free: free.clone(),
        starts: run.global_starts,
        seed: run.seed,
        start_spread: run.global_start_spread,
        min_abs_field_mt: run.min_abs_field_mt,
        min_amplitude_snr: run.min_amplitude_snr,
        ..GlobalFitOptions::default()
    };
    let global = fit_global_params(&table, &initial, &global_opts)?;

    let extra = json!({ "data_sha256": hex::encode(Sha256::digest(&bytes)), "fixed": fixed });
    let w = ctx.writer(name, serde_json::to_value(&initial).expect("model serializes"), &extra)?;
    let mut out = Table::new(&[
        "b_mt",
        "label",
        "omega_ghz",
        "kappa_mhz",
        "amplitude",
        "phase_rad",
        "sd_omega_ghz",
        "sd_kappa_mhz",
        "sd_amplitude",
        "amplitude_ratio",
        "rms",
        "error",
    ]);
    let ratios = [table.amplitude_ratio(0), table.amplitude_ratio(1)];
    for (k, pt) in table.points.iter().enumerate() {
        for (l, ratio) in ratios.iter().enumerate() {
            let mode = pt.modes.as_ref().map(|m| &m[l]);
            let sd = pt.std_errors.as_ref().map(|s| &s[l]);
            out.push(vec![
                pt.b_mt.into(),
                HYBRID_MODE_NAMES[l].into(),
                mode.map(|m| m.omega_ghz).into(),
                mode.map(|m| m.kappa_mhz).into(),
                mode.map(|m| m.amplitude).into(),
                mode.map(|m| m.phase_rad).into(),
                sd.map(|s| s.omega_ghz).into(),
                sd.map(|s| s.kappa_mhz).into(),
                sd.map(|s| s.amplitude).into(),
                ratio[k].1.into(),
                pt.modes.as_ref().map(|_| pt.rms).into(),
                pt.error.clone().map_or(Cell::Empty, Cell::S),
            ]);
        }
    }
    w.table("extracted", &out)?;
    let initial_free: Vec<(String, f64)> =
        free.iter().map(|k| Ok((k.clone(), param_value(&initial, k)?))).collect::<CliResult<_>>()?;
    w.report(
        "fit_report",
        json!({
            "data_file": path.to_string_lossy(),
            "field_points": table.points.len(),
            "fitted_points": table.points.iter().filter(|p| p.modes.is_some()).count(),
            "fixed": fixed.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "initial": initial_free.into_iter().map(|(k, v)| (k, json!(v))).collect::<serde_json::Map<_, _>>(),
            "free": global.free.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "chi2": global.chi2,
            "reduced_chi2": global.reduced_chi2,
            "iterations": global.iterations,
            "start": global.start,
            "warnings": global.warnings,
            "params": global.params,
        }),
    )?;
    Ok(())
}

const TENSOR_COLUMNS: [&str; 20] = [
    "freq_ghz", "tensor", "xx_re", "xx_im", "xy_re", "xy_im", "xz_re", "xz_im", "yx_re", "yx_im", "yy_re", "yy_im",
    "yz_re", "yz_im", "zx_re", "zx_im", "zy_re", "zy_im", "zz_re", "zz_im",
];

fn ferrite_tensor(ctx: &Context, name: &str) -> CliResult<()> {
    let run = &ctx.resolved.run;
    let nt = 0.5 * (1.0 - run.nz);
    let fp = FerriteParams { ms_a_per_m: run.ms_a_per_m, gamma_ghz_per_t: run.gamma_ghz_per_t, nx: nt, ny: nt, nz: run.nz };
    fp.validate()?;
    let omega_m = fp.omega_m_ghz();
    let tensors = |w: f64| -> CliResult<Vec<(&'static str, ComplexMatrix)>> {
        Ok(vec![
            ("polder", polder_tensor(w, run.h0_a_per_m, run.ms_a_per_m, run.gamma_ghz_per_t)?.0),
            ("sandy_green", sandy_green(w, run.mp_a_per_m, run.ms_a_per_m, run.gamma_ghz_per_t, 0.0)?.tensor().0),
            ("demagnetized_z", demagnetized_axis_tensor(w, omega_m, 2)?.0),
            ("weighted", anisotropic_weighted_tensor(w, omega_m, run.anisotropy_weight)?.0),
        ])
    };
    let freqs = counted_grid("ferrite omega", run.ferrite_omega_start_ghz, run.ferrite_omega_stop_ghz, run.ferrite_omega_count)?;
    let blocks: Vec<Vec<Vec<Cell>>> = freqs
        .par_iter()
        .map(|&w| {
            Ok(tensors(w)?
                .into_iter()
                .map(|(label, m)| {
                    let mut row = vec![w.into(), label.into()];
                    for i in 0..3 {
                        for j in 0..3 {
                            row.push(m[(i, j)].re.into());
                            row.push(m[(i, j)].im.into());
                        }
                    }
                    row
                })
                .collect())
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&TENSOR_COLUMNS);
    blocks.into_iter().flatten().for_each(|r| table.push(r));

    let fields = ctx.resolved.field_grid()?;
    let mut kittel = Table::new(&["b_mt", "kittel_ghz"]);
    fields.iter().for_each(|&b| kittel.push(vec![b.into(), kittel_frequency(&fp, b).into()]));

    let w0 = run.ferrite_omega_ghz;
    let params = json!({
        "ms_a_per_m": run.ms_a_per_m,
        "mp_a_per_m": run.mp_a_per_m,
        "h0_a_per_m": run.h0_a_per_m,
        "gamma_ghz_per_t": run.gamma_ghz_per_t,
        "nz": run.nz,
        "anisotropy_weight": run.anisotropy_weight,
    });
    let w = ctx.writer(name, params, &json!({}))?;
    w.table("ferrite_tensors", &table)?;
    w.table("kittel", &kittel)?;
    let at_w0: serde_json::Map<String, Value> = tensors(w0)?.into_iter().map(|(k, m)| (k.to_string(), matrix_json(&m))).collect();
    w.report(
        "ferrite_tensor",
        json!({
            "omega_ghz": w0,
            "omega_m_ghz": omega_m,
            "ferrite": fp,
            "sandy_green": sandy_green(w0, run.mp_a_per_m, run.ms_a_per_m, run.gamma_ghz_per_t, 0.0)?,
            "tensors": at_w0,
        }),
    )?;
    Ok(())
}

fn anisotropy(ctx: &Context, name: &str) -> CliResult<()> {
    let run = &ctx.resolved.run;
    let toy = ToyModelParams { moment: run.toy_moment_per_mt, anisotropy: run.toy_anisotropy, temperature: run.toy_temperature };
    let grid = ctx.resolved.field_grid()?;
    let d: Vec<f64> = grid
        .par_iter()
        .map(|&b| Ok(anisotropy_profile(&toy, &[b])?[0]))
        .collect::<CliResult<_>>()?;
    let fit = fit_sech(&grid, &d)?;
    let mut table = Table::new(&["b_mt", "d", "sech_fit"]);
    for (&b, &v) in grid.iter().zip(&d) {
        table.push(vec![b.into(), v.into(), (1.0 / (b / fit.b0).cosh()).into()]);
    }
    let w = ctx.writer(name, serde_json::to_value(&toy).expect("toy params serialize"), &json!({}))?;
    w.table("anisotropy_profile", &table)?;
    w.report("sech_fit", json!({ "b0_mt": fit.b0, "rms": fit.rms, "toy": toy }))?;
    Ok(())
}

fn synthesize(ctx: &Context, name: &str) -> CliResult<()> {
    let (p, run) = (&ctx.resolved.model, &ctx.resolved.run);
    let grid = ctx.resolved.field_grid()?;
    let freqs = ctx.resolved.frequency_grid()?;
    let traces: Vec<_> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &b)| synthesize_trace(p, b, &freqs, run.noise, run.seed, k as u64))
        .collect::<Result<_, _>>()?;
    let (table, comment) = traces_table(&traces);
    let w = ctx.writer(name, ctx.model_json(), &json!({}))?;
    w.csv("traces.csv", &table, &[comment])?;
    Ok(())
}
