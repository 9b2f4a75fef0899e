use ferrocirc::fitting::{
    fit_global_params, fit_two_lorentzians, guess_from_model, param_value, predicted_modes, sweep_extract,
    synthesize_sweep, synthesize_trace, Background, ExtractedTable, FitOptions, GlobalFitOptions,
};
use ferrocirc::model::{build_four_mode, ModelParams};
use ferrocirc::nonhermitian::{amplitude_ratio, eig_biorthogonal, hybrid_mode_labels};
use ferrocirc::scattering::linspace;

fn window() -> Vec<f64> {
    linspace(10.790, 10.825, 1401)
}

fn fit_opts() -> FitOptions {
    FitOptions { starts: 4, background: Background::Linear, ..FitOptions::default() }
}

fn extract(p: &ModelParams, fields: &[f64], noise: f64, seed: u64) -> ExtractedTable {
    let traces = synthesize_sweep(p, fields, &window(), noise, seed).unwrap();
    sweep_extract(&traces, &|t| guess_from_model(p, t.b_mt), &fit_opts()).unwrap()
}

fn symmetric_fields(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as i32;
    (-n..=n).map(|k| k as f64 * step).collect()
}

#[test]
fn high_field_fit_matches_eigenvalues() {
    let p = ModelParams::hybrid_device();
    let trace = synthesize_trace(&p, 35.0, &window(), 0.0, 0, 0).unwrap();
    let fit = fit_two_lorentzians(&trace, &guess_from_model(&p, 35.0).unwrap(), &fit_opts()).unwrap();
    let es = eig_biorthogonal(&build_four_mode(&p, 35.0)).unwrap();
    let labels = hybrid_mode_labels(&es);
    // components are ascending: b then a
    for (c, &n) in fit.set.components.iter().zip([labels[1], labels[0]].iter()) {
        let m = &es.modes[n];
        assert!((c.omega_ghz - m.frequency_ghz()).abs() < 0.02 * m.frequency_ghz());
        assert!((c.kappa_mhz / m.linewidth_mhz() - 1.0).abs() < 0.02, "{} vs {}", c.kappa_mhz, m.linewidth_mhz());
    }
}

#[test]
fn fitted_amplitude_asymmetry_matches_eigenvectors() {
    let p = ModelParams::hybrid_device();
    let table = extract(&p, &symmetric_fields(4.0, 40.0), 0.0, 0);
    for label in 0..2 {
        for (b, ratio) in table.amplitude_ratio(label) {
            if b <= 0.0 {
                continue;
            }
            let expected = amplitude_ratio(&p, b, label).unwrap();
            let got = ratio.expect("mirror point fitted");
            assert!((got / expected - 1.0).abs() < 0.02, "label {label}, {b} mT: {got} vs {expected}");
        }
    }
}

#[test]
fn fitted_labels_follow_model_labels() {
    let p = ModelParams::hybrid_device();
    let table = extract(&p, &symmetric_fields(4.0, 40.0), 0.0, 0);
    for pt in &table.points {
        let model = predicted_modes(&p, pt.b_mt).unwrap();
        let fit = pt.modes.as_ref().unwrap();
        for l in 0..2 {
            assert!((fit[l].omega_ghz - model[l].omega_ghz).abs() < 1e-3, "label {l} at {} mT", pt.b_mt);
        }
    }
}

#[test]
fn field_independent_hamiltonian_gives_flat_table() {
    // β stays at β₀ when B₀ is huge, so nothing depends on the field
    let p = ModelParams { k_ghz_per_t: 0.0, m_ghz_per_t2: 0.0, b_0_mt: 1e12, ..ModelParams::hybrid_device() };
    let table = extract(&p, &[-20.0, -10.0, 0.0, 10.0, 20.0], 0.0, 0);
    let first = table.points[0].modes.clone().unwrap();
    for pt in &table.points {
        let m = pt.modes.as_ref().unwrap();
        for l in 0..2 {
            assert!((m[l].omega_ghz - first[l].omega_ghz).abs() < 1e-9);
            assert!((m[l].kappa_mhz / first[l].kappa_mhz - 1.0).abs() < 1e-6);
            assert!((m[l].amplitude / first[l].amplitude - 1.0).abs() < 1e-6);
        }
    }
}

fn coupling_free_set() -> Vec<String> {
    ["g_x0_mhz", "g_y0_mhz", "kappa_3_mhz"].map(String::from).to_vec()
}

#[test]
fn global_fit_recovers_couplings_from_noisy_sweep() {
    let truth = ModelParams::hybrid_device();
    let table = extract(&truth, &symmetric_fields(2.0, 40.0), 0.01, 7);
    let initial = ModelParams { g_x0_mhz: 9.9, g_y0_mhz: 4.5, kappa_3_mhz: 800.0, ..truth.clone() };
    let opts = GlobalFitOptions { free: coupling_free_set(), starts: 4, ..GlobalFitOptions::default() };
    let fit = fit_global_params(&table, &initial, &opts).unwrap();
    for key in coupling_free_set() {
        let (got, want) = (param_value(&fit.params, &key).unwrap(), param_value(&truth, &key).unwrap());
        assert!((got / want - 1.0).abs() < 0.02, "{key}: {got} vs {want}");
    }
}

#[test]
fn empty_free_set_reports_the_direct_mismatch() {
    let p = ModelParams::hybrid_device();
    let table = extract(&p, &symmetric_fields(8.0, 40.0), 0.0, 0);
    let fit = fit_global_params(&table, &p, &GlobalFitOptions::default()).unwrap();
    assert_eq!(fit.iterations, 0);
    assert_eq!(fit.params, p);
    assert!(fit.reduced_chi2 < 1.0, "noiseless table should sit on the model, reduced chi2 = {}", fit.reduced_chi2);
}

#[test]
fn wrong_waveguide_loss_fits_worse() {
    let p = ModelParams::hybrid_device();
    let table = extract(&p, &symmetric_fields(4.0, 40.0), 0.01, 3);
    let free = vec!["g_x0_mhz".to_string(), "g_y0_mhz".to_string()];
    let opts = GlobalFitOptions { free, starts: 2, ..GlobalFitOptions::default() };
    let right = fit_global_params(&table, &p, &opts).unwrap();
    let forced = fit_global_params(&table, &ModelParams { kappa_3_mhz: 600.0, ..p.clone() }, &opts).unwrap();
    assert!(forced.chi2 > right.chi2);
}

#[test]
fn unknown_or_repeated_free_parameters_are_rejected() {
    let p = ModelParams::hybrid_device();
    let table = extract(&p, &[-30.0, 30.0], 0.0, 0);
    let bad = GlobalFitOptions { free: vec!["no_such_key".into()], ..GlobalFitOptions::default() };
    assert!(fit_global_params(&table, &p, &bad).is_err());
    let twice = GlobalFitOptions { free: vec!["g_x0_mhz".into(), "g_x0_mhz".into()], ..GlobalFitOptions::default() };
    assert!(fit_global_params(&table, &p, &twice).is_err());
}

#[test]
fn modes_buried_in_noise_do_not_pull_the_global_fit() {
    let p = ModelParams::hybrid_device();
    let mut table = extract(&p, &symmetric_fields(8.0, 40.0), 0.0, 0);
    // a weak mode that locked onto a noise feature, with labels swapped by
    // the tracker, as happens for mode b at large negative field
    let pt = table.points.iter_mut().find(|pt| pt.b_mt == -32.0).unwrap();
    let modes = pt.modes.as_mut().unwrap();
    let sd = pt.std_errors.as_mut().unwrap();
    modes[1].omega_ghz = modes[0].omega_ghz + 5.3e-3;
    modes[1].amplitude = 6e-7;
    sd[1].amplitude = 2.2e-7;
    sd[1].omega_ghz = 3.6e-5;
    modes.swap(0, 1);
    sd.swap(0, 1);

    let fit = fit_global_params(&table, &p, &GlobalFitOptions::default()).unwrap();
    assert!(fit.reduced_chi2 < 1.0, "reduced chi2 = {}", fit.reduced_chi2);
    let naive = GlobalFitOptions { min_amplitude_snr: 0.0, ..GlobalFitOptions::default() };
    assert!(fit_global_params(&table, &p, &naive).unwrap().reduced_chi2 > 100.0);
}
