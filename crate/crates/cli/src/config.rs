//! Flat `key = value` run configuration.
//!
//! One file holds both run keys (grids, fit options, device constants) and
//! any [`ModelParams`] key; model keys override `params_file`, which in turn
//! overrides the built-in hybrid-device values. Every key carries its unit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ferrocirc::fitting::Background;
use ferrocirc::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::error::{line_of, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessMode {
    /// Eigenmodes of the configured model at each field.
    Model,
    /// The two strongest peaks of each trace.
    Peaks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Flat model-parameter file, relative to the config file.
    pub params_file: Option<String>,

    pub b_start_mt: f64,
    pub b_stop_mt: f64,
    pub b_step_mt: f64,
    pub omega_start_ghz: f64,
    pub omega_stop_ghz: f64,
    pub omega_count: usize,
    pub seed: u64,

    pub circulator_omega_0_ghz: f64,
    pub kappa_c_mhz: f64,
    pub kappa_i_mhz: f64,
    pub delta_start_mhz: f64,
    pub delta_stop_mhz: f64,
    pub delta_step_mhz: f64,
    /// Half-width of the isolation-map frequency window, MHz.
    pub circulator_span_mhz: f64,
    pub circulator_omega_count: usize,
    pub isolation_threshold_db: f64,

    /// Frequency of the single-point tensor report, GHz.
    pub ferrite_omega_ghz: f64,
    /// Frequency grid of the flat tensor table, GHz.
    pub ferrite_omega_start_ghz: f64,
    pub ferrite_omega_stop_ghz: f64,
    pub ferrite_omega_count: usize,
    pub ms_a_per_m: f64,
    pub mp_a_per_m: f64,
    pub h0_a_per_m: f64,
    pub gamma_ghz_per_t: f64,
    pub anisotropy_weight: f64,
    pub nz: f64,

    /// Toy-model moment, energy per mT in units of the thermal energy scale.
    pub toy_moment_per_mt: f64,
    pub toy_anisotropy: f64,
    pub toy_temperature: f64,

    /// Trace file for `fit`, relative to the config file.
    pub data_file: Option<String>,
    pub fit_starts: usize,
    pub fit_weight_floor: f64,
    pub fit_background: Background,
    pub fit_guess: GuessMode,
    pub free_params: Vec<String>,
    pub global_starts: usize,
    pub global_start_spread: f64,
    pub min_abs_field_mt: f64,
    pub min_amplitude_snr: f64,

    /// Relative RMS noise for `synthesize`.
    pub noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let yig = ferrocirc::ferrite::FerriteParams::yig_disk();
        Self {
            params_file: None,
            b_start_mt: -40.0,
            b_stop_mt: 40.0,
            b_step_mt: 0.5,
            omega_start_ghz: 10.790,
            omega_stop_ghz: 10.825,
            omega_count: 701,
            seed: 0,
            circulator_omega_0_ghz: 10.81,
            kappa_c_mhz: 550.0,
            kappa_i_mhz: 0.0,
            delta_start_mhz: 0.0,
            delta_stop_mhz: 1200.0,
            delta_step_mhz: 10.0,
            circulator_span_mhz: 600.0,
            circulator_omega_count: 241,
            isolation_threshold_db: 20.0,
            ferrite_omega_ghz: 10.81,
            ferrite_omega_start_ghz: 9.0,
            ferrite_omega_stop_ghz: 12.0,
            ferrite_omega_count: 61,
            ms_a_per_m: yig.ms_a_per_m,
            mp_a_per_m: 0.0,
            h0_a_per_m: 0.0,
            gamma_ghz_per_t: yig.gamma_ghz_per_t,
            anisotropy_weight: 0.1,
            nz: yig.nz,
            toy_moment_per_mt: 0.1,
            toy_anisotropy: 2.0,
            toy_temperature: 1.0,
            data_file: None,
            fit_starts: 16,
            fit_weight_floor: ferrocirc::fitting::DEFAULT_WEIGHT_FLOOR,
            fit_background: Background::Linear,
            fit_guess: GuessMode::Model,
            free_params: ["g_x0_mhz", "g_y0_mhz", "kappa_3_mhz"].map(String::from).to_vec(),
            global_starts: 16,
            global_start_spread: 0.2,
            min_abs_field_mt: ferrocirc::fitting::GlobalFitOptions::default().min_abs_field_mt,
            min_amplitude_snr: ferrocirc::fitting::GlobalFitOptions::default().min_amplitude_snr,
            noise: 0.01,
        }
    }
}

/// A resolved run: configuration, model and where relative paths start.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub run: RunConfig,
    pub model: ModelParams,
    pub base_dir: PathBuf,
}

type SpannedTable = BTreeMap<Spanned<String>, Spanned<toml::Value>>;

fn parse_table(text: &str, file: &Path) -> CliResult<SpannedTable> {
    toml::from_str(text).map_err(|e| CliError::Config {
        file: file.to_path_buf(),
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

fn model_keys() -> Vec<String> {
    match serde_json::to_value(ModelParams::hybrid_device()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Deserializes `T` from `entries`, checking each key on its own first so a
/// bad value is reported at its own line.
fn typed<T: for<'de> Deserialize<'de>>(
    entries: &[(&Spanned<String>, &Spanned<toml::Value>)],
    text: &str,
    file: &Path,
) -> CliResult<T> {
    let mut all = toml::Table::new();
    for (k, v) in entries {
        let mut one = toml::Table::new();
        one.insert(k.get_ref().clone(), v.get_ref().clone());
        if let Err(e) = T::deserialize(toml::Value::Table(one)) {
            return Err(CliError::Config {
                file: file.to_path_buf(),
                line: line_of(text, v.span().start),
                message: format!("`{}`: {}", k.get_ref(), e.message()),
            });
        }
        all.insert(k.get_ref().clone(), v.get_ref().clone());
    }
    T::deserialize(toml::Value::Table(all)).map_err(|e| CliError::Config {
        file: file.to_path_buf(),
        line: 1,
        message: e.message().to_string(),
    })
}

/// Reads a flat model-parameter file.
pub fn load_params_file(path: &Path) -> CliResult<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let table = parse_table(&text, path)?;
    let entries: Vec<_> = table.iter().collect();
    let p: ModelParams = typed(&entries, &text, path)?;
    p.validate()?;
    Ok(p)
}

/// Parses a run configuration. `file` is only used in messages and to
/// resolve `params_file`.
pub fn parse_config(text: &str, file: &Path) -> CliResult<Resolved> {
    let table = parse_table(text, file)?;
    let model_keys = model_keys();
    let (model_entries, run_entries): (Vec<_>, Vec<_>) =
        table.iter().partition(|(k, _)| model_keys.iter().any(|m| m == k.get_ref()));
    let run: RunConfig = typed(&run_entries, text, file)?;
    let base_dir = file.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut model = match &run.params_file {
        Some(p) => load_params_file(&base_dir.join(p))?,
        None => ModelParams::hybrid_device(),
    };
    if !model_entries.is_empty() {
        let mut merged = serde_json::to_value(&model).expect("model serializes");
        for (k, v) in &model_entries {
            let value = v.get_ref().as_float().or_else(|| v.get_ref().as_integer().map(|i| i as f64));
            let Some(value) = value else {
                return Err(CliError::Config {
                    file: file.to_path_buf(),
                    line: line_of(text, v.span().start),
                    message: format!("`{}` must be a number", k.get_ref()),
                });
            };
            merged[k.get_ref().as_str()] = serde_json::json!(value);
        }
        model = serde_json::from_value(merged).map_err(|e| CliError::Config { file: file.to_path_buf(), line: 1, message: e.to_string() })?;
    }
    model.validate()?;
    validate_run(&run)?;
    Ok(Resolved { run, model, base_dir })
}

pub fn load_config(path: Option<&Path>) -> CliResult<Resolved> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            parse_config(&text, path)
        }
        None => Ok(Resolved { run: RunConfig::default(), model: ModelParams::hybrid_device(), base_dir: PathBuf::from(".") }),
    }
}

fn validate_run(run: &RunConfig) -> CliResult<()> {
    if !(run.fit_weight_floor > 0.0) {
        return Err(CliError::Usage("fit_weight_floor must be > 0".into()));
    }
    if !(run.noise >= 0.0) {
        return Err(CliError::Usage("noise must be >= 0".into()));
    }
    Ok(())
}

/// `start, start + step, ...` up to `stop` inclusive; the grid is computed by
/// index so it does not accumulate rounding.
pub fn stepped_grid(name: &str, start: f64, stop: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(CliError::Usage(format!("{name} grid needs finite bounds and step > 0")));
    }
    if stop < start {
        return Err(CliError::Usage(format!("{name} grid is empty ({start} > {stop})")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

pub fn counted_grid(name: &str, start: f64, stop: f64, count: usize) -> CliResult<Vec<f64>> {
    if count == 0 || !(stop >= start) {
        return Err(CliError::Usage(format!("{name} grid is empty")));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    Ok(ferrocirc::scattering::linspace(start, stop, count))
}

impl Resolved {
    pub fn field_grid(&self) -> CliResult<Vec<f64>> {
        stepped_grid("B", self.run.b_start_mt, self.run.b_stop_mt, self.run.b_step_mt)
    }

    pub fn frequency_grid(&self) -> CliResult<Vec<f64>> {
        counted_grid("omega", self.run.omega_start_ghz, self.run.omega_stop_ghz, self.run.omega_count)
    }

    /// SHA-256 over the canonical JSON of everything that shapes the output.
    pub fn hash(&self, command: &str, extra: &serde_json::Value) -> String {
        let canonical = serde_json::json!({
            "command": command,
            "run": self.run,
            "model": self.model,
            "extra": extra,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Resolved> {
        parse_config(text, Path::new("run.cfg"))
    }

    #[test]
    fn model_keys_override_defaults() {
        let r = parse("kappa_3_mhz = 600\nb_step_mt = 1.0\n").unwrap();
        assert_eq!(r.model.kappa_3_mhz, 600.0);
        assert_eq!(r.run.b_step_mt, 1.0);
        assert_eq!(r.model.g_x0_mhz, 9.0);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        match parse("seed = 1\n\nno_such_key = 3\n") {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("no_such_key"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_its_line() {
        match parse("seed = 1\nomega_count = \"many\"\n") {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse("seed = 1\ng_x0_mhz = \"nine\"\n") {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_its_line() {
        match parse("seed = 1\nb_step_mt = = 2\n") {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grids() {
        assert_eq!(stepped_grid("B", -1.0, 1.0, 0.5).unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(stepped_grid("B", 0.0, 0.0, 1.0).unwrap(), vec![0.0]);
        assert!(stepped_grid("B", 1.0, 0.0, 1.0).is_err());
        assert!(stepped_grid("B", 0.0, 1.0, 0.0).is_err());
        assert_eq!(counted_grid("w", 1.0, 2.0, 3).unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(counted_grid("w", 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse("seed = 1\n").unwrap();
        let b = parse("seed = 2\n").unwrap();
        let extra = serde_json::json!({});
        assert_eq!(a.hash("x", &extra), a.clone().hash("x", &extra));
        assert_ne!(a.hash("x", &extra), b.hash("x", &extra));
        assert_eq!(a.hash("x", &extra).len(), 64);
    }
}
