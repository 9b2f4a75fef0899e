//! Trace files: one row per (field, frequency) sample, consecutive rows with
//! the same `b_mt` form one trace.
//!
//! ```text
//! # format = complex
//! b_mt,freq_ghz,re,im
//! -40,10.79,1.2e-5,-3.4e-6
//! ```
//!
//! `# format = mag_db` files carry `b_mt,freq_ghz,mag_db` instead. Without a
//! format line the layout is taken from the column names.

use std::path::Path;

use ferrocirc::fitting::{SpectrumTrace, TraceData};
use ferrocirc::C64;

use crate::error::{CliError, CliResult};
use crate::output::{Cell, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Complex,
    MagDb,
}

impl TraceFormat {
    fn columns(self) -> &'static [&'static str] {
        match self {
            TraceFormat::Complex => &["b_mt", "freq_ghz", "re", "im"],
            TraceFormat::MagDb => &["b_mt", "freq_ghz", "mag_db"],
        }
    }

    fn name(self) -> &'static str {
        match self {
            TraceFormat::Complex => "complex",
            TraceFormat::MagDb => "mag_db",
        }
    }
}

fn declared_format(text: &str, file: &Path) -> CliResult<Option<TraceFormat>> {
    for (k, line) in text.lines().enumerate() {
        let Some(comment) = line.trim_start().strip_prefix('#') else { continue };
        let Some((key, value)) = comment.split_once('=') else { continue };
        if key.trim() != "format" {
            continue;
        }
        return match value.trim() {
            "complex" => Ok(Some(TraceFormat::Complex)),
            "mag_db" => Ok(Some(TraceFormat::MagDb)),
            other => Err(CliError::Parse {
                file: file.to_path_buf(),
                line: k + 1,
                message: format!("unknown trace format `{other}` (expected complex or mag_db)"),
            }),
        };
    }
    Ok(None)
}

/// Parses a trace file into traces in file order.
pub fn parse_traces(text: &str, file: &Path) -> CliResult<Vec<SpectrumTrace>> {
    let parse_err = |line: usize, message: String| CliError::Parse { file: file.to_path_buf(), line, message };
    let declared = declared_format(text, file)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header_line = reader.position().line() as usize;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(header_line, |p| p.line() as usize), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let format = match declared {
        Some(f) => f,
        None if header.len() == 4 => TraceFormat::Complex,
        None => TraceFormat::MagDb,
    };
    if header != format.columns() {
        let line = text.lines().position(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty()).map_or(1, |k| k + 1);
        return Err(parse_err(line, format!("expected columns {} for format {}", format.columns().join(","), format.name())));
    }

    struct Group {
        line: usize,
        b_mt: f64,
        freqs: Vec<f64>,
        values: Vec<C64>,
        mags: Vec<f64>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let nums: Vec<f64> = record
            .iter()
            .zip(format.columns())
            .map(|(field, col)| {
                let v: f64 = field.parse().map_err(|_| parse_err(line, format!("`{col}`: `{field}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("`{col}` is not finite")))
                }
            })
            .collect::<CliResult<_>>()?;
        let b = nums[0];
        if groups.last().is_none_or(|g| g.b_mt != b) {
            if groups.iter().any(|g| g.b_mt == b) {
                return Err(parse_err(line, format!("rows for b_mt = {b} are not contiguous")));
            }
            groups.push(Group { line, b_mt: b, freqs: Vec::new(), values: Vec::new(), mags: Vec::new() });
        }
        let g = groups.last_mut().expect("pushed above");
        g.freqs.push(nums[1]);
        match format {
            TraceFormat::Complex => g.values.push(C64::new(nums[2], nums[3])),
            TraceFormat::MagDb => g.mags.push(10f64.powf(nums[2] / 20.0)),
        }
    }
    if groups.is_empty() {
        return Err(parse_err(header_line.max(1), "no data rows".into()));
    }
    groups
        .into_iter()
        .map(|g| {
            let data = match format {
                TraceFormat::Complex => TraceData::Complex(g.values),
                TraceFormat::MagDb => TraceData::Magnitude(g.mags),
            };
            let trace = SpectrumTrace { b_mt: g.b_mt, freqs_ghz: g.freqs, data };
            trace.validate().map_err(|e| parse_err(g.line, format!("trace at b_mt = {}: {e}", g.b_mt)))?;
            Ok(trace)
        })
        .collect()
}

pub fn load_traces(path: &Path) -> CliResult<Vec<SpectrumTrace>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_traces(&text, path)
}

/// Traces as a table plus the format comment that goes with it.
pub fn traces_table(traces: &[SpectrumTrace]) -> (Table, String) {
    let complex = traces.iter().all(SpectrumTrace::is_complex);
    let format = if complex { TraceFormat::Complex } else { TraceFormat::MagDb };
    let mut table = Table::new(format.columns());
    for t in traces {
        match &t.data {
            TraceData::Complex(v) if complex => {
                for (&f, z) in t.freqs_ghz.iter().zip(v) {
                    table.push(vec![t.b_mt.into(), f.into(), z.re.into(), z.im.into()]);
                }
            }
            _ => {
                for (&f, m) in t.freqs_ghz.iter().zip(t.magnitudes()) {
                    table.push(vec![t.b_mt.into(), f.into(), Cell::F(20.0 * m.log10())]);
                }
            }
        }
    }
    (table, format!("# format = {}", format.name()))
}
