//! CSV exchange formats.
//!
//! Every file is plain CSV with a header row. Histogram and event files may
//! start with `# key=value` metadata lines:
//!
//! ```text
//! # T_ns=5.8
//! # setting3=D
//! # setting4=R
//! # kind=sampled
//! tau_ns,counts
//! -199.5,0
//! ```
//!
//! Parse errors carry the 1-based line number of the offending input line.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::interferometer::{
    CoincidenceHistogram, EventStreams, HistogramKind, PolarizationLabel, ProjectorSetting,
};
use crate::tomography::ReconstructionResult;
use crate::waveform::{ComplexEnvelope, TimeGrid};
use crate::{Error, Result};

/// Relative tolerance on the spacing of `tau_ns` columns.
const SPACING_TOL: f64 = 1e-6;

struct Table {
    meta: BTreeMap<String, (usize, String)>,
    rows: Vec<(usize, Vec<String>)>,
}

/// Splits leading `# key=value` lines from a CSV body with the expected header.
fn read_table<R: Read>(mut input: R, header: &[&str]) -> Result<Table> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::parse(0, format!("input is not UTF-8 text: {e}")))?;
    let mut meta = BTreeMap::new();
    let mut body_start = 0;
    let mut skipped = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            body_start += line.len();
            skipped += 1;
            continue;
        }
        let Some(rest) = trimmed.strip_prefix('#') else {
            break;
        };
        let lineno = skipped + 1;
        if let Some((k, v)) = rest.split_once('=') {
            let key = k.trim().to_string();
            if meta.insert(key.clone(), (lineno, v.trim().to_string())).is_some() {
                return Err(Error::parse(lineno, format!("duplicate metadata key {key:?}")));
            }
        }
        body_start += line.len();
        skipped += 1;
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text[body_start..].as_bytes());
    let line_of = |pos: Option<&csv::Position>| skipped + pos.map_or(1, |p| p.line() as usize);
    let found = reader
        .headers()
        .map_err(|e| Error::parse(line_of(e.position()), e.to_string()))?
        .clone();
    let names: Vec<&str> = found.iter().collect();
    if names != header {
        return Err(Error::parse(
            skipped + 1,
            format!("expected header {:?}, found {:?}", header.join(","), names.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(line_of(e.position()), e.to_string()))?;
        let line = line_of(rec.position());
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { meta, rows })
}

fn number(line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what} {field:?} is not finite")));
    }
    Ok(v)
}

/// Grid whose bin centres are the given `tau_ns` column.
fn grid_from_centers(taus: &[(usize, f64)]) -> Result<TimeGrid> {
    let (&(first_line, first), rest) = taus
        .split_first()
        .ok_or_else(|| Error::parse(0, "no data rows"))?;
    if rest.is_empty() {
        return Err(Error::parse(first_line, "need at least two rows to infer the bin width"));
    }
    let width = rest[0].1 - first;
    if !(width > 0.0) {
        return Err(Error::parse(rest[0].0, "tau_ns must increase"));
    }
    for (i, &(line, tau)) in taus.iter().enumerate() {
        let want = first + i as f64 * width;
        if (tau - want).abs() > SPACING_TOL * width.max(want.abs()) {
            return Err(Error::parse(line, format!("tau_ns = {tau} breaks the uniform spacing {width}")));
        }
    }
    TimeGrid::new(first - 0.5 * width, width, taus.len()).map_err(|e| Error::parse(first_line, e.to_string()))
}

fn meta_value<'a>(table: &'a Table, key: &str) -> Option<(usize, &'a str)> {
    table.meta.get(key).map(|(l, v)| (*l, v.as_str()))
}

pub fn write_envelope_csv<W: Write>(env: &ComplexEnvelope, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_ns", "re", "im"]).map_err(csv_io)?;
    for (tau, z) in env.grid().centers().zip(env.samples()) {
        w.write_record([format!("{tau}"), format!("{:.11e}", z.re), format!("{:.11e}", z.im)])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `tau_ns,re,im`; the grid is inferred from the `tau_ns` column.
pub fn read_envelope_csv<R: Read>(input: R) -> Result<ComplexEnvelope> {
    let table = read_table(input, &["tau_ns", "re", "im"])?;
    let mut taus = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        taus.push((*line, number(*line, &row[0], "tau_ns")?));
        values.push(Complex64::new(
            number(*line, &row[1], "re")?,
            number(*line, &row[2], "im")?,
        ));
    }
    let grid = grid_from_centers(&taus)?;
    ComplexEnvelope::sampled(grid, values).map_err(|e| match e {
        Error::Causality { bin, .. } => Error::parse(taus[bin].0, e.to_string()),
        other => other,
    })
}

fn setting_text(s: Option<&ProjectorSetting>) -> String {
    s.map_or_else(|| "none".to_string(), ProjectorSetting::tag)
}

/// `H`..`L`, `none`, or a custom `alpha/theta` pair in radians.
fn parse_setting(line: usize, text: &str) -> Result<Option<ProjectorSetting>> {
    if text == "none" {
        return Ok(None);
    }
    if let Ok(label) = text.parse::<PolarizationLabel>() {
        return Ok(Some(ProjectorSetting::named(label)));
    }
    let (a, t) = text
        .split_once('/')
        .ok_or_else(|| Error::parse(line, format!("unknown projector setting {text:?}")))?;
    Ok(Some(ProjectorSetting::custom(
        number(line, a, "alpha")?,
        number(line, t, "theta")?,
    )))
}

pub fn write_histogram_csv<W: Write>(hist: &CoincidenceHistogram, mut out: W) -> Result<()> {
    let (s3, s4) = match &hist.settings {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    writeln!(out, "# T_ns={}", hist.delay_ns)?;
    writeln!(out, "# setting3={}", setting_text(s3))?;
    writeln!(out, "# setting4={}", setting_text(s4))?;
    writeln!(out, "# kind={}", hist.kind)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_ns", "counts"]).map_err(csv_io)?;
    for (tau, v) in hist.grid.centers().zip(&hist.values) {
        let count = match hist.kind {
            HistogramKind::Sampled => format!("{v}"),
            HistogramKind::Expected => format!("{v:e}"),
        };
        w.write_record([format!("{tau}"), count]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a histogram; `T_ns` is required, settings default to `none` and kind to `sampled`.
pub fn read_histogram_csv<R: Read>(input: R) -> Result<CoincidenceHistogram> {
    let table = read_table(input, &["tau_ns", "counts"])?;
    let (t_line, t_text) = meta_value(&table, "T_ns").ok_or_else(|| Error::parse(1, "missing '# T_ns=' line"))?;
    let delay = number(t_line, t_text, "T_ns")?;
    let setting = |key: &str| -> Result<Option<ProjectorSetting>> {
        match meta_value(&table, key) {
            Some((line, text)) => parse_setting(line, text),
            None => Ok(None),
        }
    };
    let settings = match (setting("setting3")?, setting("setting4")?) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(Error::parse(t_line, "setting3 and setting4 must both be given or both be none")),
    };
    let kind = match meta_value(&table, "kind") {
        None | Some((_, "sampled")) => HistogramKind::Sampled,
        Some((_, "expected")) => HistogramKind::Expected,
        Some((line, other)) => return Err(Error::parse(line, format!("unknown histogram kind {other:?}"))),
    };
    let mut taus = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        taus.push((*line, number(*line, &row[0], "tau_ns")?));
        let v = number(*line, &row[1], "counts")?;
        if v < 0.0 {
            return Err(Error::parse(*line, format!("negative count {v}")));
        }
        if kind == HistogramKind::Sampled && v.fract() != 0.0 {
            return Err(Error::parse(*line, format!("sampled count {v} is not an integer")));
        }
        values.push(v);
    }
    let grid = grid_from_centers(&taus)?;
    CoincidenceHistogram::new(grid, delay, settings, values, kind)
}

pub fn write_events_csv<W: Write>(streams: &EventStreams, mut out: W) -> Result<()> {
    writeln!(out, "# duration_s={}", streams.duration)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "time_s"]).map_err(csv_io)?;
    let tagged = streams
        .stokes
        .iter()
        .map(|t| ("s", t))
        .chain(streams.antistokes.iter().map(|t| ("as", t)));
    for (ch, t) in tagged {
        w.write_record([ch.to_string(), format!("{t:e}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `channel,time_s` rows with channel `s` or `as`, in any order.
///
/// Without a `# duration_s=` line the duration is the latest tag.
pub fn read_events_csv<R: Read>(input: R) -> Result<EventStreams> {
    let table = read_table(input, &["channel", "time_s"])?;
    let (mut stokes, mut antistokes) = (Vec::new(), Vec::new());
    for (line, row) in &table.rows {
        let t = number(*line, &row[1], "time_s")?;
        if t < 0.0 {
            return Err(Error::parse(*line, format!("negative time tag {t}")));
        }
        match row[0].as_str() {
            "s" => stokes.push(t),
            "as" => antistokes.push(t),
            other => return Err(Error::parse(*line, format!("unknown channel {other:?}, expected s or as"))),
        }
    }
    let latest = stokes.iter().chain(&antistokes).copied().fold(0.0, f64::max);
    let duration = match meta_value(&table, "duration_s") {
        Some((line, text)) => {
            let d = number(line, text, "duration_s")?;
            if d < latest {
                return Err(Error::parse(line, format!("duration {d} s ends before the last tag at {latest} s")));
            }
            d
        }
        None => latest,
    };
    if !(duration > 0.0) {
        return Err(Error::parse(table.rows.first().map_or(1, |r| r.0), "event file holds no positive time tag"));
    }
    stokes.sort_by(f64::total_cmp);
    antistokes.sort_by(f64::total_cmp);
    EventStreams::new(stokes, antistokes, duration)
}

/// `tau_ns,amplitude,phase_rad,valid`; invalid bins leave the phase empty.
pub fn write_reconstruction_csv<W: Write>(result: &ReconstructionResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_ns", "amplitude", "phase_rad", "valid"]).map_err(csv_io)?;
    for k in 0..result.grid.n_bins() {
        let phase = match (result.valid[k], result.phase[k]) {
            (true, Some(p)) => format!("{p:.12e}"),
            _ => String::new(),
        };
        w.write_record([
            format!("{}", result.grid.center(k)),
            format!("{:.12e}", result.amplitude[k]),
            phase,
            u8::from(result.valid[k]).to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table with a `tau_ns` first column, for plot exports.
pub fn write_columns_csv<W: Write>(grid: &TimeGrid, columns: &[(&str, &[Option<f64>])], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = std::iter::once("tau_ns").chain(columns.iter().map(|c| c.0)).collect();
    w.write_record(&header).map_err(csv_io)?;
    for k in 0..grid.n_bins() {
        let row: Vec<String> = std::iter::once(format!("{}", grid.center(k)))
            .chain(columns.iter().map(|(_, v)| v[k].map_or_else(String::new, |x| format!("{x:.12e}"))))
            .collect();
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
