use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use biphoton::formats::{
    read_envelope_csv, read_events_csv, read_histogram_csv, write_columns_csv, write_envelope_csv,
    write_events_csv, write_histogram_csv, write_reconstruction_csv,
};
use biphoton::interferometer::{generate_event_streams, sample_histogram, source_coincidence};
use biphoton::metrics::{compare_phase, metrics_report, waveform_fidelity, MetricsParams, MetricsReport};
use biphoton::tomography::{reconstruct as run_reconstruction, ReconstructionSummary, XiProfile};
use biphoton::{CoincidenceHistogram, ComplexEnvelope, Interferometer, ReconstructionResult, SixPack};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{sha256_hex, Manifest, RunWriter};
use crate::CliError;

pub const ENVELOPE: &str = "envelope.csv";
pub const EVENTS: &str = "events.csv";
pub const C12: &str = "hist_c12.csv";

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Identifies a run; the output directory does not change any content.
fn config_hash(cfg: &RunConfig) -> String {
    let key = RunConfig {
        out_dir: PathBuf::new(),
        ..cfg.clone()
    };
    sha256_hex(&serde_json::to_vec(&key).expect("config serializes"))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> biphoton::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(data)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

struct Histograms {
    fine: SixPack,
    coarse: SixPack,
    c12: CoincidenceHistogram,
}

fn expected_histograms(cfg: &RunConfig, interf: &Interferometer<'_>, measure_time: f64) -> Result<Histograms, CliError> {
    let grid = *interf.env.grid();
    let mut acq = cfg.acquisition(grid.bin_width())?;
    acq.measure_time = measure_time;
    Ok(Histograms {
        fine: SixPack::expected(interf, cfg.t_s_ns, &acq, &grid).map_err(|e| config_err_at("t_s_ns", e))?,
        coarse: SixPack::expected(interf, cfg.t_l_ns, &acq, &grid).map_err(|e| config_err_at("t_l_ns", e))?,
        c12: source_coincidence(interf.env, &interf.source, &acq, &grid).map_err(|e| config_err_at("grid", e))?,
    })
}

fn config_err_at(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

impl Histograms {
    fn all(&self) -> impl Iterator<Item = &CoincidenceHistogram> {
        self.fine.histograms().iter().chain(self.coarse.histograms()).chain([&self.c12])
    }

    /// Counts above the accidental floor in the dimmest histogram.
    fn min_signal(&self, background: f64) -> f64 {
        self.all()
            .map(|h| h.total() - background * h.values.len() as f64)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOutput {
    pub files: Vec<String>,
    /// Integration time after the `min_counts` rescaling (s).
    pub measure_time_s: f64,
    pub min_histogram_counts: f64,
}

/// Writes the truth envelope, both six-packs, the source histogram and the event streams.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutput, CliError> {
    cfg.validate()?;
    let env = cfg.envelope()?;
    let source = cfg.source()?;
    let interf = Interferometer::new(&env, source).with_residual_phase(cfg.lambda0_rad);

    let mut measure_time = cfg.measure_time_s;
    let mut hists = expected_histograms(cfg, &interf, measure_time)?;
    if let Some(target) = cfg.min_counts {
        let signal = hists.min_signal(cfg.background_counts_per_bin);
        if !(signal > 0.0) {
            return Err(CliError::Config("min_counts: a histogram holds no signal counts".into()));
        }
        measure_time *= target / signal;
        hists = expected_histograms(cfg, &interf, measure_time)?;
    }
    if !cfg.noise_free {
        hists = Histograms {
            fine: hists.fine.sampled(cfg.seed).map_err(data)?,
            coarse: hists.coarse.sampled(cfg.seed).map_err(data)?,
            c12: sample_histogram(&hists.c12, cfg.seed).map_err(data)?,
        };
    }
    let acq = cfg.acquisition(env.grid().bin_width())?;
    let events = generate_event_streams(
        &env,
        &source,
        &acq,
        cfg.singles_background_s_per_s,
        cfg.singles_background_as_per_s,
        cfg.events_duration_s,
        cfg.seed,
    )
    .map_err(data)?;

    let mut out = RunWriter::open(&cfg.out_dir, "simulate", config_hash(cfg))?;
    let mut files = Vec::new();
    let mut put = |out: &mut RunWriter, name: String, bytes: Vec<u8>| -> Result<(), CliError> {
        out.write(&name, &bytes)?;
        files.push(name);
        Ok(())
    };
    put(&mut out, ENVELOPE.into(), csv_bytes(|b| write_envelope_csv(&env, b))?)?;
    for (pack, which) in [(&hists.fine, "short"), (&hists.coarse, "long")] {
        for h in pack.histograms() {
            let pair = h.setting_pair().expect("six-pack histograms carry named settings");
            put(&mut out, format!("hist_{which}_{pair:?}.csv"), csv_bytes(|b| write_histogram_csv(h, b))?)?;
        }
    }
    put(&mut out, C12.into(), csv_bytes(|b| write_histogram_csv(&hists.c12, b))?)?;
    put(&mut out, EVENTS.into(), csv_bytes(|b| write_events_csv(&events, b))?)?;

    let m = out.manifest_mut();
    m.scenario = Some(cfg.scenario.as_str().to_string());
    m.seed = Some(cfg.seed);
    m.delta_rad_per_s = Some(cfg.delta());
    m.lambda0_rad = Some(cfg.lambda0_rad);
    out.finish()?;
    Ok(SimulateOutput {
        files,
        measure_time_s: measure_time,
        min_histogram_counts: hists.all().map(CoincidenceHistogram::total).fold(f64::INFINITY, f64::min),
    })
}

/// Loads every `hist_*.csv` in `dir` and sorts them into the two six-packs and `C12`.
fn load_histograms(cfg: &RunConfig, dir: &Path) -> Result<Histograms, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("hist_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    let (mut fine, mut coarse, mut c12) = (Vec::new(), Vec::new(), None);
    for path in &paths {
        let h = read_histogram_csv(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if h.settings.is_none() {
            if c12.replace(h).is_some() {
                return Err(CliError::Data(format!(
                    "{}: second source histogram (settings none) in {}",
                    path.display(),
                    dir.display()
                )));
            }
        } else if (h.delay_ns - cfg.t_s_ns).abs() < 1e-9 {
            fine.push(h);
        } else if (h.delay_ns - cfg.t_l_ns).abs() < 1e-9 {
            coarse.push(h);
        } else {
            return Err(CliError::Data(format!(
                "{}: T = {} ns matches neither t_s_ns = {} nor t_l_ns = {}",
                path.display(),
                h.delay_ns,
                cfg.t_s_ns,
                cfg.t_l_ns
            )));
        }
    }
    let pack = |hs: Vec<CoincidenceHistogram>, name: &str, t: f64| {
        SixPack::from_histograms(hs).map_err(|e| CliError::Data(format!("{name}-delay six-pack (T = {t} ns): {e}")))
    };
    Ok(Histograms {
        fine: pack(fine, "short", cfg.t_s_ns)?,
        coarse: pack(coarse, "long", cfg.t_l_ns)?,
        c12: c12.ok_or_else(|| CliError::Data(format!("no source histogram ({C12}) in {}", dir.display())))?,
    })
}

fn option_where(values: &[f64], valid: &[bool]) -> Vec<Option<f64>> {
    values.iter().zip(valid).map(|(&v, &ok)| ok.then_some(v)).collect()
}

fn xi_columns(xi: &XiProfile) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    (option_where(&xi.xi, &xi.valid), option_where(&xi.stderr, &xi.valid))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructOutput {
    #[serde(flatten)]
    pub summary: ReconstructionSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_coverage: Option<f64>,
}

/// Reconstructs from the histograms in `input`; truth metrics when `envelope.csv` is present.
pub fn reconstruct(cfg: &RunConfig, input: &Path) -> Result<ReconstructOutput, CliError> {
    if let Some(m) = Manifest::load(input)? {
        m.verify_existing(input)?;
    }
    let hists = load_histograms(cfg, input)?;
    let result: ReconstructionResult =
        run_reconstruction(&hists.fine, &hists.coarse, &hists.c12, &cfg.plan()).map_err(data)?;
    let truth_path = input.join(ENVELOPE);
    let truth: Option<ComplexEnvelope> = if truth_path.is_file() {
        Some(read_envelope_csv(open(&truth_path)?).map_err(|e| CliError::Data(format!("{}: {e}", truth_path.display())))?)
    } else {
        None
    };

    let mut summary = result.summary();
    let mut coverage = None;
    let mut truth_phase = None;
    if let Some(truth) = &truth {
        if *truth.grid() != result.grid {
            return Err(CliError::Data(format!("{} is on a different grid than the histograms", truth_path.display())));
        }
        let cmp = compare_phase(&result.phase, truth, cfg.rmse_mask).map_err(data)?;
        summary.rmse_vs_truth = Some(cmp.rmse);
        summary.fidelity_vs_truth = Some(waveform_fidelity(&result, truth).map_err(data)?);
        coverage = Some(cmp.coverage());
        // truth in the reconstruction's gauge
        truth_phase = Some(
            truth
                .samples()
                .iter()
                .map(|z| (z.norm_sqr() > 0.0).then(|| biphoton::angle::wrap(z.arg() + cmp.offset)))
                .collect::<Vec<_>>(),
        );
    }

    let g = result.grid;
    let bg = result.background;
    let counts: Vec<Option<f64>> = hists.c12.values.iter().map(|&v| Some(v)).collect();
    let net: Vec<Option<f64>> = hists.c12.values.iter().map(|&v| Some(v - bg)).collect();
    let amp_sq: Vec<Option<f64>> = result.amplitude.iter().map(|&a| Some(a * a)).collect();
    let (xs, xs_err) = xi_columns(&result.xi_fine);
    let (xl, xl_err) = xi_columns(&result.xi_coarse);
    let phase: Vec<Option<f64>> = result.phase.iter().zip(&result.valid).map(|(p, &v)| p.filter(|_| v)).collect();

    let report = ReconstructOutput {
        summary,
        phase_coverage: coverage,
    };
    let mut out = RunWriter::open(&cfg.out_dir, "reconstruct", config_hash(cfg))?;
    out.write("reconstruction.csv", &csv_bytes(|b| write_reconstruction_csv(&result, b))?)?;
    out.write("reconstruction.json", &json_bytes(&report))?;
    out.write(
        "panel_a_coincidence.csv",
        &csv_bytes(|b| write_columns_csv(&g, &[("c12_counts", &counts), ("c12_net", &net), ("amplitude_sq", &amp_sq)], b))?,
    )?;
    out.write(
        "panel_b_xi.csv",
        &csv_bytes(|b| {
            write_columns_csv(
                &g,
                &[("xi_short_rad", &xs), ("xi_short_stderr", &xs_err), ("xi_long_rad", &xl), ("xi_long_stderr", &xl_err)],
                b,
            )
        })?,
    )?;
    let mut phase_cols: Vec<(&str, &[Option<f64>])> = vec![("phase_rad", &phase)];
    if let Some(t) = &truth_phase {
        phase_cols.push(("truth_phase_rad", t));
    }
    out.write("panel_c_phase.csv", &csv_bytes(|b| write_columns_csv(&g, &phase_cols, b))?)?;
    out.finish()?;
    Ok(report)
}

/// Scores an event file; `gcross_tau_ns` falls back to the config, then to the histogram maximum.
pub fn metrics(cfg: &RunConfig, events: &Path, gcross_tau_ns: Option<f64>) -> Result<MetricsReport, CliError> {
    cfg.validate()?;
    let streams =
        read_events_csv(open(events)?).map_err(|e| CliError::Data(format!("{}: {e}", events.display())))?;
    let params = MetricsParams {
        grid: cfg.grid()?,
        auto_window: cfg.auto_window_s,
        herald_window: cfg.herald_window_s,
        gcross_tau_ns: cfg.gcross_tau_ns.or(gcross_tau_ns),
        seed: cfg.seed,
    };
    let report = metrics_report(&streams, &params).map_err(data)?;
    let mut out = RunWriter::open(&cfg.out_dir, "metrics", config_hash(cfg))?;
    out.write("metrics.json", &json_bytes(&report))?;
    out.finish()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub key: &'static str,
    /// `"max"` or `"min"`.
    pub bound: &'static str,
    pub limit: f64,
    pub value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub scenario: crate::config::Scenario,
    pub seed: u64,
    pub delta_true_rad_per_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_rel_err: Option<f64>,
    pub simulate: SimulateOutput,
    pub reconstruction: ReconstructOutput,
    pub metrics: MetricsReport,
    pub thresholds: Vec<ThresholdCheck>,
    pub passed: bool,
}

/// simulate -> reconstruct -> metrics, then the configured thresholds.
///
/// The report is written before a threshold miss is returned.
pub fn pipeline(cfg: &RunConfig) -> Result<PipelineReport, CliError> {
    let sim = simulate(cfg).map_err(|e| e.in_stage("simulate"))?;
    let rec = reconstruct(cfg, &cfg.out_dir).map_err(|e| e.in_stage("reconstruct"))?;
    let peak_tau = {
        let env = cfg.envelope()?;
        env.grid().center(env.peak_bin())
    };
    let mut met = metrics(cfg, &cfg.out_dir.join(EVENTS), Some(peak_tau)).map_err(|e| e.in_stage("metrics"))?;
    met.fidelity = rec.summary.fidelity_vs_truth;
    met.phase_rmse_rad = rec.summary.rmse_vs_truth;

    let delta = cfg.delta();
    let delta_rel_err = (delta != 0.0).then(|| (rec.summary.delta_hat_rad_per_s - delta).abs() / delta.abs());
    let candidates = [
        ("phase_rmse_rad", "max", cfg.threshold_phase_rmse_rad, rec.summary.rmse_vs_truth),
        ("fidelity", "min", cfg.threshold_fidelity, rec.summary.fidelity_vs_truth),
        ("cs", "min", cfg.threshold_cs, Some(met.cs)),
        ("gc", "max", cfg.threshold_gc, Some(met.gc)),
        ("delta_rel_err", "max", cfg.threshold_delta_rel_err, delta_rel_err),
    ];
    let thresholds: Vec<ThresholdCheck> = candidates
        .into_iter()
        .filter_map(|(key, bound, limit, value)| {
            let limit = limit?;
            let pass = value.is_some_and(|v| if bound == "max" { v <= limit } else { v >= limit });
            Some(ThresholdCheck {
                key,
                bound,
                limit,
                value,
                pass,
            })
        })
        .collect();
    let passed = thresholds.iter().all(|t| t.pass);
    let report = PipelineReport {
        scenario: cfg.scenario,
        seed: cfg.seed,
        delta_true_rad_per_s: delta,
        delta_rel_err,
        simulate: sim,
        reconstruction: rec,
        metrics: met,
        thresholds,
        passed,
    };
    let mut out = RunWriter::open(&cfg.out_dir, "pipeline", config_hash(cfg))?;
    out.write("pipeline.json", &json_bytes(&report))?;
    out.finish()?;
    if !passed {
        let misses = report
            .thresholds
            .iter()
            .filter(|t| !t.pass)
            .map(|t| match t.value {
                Some(v) => format!("{} = {v:.6} violates {} {}", t.key, t.bound, t.limit),
                None => format!("{} is not available for this run", t.key),
            })
            .collect();
        return Err(CliError::Threshold(misses));
    }
    Ok(report)
}
