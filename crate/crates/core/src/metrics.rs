//! Correlation estimators on time-tagged streams and reconstruction scores.
//!
//! Tags are in seconds. Histogram delays use the same nanosecond [`TimeGrid`]
//! as the rest of the crate, with `tau = t_as - t_s`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{circular_mean, wrap};
use crate::interferometer::{derive_seed, EventStreams};
use crate::tomography::ReconstructionResult;
use crate::waveform::{argmax, ComplexEnvelope, TimeGrid};
use crate::{Error, Result, NS};

/// A value with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Normalized cross-correlation `g_{s,as}(tau)` per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub grid: TimeGrid,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub coincidences: Vec<u64>,
}

impl CorrelationEstimate {
    pub fn at_bin(&self, k: usize) -> Estimate {
        Estimate {
            value: self.g2[k],
            stderr: self.stderr[k],
        }
    }

    pub fn peak_bin(&self) -> usize {
        argmax(self.g2.iter().copied())
    }
}

/// Counts of `b` tags in `[a + lo, a + hi)` for every `a`, summed into bins.
fn delay_histogram(a: &[f64], b: &[f64], grid: &TimeGrid) -> Vec<u64> {
    let lo = grid.tau_min() * NS;
    let hi = grid.tau_max() * NS;
    let mut counts = vec![0u64; grid.n_bins()];
    let mut start = 0;
    for &t in a {
        while start < b.len() && b[start] < t + lo {
            start += 1;
        }
        for &u in &b[start..] {
            if u >= t + hi {
                break;
            }
            if let Some(k) = grid.bin_of((u - t) / NS) {
                counts[k] += 1;
            }
        }
    }
    counts
}

/// `g2[k] = N_k * D / (N_s * N_as * dtau)`, the coincidence histogram over the
/// accidental level predicted from the singles rates.
pub fn cross_g2(streams: &EventStreams, grid: &TimeGrid) -> Result<CorrelationEstimate> {
    let (ns, nas) = (streams.stokes.len(), streams.antistokes.len());
    if ns == 0 || nas == 0 {
        return Err(Error::NoData("cross correlation needs events on both channels".into()));
    }
    let counts = delay_histogram(&streams.stokes, &streams.antistokes, grid);
    let unit = streams.duration / (ns as f64 * nas as f64 * grid.bin_width_s());
    let g2 = counts.iter().map(|&n| n as f64 * unit).collect();
    // an empty bin is reported with the one-count scale
    let stderr = counts.iter().map(|&n| (n.max(1) as f64).sqrt() * unit).collect();
    Ok(CorrelationEstimate {
        grid: *grid,
        g2,
        stderr,
        coincidences: counts,
    })
}

/// Seeded 50/50 split of a tag list, as behind a virtual beam splitter.
fn split(tags: &[f64], seed: u64, label: &str) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label, 0.0));
    let mut a = Vec::with_capacity(tags.len() / 2 + 1);
    let mut b = Vec::with_capacity(tags.len() / 2 + 1);
    for &t in tags {
        if rng.random::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    (a, b)
}

/// Pairs `(i, j)` with `|a_i - b_j| <= window`.
fn count_within(a: &[f64], b: &[f64], window: f64) -> u64 {
    let mut total = 0u64;
    let (mut lo, mut hi) = (0, 0);
    for &t in a {
        while lo < b.len() && b[lo] < t - window {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < b.len() && b[hi] <= t + window {
            hi += 1;
        }
        total += (hi - lo) as u64;
    }
    total
}

/// `g2(0)` of one stream from a seeded virtual beam splitter.
///
/// `g = N_c * D / (N_a * N_b * 2W)` where `N_c` counts cross-half pairs within
/// `|dt| <= window` (s).
pub fn auto_g2_zero(tags: &[f64], duration: f64, window: f64, seed: u64) -> Result<Estimate> {
    if !(window > 0.0) || !(duration > 0.0) {
        return Err(Error::Param("window and duration must be positive".into()));
    }
    let (a, b) = split(tags, seed, "auto-split");
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoData(format!("{} events are too few to split", tags.len())));
    }
    let nc = count_within(&a, &b, window);
    let unit = duration / (a.len() as f64 * b.len() as f64 * 2.0 * window);
    Ok(Estimate {
        value: nc as f64 * unit,
        stderr: (nc.max(1) as f64).sqrt() * unit,
    })
}

/// `CS = g_cross^2 / (g_ss * g_asas)`.
pub fn cauchy_schwarz(gcross: f64, gss: f64, gasas: f64) -> Result<f64> {
    if !(gcross > 0.0 && gss > 0.0 && gasas > 0.0) {
        return Err(Error::Param(format!(
            "Cauchy-Schwarz inputs must be positive, got {gcross}, {gss}, {gasas}"
        )));
    }
    Ok(gcross * gcross / (gss * gasas))
}

/// [`cauchy_schwarz`] with first-order error propagation of independent inputs.
pub fn cauchy_schwarz_estimate(gcross: Estimate, gss: Estimate, gasas: Estimate) -> Result<Estimate> {
    let cs = cauchy_schwarz(gcross.value, gss.value, gasas.value)?;
    let rel = (2.0 * gcross.stderr / gcross.value).powi(2)
        + (gss.stderr / gss.value).powi(2)
        + (gasas.stderr / gasas.value).powi(2);
    Ok(Estimate {
        value: cs,
        stderr: cs * rel.sqrt(),
    })
}

/// Heralded autocorrelation and the counts behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalG2 {
    pub gc: f64,
    pub stderr: f64,
    pub heralds: u64,
    pub n12: u64,
    pub n13: u64,
    pub triples: u64,
}

/// `g_c = N_h * N_123 / (N_12 * N_13)`.
///
/// Every Stokes tag heralds a window `[t, t + window]` (s). The anti-Stokes
/// stream is split 50/50 under `seed`; `N_12` and `N_13` count heralds with at
/// least one click in either output and `N_123` heralds with clicks in both.
/// The error treats `N_123` as binomial in `N_h`; with no triples the
/// one-triple scale is reported.
pub fn conditional_g2(streams: &EventStreams, window: f64, seed: u64) -> Result<ConditionalG2> {
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::Param(format!("heralding window must be positive, got {window}")));
    }
    if streams.stokes.is_empty() {
        return Err(Error::NoData("no heralding Stokes events".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "herald-split", 0.0));
    let port: Vec<bool> = streams.antistokes.iter().map(|_| rng.random()).collect();
    let tags = &streams.antistokes;
    let (mut n12, mut n13, mut triples) = (0u64, 0u64, 0u64);
    let mut lo = 0;
    for &t in &streams.stokes {
        while lo < tags.len() && tags[lo] < t {
            lo += 1;
        }
        let (mut two, mut three) = (false, false);
        for j in lo..tags.len() {
            if tags[j] > t + window {
                break;
            }
            if port[j] {
                two = true;
            } else {
                three = true;
            }
        }
        n12 += u64::from(two);
        n13 += u64::from(three);
        triples += u64::from(two && three);
    }
    let heralds = streams.stokes.len() as u64;
    if n12 == 0 || n13 == 0 {
        return Err(Error::NoData("no heralded anti-Stokes clicks in one splitter output".into()));
    }
    let scale = heralds as f64 / (n12 as f64 * n13 as f64);
    let nt = (triples.max(1) as f64).min(heralds as f64);
    let var_t = nt * (1.0 - nt / heralds as f64);
    Ok(ConditionalG2 {
        gc: triples as f64 * scale,
        stderr: var_t.max(0.0).sqrt() * scale,
        heralds,
        n12,
        n13,
        triples,
    })
}

/// Outcome of a gauge-free phase comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseComparison {
    pub rmse: f64,
    /// Circular-mean offset removed before the RMS.
    pub offset: f64,
    /// Bins inside the mask with a recovered phase.
    pub compared: usize,
    /// Bins inside the mask.
    pub masked: usize,
}

impl PhaseComparison {
    pub fn coverage(&self) -> f64 {
        self.compared as f64 / self.masked as f64
    }
}

/// Compares a per-bin phase with the truth over `A^2 >= threshold * peak`.
///
/// Bins without a recovered phase are left out of the RMS and show up as
/// reduced coverage.
pub fn compare_phase(phase: &[Option<f64>], truth: &ComplexEnvelope, mask_threshold: f64) -> Result<PhaseComparison> {
    let samples = truth.samples();
    if phase.len() != samples.len() {
        return Err(Error::Length {
            expected: samples.len(),
            got: phase.len(),
        });
    }
    let peak = samples.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let mask: Vec<usize> = (0..samples.len())
        .filter(|&k| peak > 0.0 && samples[k].norm_sqr() >= mask_threshold * peak)
        .collect();
    if mask.is_empty() {
        return Err(Error::NoData("phase mask is empty".into()));
    }
    let diffs: Vec<f64> = mask
        .iter()
        .filter_map(|&k| phase[k].map(|p| wrap(p - samples[k].arg())))
        .collect();
    let offset = circular_mean(diffs.iter().map(|&d| (d, 1.0)))
        .ok_or_else(|| Error::NoData("no recovered phase inside the mask".into()))?;
    let ms = diffs.iter().map(|&d| wrap(d - offset).powi(2)).sum::<f64>() / diffs.len() as f64;
    Ok(PhaseComparison {
        rmse: ms.sqrt(),
        offset,
        compared: diffs.len(),
        masked: mask.len(),
    })
}

/// Gauge-removed phase RMSE of a reconstruction against the truth.
pub fn phase_rmse(result: &ReconstructionResult, truth: &ComplexEnvelope, mask_threshold: f64) -> Result<f64> {
    if result.grid != *truth.grid() {
        return Err(Error::GridMismatch("reconstruction and truth use different grids".into()));
    }
    compare_phase(&result.phase, truth, mask_threshold).map(|c| c.rmse)
}

/// `|<a, b>|^2 / (<a, a> <b, b>)` over the bins where `mask` holds.
pub fn overlap_fidelity(a: &[Complex64], b: &[Complex64], mask: Option<&[bool]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Length {
            expected: a.len(),
            got: b.len(),
        });
    }
    let keep = |k: usize| mask.is_none_or(|m| m[k]);
    let (mut cross, mut na, mut nb) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for k in (0..a.len()).filter(|&k| keep(k)) {
        cross += a[k].conj() * b[k];
        na += a[k].norm_sqr();
        nb += b[k].norm_sqr();
    }
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::ZeroEnvelope);
    }
    Ok((cross.norm_sqr() / (na * nb)).min(1.0))
}

/// Overlap fidelity of the reconstructed waveform with the truth on valid bins.
pub fn waveform_fidelity(result: &ReconstructionResult, truth: &ComplexEnvelope) -> Result<f64> {
    if result.grid != *truth.grid() {
        return Err(Error::GridMismatch("reconstruction and truth use different grids".into()));
    }
    overlap_fidelity(&result.waveform(), truth.samples(), Some(&result.valid))
}

/// Parameters of [`metrics_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsParams {
    /// Delay grid of the cross correlation (ns).
    pub grid: TimeGrid,
    /// Half-width of the zero-delay autocorrelation window (s).
    pub auto_window: f64,
    /// Heralding window after each Stokes tag (s).
    pub herald_window: f64,
    /// Delay at which `g_cross` enters CS; `None` takes the histogram maximum.
    pub gcross_tau_ns: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cs: f64,
    pub cs_err: f64,
    pub gc: f64,
    pub gc_err: f64,
    pub gcross_peak: f64,
    pub gss0: f64,
    pub gasas0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_rmse_rad: Option<f64>,
}

/// Cross correlation, both autocorrelations, CS and `g_c` from one pair of streams.
pub fn metrics_report(streams: &EventStreams, params: &MetricsParams) -> Result<MetricsReport> {
    let cross = cross_g2(streams, &params.grid)?;
    let k = match params.gcross_tau_ns {
        Some(tau) => params
            .grid
            .bin_of(tau)
            .ok_or_else(|| Error::Param(format!("g_cross delay {tau} ns is off the grid")))?,
        None => cross.peak_bin(),
    };
    let gcross = cross.at_bin(k);
    let gss = auto_g2_zero(&streams.stokes, streams.duration, params.auto_window, params.seed)?;
    let gasas = auto_g2_zero(&streams.antistokes, streams.duration, params.auto_window, params.seed ^ 1)?;
    let cs = cauchy_schwarz_estimate(gcross, gss, gasas)?;
    let gc = conditional_g2(streams, params.herald_window, params.seed)?;
    Ok(MetricsReport {
        cs: cs.value,
        cs_err: cs.stderr,
        gc: gc.gc,
        gc_err: gc.stderr,
        gcross_peak: gcross.value,
        gss0: gss.value,
        gasas0: gasas.value,
        fidelity: None,
        phase_rmse_rad: None,
    })
}
