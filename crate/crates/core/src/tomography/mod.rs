//! Reconstruction of the biphoton waveform from six-projector histograms.
//!
//! For each delay `T` the six histograms give the interference phase
//! `Lambda(T, tau) = Xi(T, tau) + Lambda0`, where
//! `Xi(T, tau) = phi(tau + T) - phi(tau - T) - delta T` on `tau > T` and
//! `Xi(T, -tau) = -Xi(T, tau)`. The short delay `T_s` resolves the phase inside
//! each amplitude island on a lattice of spacing `2 T_s`; the long delay `T_l`
//! bridges the nodes between islands.

pub mod lambda;
pub mod phase;

use serde::Serialize;

use crate::angle::{circular_mean, wrap};
use crate::interferometer::{
    check_delay, sample_histogram, AcquisitionConfig, CoincidenceHistogram, HistogramKind, Interferometer,
    SettingPair,
};
use crate::waveform::{argmax, TimeGrid};
use crate::{Error, Result, NS};

pub use lambda::{
    compute_b, compute_lambda, compute_xi, estimate_delta, estimate_lambda0, resolve_delta, BRatio,
    DeltaEstimate, Lambda0Estimate, LambdaProfile, XiProfile, LAMBDA_SIGN,
};
pub use phase::{
    detect_islands, estimate_background, island_phase, reconstruct_amplitude, recursive_phase, stitch_two_step,
    Island, LatticePhase, StitchedPhase,
};

/// The six projector histograms recorded at one delay.
#[derive(Debug, Clone, PartialEq)]
pub struct SixPack {
    hists: [CoincidenceHistogram; 6],
}

impl SixPack {
    /// Accepts the histograms in any order; each pair must appear exactly once.
    pub fn from_histograms(hists: Vec<CoincidenceHistogram>) -> Result<Self> {
        let mut slots: [Option<CoincidenceHistogram>; 6] = Default::default();
        for h in hists {
            let pair = h
                .setting_pair()
                .ok_or_else(|| Error::Param("histogram is not one of the six projector pairs".into()))?;
            let i = SettingPair::ALL.iter().position(|&p| p == pair).expect("pair is listed");
            if slots[i].replace(h).is_some() {
                return Err(Error::Param(format!("duplicate histogram for setting {pair}")));
            }
        }
        if let Some(i) = slots.iter().position(Option::is_none) {
            return Err(Error::Param(format!("missing histogram for setting {}", SettingPair::ALL[i])));
        }
        let hists = slots.map(|h| h.expect("checked above"));
        let first = &hists[0];
        for h in &hists[1..] {
            if h.grid != first.grid {
                return Err(Error::GridMismatch("six-pack histograms use different grids".into()));
            }
            if (h.delay_ns - first.delay_ns).abs() > 1e-9 {
                return Err(Error::GridMismatch("six-pack histograms use different delays".into()));
            }
            if h.kind != first.kind {
                return Err(Error::Param("six-pack mixes expected and sampled histograms".into()));
            }
        }
        Ok(Self { hists })
    }

    /// Noise-free six-pack from the forward model.
    pub fn expected(interf: &Interferometer<'_>, t_ns: f64, acq: &AcquisitionConfig, grid: &TimeGrid) -> Result<Self> {
        let hists = SettingPair::ALL
            .iter()
            .map(|&p| interf.expected_for(p, t_ns, acq, grid))
            .collect::<Result<Vec<_>>>()?;
        Self::from_histograms(hists)
    }

    /// Poisson draw of every histogram; order-independent under `seed`.
    pub fn sampled(&self, seed: u64) -> Result<Self> {
        let hists = self
            .hists
            .iter()
            .map(|h| sample_histogram(h, seed))
            .collect::<Result<Vec<_>>>()?;
        Self::from_histograms(hists)
    }

    pub fn get(&self, pair: SettingPair) -> &CoincidenceHistogram {
        let i = SettingPair::ALL.iter().position(|&p| p == pair).expect("pair is listed");
        &self.hists[i]
    }

    pub fn histograms(&self) -> &[CoincidenceHistogram; 6] {
        &self.hists
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.hists[0].grid
    }

    pub fn delay_ns(&self) -> f64 {
        self.hists[0].delay_ns
    }

    pub fn kind(&self) -> HistogramKind {
        self.hists[0].kind
    }

    pub fn total(&self) -> f64 {
        self.hists.iter().map(CoincidenceHistogram::total).sum()
    }
}

/// Delays and gating choices of a two-step reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TomographyPlan {
    pub t_s_ns: f64,
    pub t_l_ns: f64,
    /// Island cut as a fraction of the peak source coincidence.
    pub island_threshold: f64,
    /// Minimum counts for a bin to enter the angle estimates.
    pub count_floor: f64,
    /// Phase reference; `None` picks the peak of the source coincidences.
    pub reference_tau0_ns: Option<f64>,
    /// Half-width of the residual-phase average; `None` uses all symmetric pairs.
    pub t_a_ns: Option<f64>,
    /// Half-width of the near-edge windows for the frequency difference.
    pub delta_window_ns: Option<f64>,
    /// Accidental floor per bin; `None` estimates it from the histogram tails.
    pub background: Option<f64>,
}

impl Default for TomographyPlan {
    fn default() -> Self {
        Self {
            t_s_ns: 1.0,
            t_l_ns: 5.8,
            island_threshold: 0.05,
            count_floor: 20.0,
            reference_tau0_ns: None,
            t_a_ns: None,
            delta_window_ns: None,
            background: None,
        }
    }
}

impl TomographyPlan {
    pub fn new(t_s_ns: f64, t_l_ns: f64) -> Self {
        Self {
            t_s_ns,
            t_l_ns,
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        check_delay(grid, self.t_s_ns)?;
        check_delay(grid, self.t_l_ns)?;
        if !(self.t_s_ns > 0.0 && self.t_s_ns < self.t_l_ns) {
            return Err(Error::Param(format!(
                "need 0 < T_s < T_l, got T_s = {} ns, T_l = {} ns",
                self.t_s_ns, self.t_l_ns
            )));
        }
        if !(self.island_threshold > 0.0 && self.island_threshold < 1.0) {
            return Err(Error::Param(format!(
                "island threshold must lie in (0, 1), got {}",
                self.island_threshold
            )));
        }
        if !(self.count_floor >= 0.0) {
            return Err(Error::Param("count floor must be >= 0".into()));
        }
        if let Some(b) = self.background {
            if !(b >= 0.0) {
                return Err(Error::Param("background must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Everything recovered by [`reconstruct`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub grid: TimeGrid,
    /// Unit-`L2` amplitude (s^-1/2), zero for `tau <= 0`.
    pub amplitude: Vec<f64>,
    /// Unwrapped phase, present on valid bins only.
    pub phase: Vec<Option<f64>>,
    pub valid: Vec<bool>,
    /// Frequency difference (rad/s).
    pub delta_hat: f64,
    /// Branch-resolved `Xi` step across `tau = 0` at the long delay.
    pub xi_step: f64,
    pub lambda0_hat: f64,
    pub lambda0_stderr: f64,
    pub background: f64,
    pub islands: Vec<Island>,
    pub components: Vec<Vec<usize>>,
    pub island_offsets: Vec<Option<f64>>,
    pub reference_bin: usize,
    /// Islands whose fine recursion stopped at an invalid bin.
    pub truncated: Vec<usize>,
    pub xi_fine: XiProfile,
    pub xi_coarse: XiProfile,
}

/// JSON summary of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ReconstructionSummary {
    pub delta_hat_rad_per_s: f64,
    pub lambda0_hat_rad: f64,
    pub lambda0_stderr_rad: f64,
    pub xi_step_rad: f64,
    pub islands: Vec<IslandSpan>,
    pub components: Vec<Vec<usize>>,
    pub reference_tau0_ns: f64,
    pub valid_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_vs_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_vs_truth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct IslandSpan {
    pub start_bin: usize,
    pub end_bin: usize,
    pub start_ns: f64,
    pub end_ns: f64,
}

impl ReconstructionResult {
    /// Complex waveform `A e^{i phi}` on valid bins, zero elsewhere.
    pub fn waveform(&self) -> Vec<num_complex::Complex64> {
        self.amplitude
            .iter()
            .zip(&self.phase)
            .zip(&self.valid)
            .map(|((&a, p), &v)| match (v, p) {
                (true, Some(ph)) => num_complex::Complex64::from_polar(a, *ph),
                _ => num_complex::Complex64::new(0.0, 0.0),
            })
            .collect()
    }

    pub fn summary(&self) -> ReconstructionSummary {
        let g = &self.grid;
        let half = 0.5 * g.bin_width();
        ReconstructionSummary {
            delta_hat_rad_per_s: self.delta_hat,
            lambda0_hat_rad: self.lambda0_hat,
            lambda0_stderr_rad: self.lambda0_stderr,
            xi_step_rad: self.xi_step,
            islands: self
                .islands
                .iter()
                .map(|i| IslandSpan {
                    start_bin: i.start,
                    end_bin: i.end,
                    start_ns: g.center(i.start) - half,
                    end_ns: g.center(i.end) + half,
                })
                .collect(),
            components: self.components.clone(),
            reference_tau0_ns: g.center(self.reference_bin),
            valid_bins: self.valid.iter().filter(|&&v| v).count(),
            rmse_vs_truth: None,
            fidelity_vs_truth: None,
        }
    }
}

/// Two-delay reconstruction of amplitude, phase, `delta` and `Lambda0`.
///
/// Stages: ratios and `Lambda` at both delays, the residual phase (short delay
/// fixes the branch, long delay refines modulo pi), `Xi`, the frequency
/// difference from the step of `Xi` across `tau = 0` (short delay selects the
/// `2 pi` branch of the long-delay step), islands of the source coincidences,
/// fine recursion inside each island, long-delay stitching and the amplitude.
pub fn reconstruct(
    fine: &SixPack,
    coarse: &SixPack,
    c12: &CoincidenceHistogram,
    plan: &TomographyPlan,
) -> Result<ReconstructionResult> {
    let grid = *fine.grid();
    plan.validate(&grid).map_err(|e| e.at_stage("plan"))?;
    if *coarse.grid() != grid || c12.grid != grid {
        return Err(Error::GridMismatch("six-packs and source histogram must share one grid".into()).at_stage("input"));
    }
    if !grid.is_symmetric() {
        return Err(Error::Grid("reconstruction needs a grid symmetric about 0".into()).at_stage("input"));
    }
    for (pack, t, name) in [(fine, plan.t_s_ns, "short"), (coarse, plan.t_l_ns, "long")] {
        if (pack.delay_ns() - t).abs() > 1e-9 {
            return Err(Error::Param(format!(
                "{name}-delay six-pack was recorded at T = {} ns, plan expects {t} ns",
                pack.delay_ns()
            ))
            .at_stage("input"));
        }
    }
    let background = plan.background.unwrap_or_else(|| estimate_background(c12));

    let lam_s = compute_lambda(fine, plan.count_floor, background).map_err(|e| e.at_stage("lambda (T_s)"))?;
    let lam_l = compute_lambda(coarse, plan.count_floor, background).map_err(|e| e.at_stage("lambda (T_l)"))?;

    let l0_s = estimate_lambda0(&lam_s, plan.t_a_ns).map_err(|e| e.at_stage("lambda0"))?;
    let mut lambda0 = l0_s.value;
    let mut l0_var = l0_s.stderr.powi(2);
    if let Ok(l0_l) = estimate_lambda0(&lam_l, plan.t_a_ns) {
        // the long delay is only trusted modulo pi
        let aligned = [l0_l.value, l0_l.value + std::f64::consts::PI]
            .into_iter()
            .min_by(|a, b| wrap(a - lambda0).abs().total_cmp(&wrap(b - lambda0).abs()))
            .expect("two candidates");
        let (ws, wl) = (1.0 / l0_var.max(1e-300), 1.0 / l0_l.stderr.powi(2).max(1e-300));
        if let Some(m) = circular_mean([(lambda0, ws), (aligned, wl)]) {
            lambda0 = m;
            l0_var = 1.0 / (ws + wl);
        }
    }

    let mut xi_s = compute_xi(&lam_s, lambda0);
    let mut xi_l = compute_xi(&lam_l, lambda0);

    let d_s = estimate_delta(&xi_s, plan.delta_window_ns).map_err(|e| e.at_stage("delta (T_s)"))?;
    let d_l = estimate_delta(&xi_l, plan.delta_window_ns).map_err(|e| e.at_stage("delta (T_l)"))?;
    let delta = resolve_delta(&d_s, &d_l);

    // with delta known, the short-delay increments Xi + sgn(tau) delta T_s must sit near zero
    let dt_s = delta.delta * plan.t_s_ns * NS;
    let score: f64 = (0..grid.n_bins())
        .filter(|&k| xi_s.valid[k])
        .map(|k| xi_s.weight(k).min(1e12) * (xi_s.xi[k] + grid.center(k).signum() * dt_s).cos())
        .sum();
    if score < 0.0 {
        lambda0 = wrap(lambda0 + std::f64::consts::PI);
        xi_s = compute_xi(&lam_s, lambda0);
        xi_l = compute_xi(&lam_l, lambda0);
    }

    let signal: Vec<f64> = (0..grid.n_bins())
        .map(|k| {
            if grid.center(k) > 0.0 {
                (c12.values[k] - background).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let islands = detect_islands(&signal, &grid, plan.island_threshold).map_err(|e| e.at_stage("islands"))?;

    let reference_bin = match plan.reference_tau0_ns {
        Some(tau) => grid
            .bin_of(tau)
            .ok_or_else(|| Error::Param(format!("reference tau0 = {tau} ns is off the grid")).at_stage("reference"))?,
        None => argmax(signal.iter().copied()),
    };
    let ref_island = islands
        .iter()
        .position(|i| i.contains(reference_bin))
        .ok_or_else(|| {
            Error::Param(format!(
                "reference tau0 = {} ns is not inside an amplitude island",
                grid.center(reference_bin)
            ))
            .at_stage("reference")
        })?;

    let mut truncated = Vec::new();
    let fine_phases = islands
        .iter()
        .enumerate()
        .map(|(i, island)| {
            let anchor = if i == ref_island {
                reference_bin
            } else {
                island.start + argmax(signal[island.bins()].iter().copied())
            };
            let p = island_phase(&xi_s, delta.delta, anchor, island)?;
            if p.truncated {
                truncated.push(i);
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("fine recursion"))?;

    let stitched = stitch_two_step(&fine_phases, &xi_l, &islands, delta.delta).map_err(|e| e.at_stage("stitch"))?;
    let ref_component = stitched
        .components
        .iter()
        .find(|c| c.contains(&ref_island))
        .expect("every island belongs to a component");
    let gauge = stitched.phase[reference_bin].expect("reference bin anchors its island");
    let mut phase = stitched.phase.clone();
    for &i in ref_component {
        for k in islands[i].bins() {
            if let Some(p) = phase[k].as_mut() {
                *p -= gauge;
            }
        }
    }

    let amplitude = reconstruct_amplitude(c12, background).map_err(|e| e.at_stage("amplitude"))?;
    let valid: Vec<bool> = (0..grid.n_bins())
        .map(|k| phase[k].is_some() && amplitude[k] > 0.0)
        .collect();
    for (k, p) in phase.iter_mut().enumerate() {
        if !valid[k] {
            *p = None;
        }
    }

    Ok(ReconstructionResult {
        grid,
        amplitude,
        phase,
        valid,
        delta_hat: delta.delta,
        xi_step: delta.jump,
        lambda0_hat: lambda0,
        lambda0_stderr: l0_var.sqrt(),
        background,
        islands,
        components: stitched.components,
        island_offsets: stitched.offsets,
        reference_bin,
        truncated,
        xi_fine: xi_s,
        xi_coarse: xi_l,
    })
}
