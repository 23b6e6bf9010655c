//! Flat TOML run configuration.
//!
//! Every key is optional; unknown keys are rejected. Relative paths resolve
//! against the directory of the config file.
//!
//! ```toml
//! scenario = "nondegenerate_rabi"
//! seed = 7
//! out_dir = "runs/nondegenerate"
//! min_counts = 1e5
//! threshold_delta_rel_err = 0.05
//! ```

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use biphoton::tomography::TomographyPlan;
use biphoton::waveform::make_time_grid;
use biphoton::{AcquisitionConfig, ComplexEnvelope, RabiParams, SourceSpec, TimeGrid, NS};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DegenerateRabi,
    NondegenerateRabi,
    Exponential,
    Custom,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DegenerateRabi => "degenerate_rabi",
            Self::NondegenerateRabi => "nondegenerate_rabi",
            Self::Exponential => "exponential",
            Self::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Envelope CSV (`tau_ns,re,im`) for the custom scenario; its grid replaces the `tau_*` keys.
    pub envelope_csv: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub tau_min_ns: f64,
    pub tau_max_ns: f64,
    pub bin_width_ns: f64,

    pub rabi_omega_e_rad_per_s: f64,
    pub rabi_gamma_per_s: f64,
    pub rabi_phi0_rad: f64,
    pub exp_gamma_per_s: f64,

    pub omega_s0_rad_per_s: f64,
    /// `omega_as0 - omega_s0`; defaults to 0 (degenerate, custom) or 2 pi x 43 MHz.
    pub delta_rad_per_s: Option<f64>,
    pub pair_rate_per_s: f64,
    /// Residual optical phase injected into the second interferometer bracket.
    pub lambda0_rad: f64,

    pub eta: f64,
    pub measure_time_s: f64,
    /// Rescales the integration time so the dimmest histogram holds this many counts.
    pub min_counts: Option<f64>,
    pub background_counts_per_bin: f64,
    /// Write expected (noise-free) histograms instead of Poisson draws.
    pub noise_free: bool,

    pub events_duration_s: f64,
    pub singles_background_s_per_s: f64,
    pub singles_background_as_per_s: f64,

    pub t_s_ns: f64,
    pub t_l_ns: f64,
    pub island_threshold: f64,
    pub count_floor: f64,
    pub reference_tau0_ns: Option<f64>,
    pub t_a_ns: Option<f64>,
    pub delta_window_ns: Option<f64>,

    pub auto_window_s: f64,
    pub herald_window_s: f64,
    /// Delay at which `g_cross` enters CS; defaults to the source peak (pipeline) or the histogram maximum.
    pub gcross_tau_ns: Option<f64>,
    /// Phase RMSE mask: bins with `A^2` at least this fraction of the peak.
    pub rmse_mask: f64,

    pub threshold_phase_rmse_rad: Option<f64>,
    pub threshold_fidelity: Option<f64>,
    pub threshold_cs: Option<f64>,
    pub threshold_gc: Option<f64>,
    pub threshold_delta_rel_err: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = TomographyPlan::default();
        Self {
            scenario: Scenario::DegenerateRabi,
            envelope_csv: None,
            seed: 1,
            out_dir: PathBuf::from("out"),
            tau_min_ns: -200.0,
            tau_max_ns: 200.0,
            bin_width_ns: 1.0,
            rabi_omega_e_rad_per_s: TAU * 50e6,
            rabi_gamma_per_s: 3e7,
            rabi_phi0_rad: 0.0,
            exp_gamma_per_s: 5e7,
            omega_s0_rad_per_s: 0.0,
            delta_rad_per_s: None,
            pair_rate_per_s: 1e6,
            lambda0_rad: 0.0,
            eta: 0.1,
            measure_time_s: 1.0,
            min_counts: Some(1e5),
            background_counts_per_bin: 0.0,
            noise_free: false,
            events_duration_s: 2.0,
            singles_background_s_per_s: 1e4,
            singles_background_as_per_s: 1e4,
            t_s_ns: plan.t_s_ns,
            t_l_ns: plan.t_l_ns,
            island_threshold: plan.island_threshold,
            count_floor: plan.count_floor,
            reference_tau0_ns: None,
            t_a_ns: None,
            delta_window_ns: None,
            auto_window_s: 1e-6,
            herald_window_s: 150e-9,
            gcross_tau_ns: None,
            rmse_mask: 0.1,
            threshold_phase_rmse_rad: None,
            threshold_fidelity: None,
            threshold_cs: None,
            threshold_gc: None,
            threshold_delta_rel_err: None,
        }
    }
}

/// Threshold keys accepted by `--threshold key=value`.
pub const THRESHOLD_KEYS: [&str; 5] = ["phase_rmse_rad", "fidelity", "cs", "gc", "delta_rel_err"];

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = cfg.envelope_csv.take() {
            cfg.envelope_csv = Some(base.join(p));
        }
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn set_threshold(&mut self, spec: &str) -> Result<(), CliError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| config_err("--threshold", format!("expected key=value, got {spec:?}")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| config_err(key, format!("{:?} is not a number", value.trim())))?;
        let slot = match key {
            "phase_rmse_rad" => &mut self.threshold_phase_rmse_rad,
            "fidelity" => &mut self.threshold_fidelity,
            "cs" => &mut self.threshold_cs,
            "gc" => &mut self.threshold_gc,
            "delta_rel_err" => &mut self.threshold_delta_rel_err,
            _ => {
                return Err(config_err(
                    "--threshold",
                    format!("unknown key {key:?}; expected one of {}", THRESHOLD_KEYS.join(", ")),
                ))
            }
        };
        *slot = Some(value);
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta_rad_per_s.unwrap_or(match self.scenario {
            Scenario::DegenerateRabi | Scenario::Custom => 0.0,
            Scenario::NondegenerateRabi | Scenario::Exponential => TAU * 43e6,
        })
    }

    /// Field-level checks; the custom envelope file must exist.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("bin_width_ns", self.bin_width_ns),
            ("pair_rate_per_s", self.pair_rate_per_s),
            ("measure_time_s", self.measure_time_s),
            ("events_duration_s", self.events_duration_s),
            ("auto_window_s", self.auto_window_s),
            ("herald_window_s", self.herald_window_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(name, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("background_counts_per_bin", self.background_counts_per_bin),
            ("singles_background_s_per_s", self.singles_background_s_per_s),
            ("singles_background_as_per_s", self.singles_background_as_per_s),
            ("count_floor", self.count_floor),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(name, format!("must be >= 0, got {v}")));
            }
        }
        if let Some(n) = self.min_counts {
            if !(n > 0.0 && n.is_finite()) {
                return Err(config_err("min_counts", format!("must be positive, got {n}")));
            }
        }
        if !(self.rmse_mask > 0.0 && self.rmse_mask < 1.0) {
            return Err(config_err("rmse_mask", format!("must lie in (0, 1), got {}", self.rmse_mask)));
        }
        if !self.delta().is_finite() {
            return Err(config_err("delta_rad_per_s", "must be finite"));
        }
        match (self.scenario, &self.envelope_csv) {
            (Scenario::Custom, None) => {
                return Err(config_err("envelope_csv", "required by scenario = \"custom\""));
            }
            (Scenario::Custom, Some(p)) if !p.is_file() => {
                return Err(config_err("envelope_csv", format!("{} does not exist", p.display())));
            }
            (Scenario::Custom, Some(_)) | (_, None) => {}
            (_, Some(_)) => {
                return Err(config_err("envelope_csv", "only used by scenario = \"custom\""));
            }
        }
        self.acquisition(1.0)?;
        self.source()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        make_time_grid(self.tau_min_ns, self.tau_max_ns, self.bin_width_ns)
            .map_err(|e| config_err("tau_min_ns/tau_max_ns/bin_width_ns", e))
    }

    /// Ground-truth envelope of the configured scenario.
    pub fn envelope(&self) -> Result<ComplexEnvelope, CliError> {
        match self.scenario {
            Scenario::DegenerateRabi | Scenario::NondegenerateRabi => {
                let p = RabiParams::new(self.rabi_omega_e_rad_per_s, self.rabi_gamma_per_s, self.rabi_phi0_rad)
                    .map_err(|e| config_err("rabi_*", e))?;
                ComplexEnvelope::damped_rabi(p, self.grid()?).map_err(|e| config_err("rabi_*", e))
            }
            Scenario::Exponential => ComplexEnvelope::exponential(self.exp_gamma_per_s, self.grid()?)
                .map_err(|e| config_err("exp_gamma_per_s", e)),
            Scenario::Custom => {
                let path = self
                    .envelope_csv
                    .as_deref()
                    .ok_or_else(|| config_err("envelope_csv", "required by scenario = \"custom\""))?;
                let file = std::fs::File::open(path)
                    .map_err(|e| config_err("envelope_csv", format!("{}: {e}", path.display())))?;
                biphoton::formats::read_envelope_csv(std::io::BufReader::new(file))
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn source(&self) -> Result<SourceSpec, CliError> {
        SourceSpec::with_delta(self.omega_s0_rad_per_s, self.delta(), self.pair_rate_per_s)
            .map_err(|e| config_err("omega_s0_rad_per_s/delta_rad_per_s/pair_rate_per_s", e))
    }

    pub fn acquisition(&self, bin_width_ns: f64) -> Result<AcquisitionConfig, CliError> {
        AcquisitionConfig::new(
            self.eta,
            bin_width_ns * NS,
            self.measure_time_s,
            self.background_counts_per_bin,
            self.seed,
        )
        .map_err(|e| config_err("eta/measure_time_s/background_counts_per_bin", e))
    }

    pub fn plan(&self) -> TomographyPlan {
        TomographyPlan {
            t_s_ns: self.t_s_ns,
            t_l_ns: self.t_l_ns,
            island_threshold: self.island_threshold,
            count_floor: self.count_floor,
            reference_tau0_ns: self.reference_tau0_ns,
            t_a_ns: self.t_a_ns,
            delta_window_ns: self.delta_window_ns,
            background: Some(self.background_counts_per_bin),
        }
    }
}
