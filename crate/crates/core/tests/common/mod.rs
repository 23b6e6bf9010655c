#![allow(dead_code)]

use std::f64::consts::TAU;

use biphoton::interferometer::source_coincidence;
use biphoton::tomography::reconstruct;
use biphoton::waveform::make_time_grid;
use biphoton::{
    AcquisitionConfig, CoincidenceHistogram, ComplexEnvelope, Interferometer, RabiParams, ReconstructionResult,
    SixPack, SourceSpec, TimeGrid, TomographyPlan,
};

pub const T_S: f64 = 1.0;
pub const T_L: f64 = 5.8;
pub const DELTA_43: f64 = TAU * 43e6;

pub struct Scenario {
    pub name: &'static str,
    pub env: ComplexEnvelope,
    pub source: SourceSpec,
    pub lambda0: f64,
    pub acq: AcquisitionConfig,
}

pub fn grid() -> TimeGrid {
    make_time_grid(-200.0, 200.0, 1.0).unwrap()
}

fn acq() -> AcquisitionConfig {
    AcquisitionConfig::new(0.1, 1e-9, 1.0, 0.0, 7).unwrap()
}

pub fn rabi_envelope() -> ComplexEnvelope {
    ComplexEnvelope::damped_rabi(RabiParams::new(TAU * 50e6, 3e7, 0.0).unwrap(), grid()).unwrap()
}

pub fn degenerate_rabi() -> Scenario {
    Scenario {
        name: "degenerate_rabi",
        env: rabi_envelope(),
        source: SourceSpec::with_delta(0.0, 0.0, 1e6).unwrap(),
        lambda0: 0.0,
        acq: acq(),
    }
}

pub fn nondegenerate_rabi() -> Scenario {
    Scenario {
        name: "nondegenerate_rabi",
        source: SourceSpec::with_delta(0.0, DELTA_43, 1e6).unwrap(),
        ..degenerate_rabi()
    }
}

pub fn exponential() -> Scenario {
    Scenario {
        name: "exponential",
        env: ComplexEnvelope::exponential(5e7, grid()).unwrap(),
        source: SourceSpec::with_delta(0.0, DELTA_43, 1e6).unwrap(),
        lambda0: 0.0,
        acq: acq(),
    }
}

pub fn all() -> [Scenario; 3] {
    [degenerate_rabi(), nondegenerate_rabi(), exponential()]
}

pub struct Data {
    pub fine: SixPack,
    pub coarse: SixPack,
    pub c12: CoincidenceHistogram,
}

impl Scenario {
    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0 = lambda0;
        self
    }

    pub fn interferometer(&self) -> Interferometer<'_> {
        Interferometer::new(&self.env, self.source).with_residual_phase(self.lambda0)
    }

    /// Scales the integration time so that the dimmest of the thirteen histograms holds `min_total` counts.
    pub fn with_min_total(mut self, min_total: f64) -> Self {
        let dim = self.expected().min_total();
        self.acq.measure_time *= min_total / dim;
        self
    }

    pub fn expected(&self) -> Data {
        let g = grid();
        let i = self.interferometer();
        Data {
            fine: SixPack::expected(&i, T_S, &self.acq, &g).unwrap(),
            coarse: SixPack::expected(&i, T_L, &self.acq, &g).unwrap(),
            c12: source_coincidence(&self.env, &self.source, &self.acq, &g).unwrap(),
        }
    }

    pub fn sampled(&self, seed: u64) -> Data {
        let e = self.expected();
        Data {
            fine: e.fine.sampled(seed).unwrap(),
            coarse: e.coarse.sampled(seed).unwrap(),
            c12: biphoton::interferometer::sample_histogram(&e.c12, seed).unwrap(),
        }
    }
}

impl Data {
    pub fn min_total(&self) -> f64 {
        self.fine
            .histograms()
            .iter()
            .chain(self.coarse.histograms())
            .map(CoincidenceHistogram::total)
            .chain([self.c12.total()])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn reconstruct(&self, plan: &TomographyPlan) -> ReconstructionResult {
        reconstruct(&self.fine, &self.coarse, &self.c12, plan).unwrap()
    }
}

pub fn noise_free_plan() -> TomographyPlan {
    TomographyPlan {
        background: Some(0.0),
        count_floor: 0.0,
        ..TomographyPlan::default()
    }
}
