//! Time lattice, complex biphoton envelope and parametric waveform families.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, NS};

/// Uniform lattice of `n_bins` bins of width `bin_width` (ns) starting at `tau_min` (ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau_min: f64,
    bin_width: f64,
    n_bins: usize,
}

impl TimeGrid {
    pub fn new(tau_min: f64, bin_width: f64, n_bins: usize) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Grid(format!("bin width must be positive, got {bin_width}")));
        }
        if !tau_min.is_finite() {
            return Err(Error::Grid("tau_min must be finite".into()));
        }
        if n_bins < 2 {
            return Err(Error::Grid(format!("need at least 2 bins, got {n_bins}")));
        }
        Ok(Self {
            tau_min,
            bin_width,
            n_bins,
        })
    }

    /// Grid spanning `[tau_min, tau_max)`; the span must be a whole number of bins.
    pub fn from_range(tau_min: f64, tau_max: f64, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Grid(format!("bin width must be positive, got {bin_width}")));
        }
        if !(tau_max > tau_min) || !tau_max.is_finite() || !tau_min.is_finite() {
            return Err(Error::Grid(format!("empty range [{tau_min}, {tau_max})")));
        }
        let ratio = (tau_max - tau_min) / bin_width;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * n.max(1.0) || n > u32::MAX as f64 {
            return Err(Error::Grid(format!(
                "span {} ns is not a whole number of {bin_width} ns bins",
                tau_max - tau_min
            )));
        }
        Self::new(tau_min, bin_width, n as usize)
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_min + self.n_bins as f64 * self.bin_width
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width * NS
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn center(&self, k: usize) -> f64 {
        self.tau_min + (k as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(move |k| self.center(k))
    }

    /// Index of the bin containing `tau`; bins are closed on the left.
    pub fn bin_of(&self, tau: f64) -> Option<usize> {
        let x = ((tau - self.tau_min) / self.bin_width).floor();
        if x >= 0.0 && x < self.n_bins as f64 {
            Some(x as usize)
        } else {
            None
        }
    }

    /// True when the bin edges are placed symmetrically about `tau = 0`.
    pub fn is_symmetric(&self) -> bool {
        (self.tau_min + self.tau_max()).abs() <= 1e-9 * self.bin_width
    }

    /// The bin at `-tau_k`.
    pub fn mirror(&self, k: usize) -> Option<usize> {
        if self.is_symmetric() {
            (k < self.n_bins).then(|| self.n_bins - 1 - k)
        } else {
            self.bin_of(-self.center(k))
        }
    }

    /// Same lattice: equal bin width and bin edges coinciding.
    pub fn same_lattice(&self, other: &TimeGrid) -> bool {
        let tol = 1e-9 * self.bin_width;
        (self.bin_width - other.bin_width).abs() <= tol && {
            let shift = (self.tau_min - other.tau_min) / self.bin_width;
            (shift - shift.round()).abs() <= 1e-9
        }
    }
}

/// `make_time_grid` from the operation list: a grid over `[tau_min, tau_max)`.
pub fn make_time_grid(tau_min: f64, tau_max: f64, bin_width: f64) -> Result<TimeGrid> {
    TimeGrid::from_range(tau_min, tau_max, bin_width)
}

/// Central frequencies and brightness of the pair source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    omega_s0: f64,
    omega_as0: f64,
    delta: f64,
    pair_rate: f64,
}

impl SourceSpec {
    pub fn new(omega_s0: f64, omega_as0: f64, pair_rate: f64) -> Result<Self> {
        Self::with_delta(omega_s0, omega_as0 - omega_s0, pair_rate)
    }

    /// Source specified by the Stokes frequency and the frequency difference.
    pub fn with_delta(omega_s0: f64, delta: f64, pair_rate: f64) -> Result<Self> {
        if !omega_s0.is_finite() || !delta.is_finite() {
            return Err(Error::Param("source frequencies must be finite".into()));
        }
        if !(pair_rate >= 0.0) || !pair_rate.is_finite() {
            return Err(Error::Param(format!("pair rate must be >= 0, got {pair_rate}")));
        }
        Ok(Self {
            omega_s0,
            omega_as0: omega_s0 + delta,
            delta,
            pair_rate,
        })
    }

    pub fn omega_s0(&self) -> f64 {
        self.omega_s0
    }

    pub fn omega_as0(&self) -> f64 {
        self.omega_as0
    }

    /// `omega_as0 - omega_s0` in rad/s.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Pairs per second.
    pub fn pair_rate(&self) -> f64 {
        self.pair_rate
    }
}

/// Phenomenological damped Rabi oscillation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiParams {
    /// Effective Rabi angular frequency (rad/s).
    pub omega_e: f64,
    /// Amplitude decay rate (1/s).
    pub gamma: f64,
    /// Phase of the first lobe (rad).
    pub phi0: f64,
}

impl RabiParams {
    pub fn new(omega_e: f64, gamma: f64, phi0: f64) -> Result<Self> {
        if !(omega_e > 0.0) || !(gamma > 0.0) || !omega_e.is_finite() || !gamma.is_finite() {
            return Err(Error::Param(format!(
                "Rabi parameters need omega_e > 0 and gamma > 0, got ({omega_e}, {gamma})"
            )));
        }
        if !phi0.is_finite() {
            return Err(Error::Param("phi0 must be finite".into()));
        }
        Ok(Self {
            omega_e,
            gamma,
            phi0,
        })
    }

    /// Times of the amplitude nodes, `2 pi n / omega_e`, in ns.
    pub fn node_ns(&self, n: u32) -> f64 {
        TAU * n as f64 / self.omega_e / NS
    }
}

/// Sampled relative waveform `psi(tau)` on a [`TimeGrid`].
///
/// Samples carry units of s^-1/2 so that `sum |psi|^2 * bin_width_s == 1` for
/// the parametric families; brightness lives in [`SourceSpec::pair_rate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    grid: TimeGrid,
    samples: Vec<Complex64>,
}

impl ComplexEnvelope {
    /// Wraps user-supplied samples after checking length and causality.
    pub fn sampled(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_bins() {
            return Err(Error::Length {
                expected: grid.n_bins(),
                got: values.len(),
            });
        }
        for (k, v) in values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Param(format!("non-finite sample at bin {k}")));
            }
            let tau = grid.center(k);
            if tau < 0.0 && v.norm_sqr() > 0.0 {
                return Err(Error::Causality { bin: k, tau_ns: tau });
            }
        }
        Ok(Self {
            grid,
            samples: values,
        })
    }

    /// `A = N e^{-gamma tau} |sin(omega_e tau / 2)|` with a pi phase step at every node.
    pub fn damped_rabi(params: RabiParams, grid: TimeGrid) -> Result<Self> {
        Self::from_shape(grid, |tau_s| {
            let amp = (-params.gamma * tau_s).exp() * (0.5 * params.omega_e * tau_s).sin().abs();
            let phase = params.phi0 + PI * (params.omega_e * tau_s / TAU).floor();
            (amp, phase)
        })
    }

    /// `A = N e^{-gamma tau / 2}`, flat phase.
    pub fn exponential(gamma: f64, grid: TimeGrid) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Param(format!("gamma must be positive, got {gamma}")));
        }
        Self::from_shape(grid, |tau_s| ((-0.5 * gamma * tau_s).exp(), 0.0))
    }

    fn from_shape(grid: TimeGrid, shape: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let polar: Vec<(f64, f64)> = grid
            .centers()
            .map(|tau| if tau > 0.0 { shape(tau * NS) } else { (0.0, 0.0) })
            .collect();
        let energy: f64 = polar.iter().map(|(a, _)| a * a).sum::<f64>() * grid.bin_width_s();
        let norm = energy.sqrt().recip();
        if !(energy > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroEnvelope);
        }
        let samples = polar
            .into_iter()
            .map(|(a, phi)| Complex64::from_polar(norm * a, phi))
            .collect();
        Ok(Self { grid, samples })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Sample of the bin containing `tau` (ns); zero outside the grid.
    pub fn at(&self, tau: f64) -> Complex64 {
        self.grid
            .bin_of(tau)
            .map_or(Complex64::new(0.0, 0.0), |k| self.samples[k])
    }

    pub fn amplitude(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    /// Wrapped phase per bin (zero where the amplitude vanishes).
    pub fn phase(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.arg()).collect()
    }

    /// `sum |psi|^2 dtau` with dtau in seconds.
    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.bin_width_s()
    }

    /// Index of the largest `|psi|^2`.
    pub fn peak_bin(&self) -> usize {
        argmax(self.samples.iter().map(|z| z.norm_sqr()))
    }

    /// Same envelope with a constant phase added to every sample.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z * rot).collect(),
        }
    }
}

/// `envelope_at` from the operation list.
pub fn envelope_at(env: &ComplexEnvelope, tau: f64) -> Complex64 {
    env.at(tau)
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}
