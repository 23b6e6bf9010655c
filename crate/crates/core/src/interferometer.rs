//! Forward model of the two-path polarization interferometer.
//!
//! Path 1 carries H-polarized photons and path 2 V-polarized photons delayed by
//! `T`. After the 50:50 beam splitter each output passes a projector
//! `a_P = a_H cos(alpha) + a_V sin(alpha) e^{i theta}` and the reduced two-photon
//! amplitude at the detectors, with `tau = t4 - t3`, is
//!
//! ```text
//! psi34 = 1/2 cos a3 sin a4 e^{i th4} [e^{-i d (tau - T)} psi(tau - T) + psi(T - tau)]
//!       - 1/2 sin a3 cos a4 e^{i th3} [e^{i d T} psi(-tau - T) + e^{-i d tau} psi(tau + T)]
//! ```
//!
//! Global phase factors that cancel under `|.|^2` are dropped.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::waveform::{ComplexEnvelope, SourceSpec, TimeGrid};
use crate::{Error, Result, NS};

/// Named polarization projections used by the six measurement settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolarizationLabel {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl PolarizationLabel {
    pub const ALL: [PolarizationLabel; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    /// `(alpha, theta)` of the projector.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Self::H => (0.0, 0.0),
            Self::V => (FRAC_PI_2, 0.0),
            Self::D => (FRAC_PI_4, 0.0),
            Self::A => (-FRAC_PI_4, 0.0),
            Self::R => (FRAC_PI_4, FRAC_PI_2),
            Self::L => (FRAC_PI_4, -FRAC_PI_2),
        }
    }
}

impl fmt::Display for PolarizationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::H => "H",
            Self::V => "V",
            Self::D => "D",
            Self::A => "A",
            Self::R => "R",
            Self::L => "L",
        };
        f.write_str(s)
    }
}

impl FromStr for PolarizationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" => Ok(Self::H),
            "V" => Ok(Self::V),
            "D" => Ok(Self::D),
            "A" => Ok(Self::A),
            "R" => Ok(Self::R),
            "L" => Ok(Self::L),
            other => Err(Error::Param(format!("unknown polarization label {other:?}"))),
        }
    }
}

/// Polarization projector in front of one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSetting {
    pub alpha: f64,
    pub theta: f64,
    pub label: Option<PolarizationLabel>,
}

impl ProjectorSetting {
    pub fn named(label: PolarizationLabel) -> Self {
        let (alpha, theta) = label.angles();
        Self {
            alpha,
            theta,
            label: Some(label),
        }
    }

    pub fn custom(alpha: f64, theta: f64) -> Self {
        Self {
            alpha,
            theta,
            label: None,
        }
    }

    pub(crate) fn tag(&self) -> String {
        match self.label {
            Some(l) => l.to_string(),
            None => format!("{:.6}/{:.6}", self.alpha, self.theta),
        }
    }
}

/// The six `(P3, P4)` projector pairs of the measurement set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingPair {
    VH,
    HV,
    DD,
    DA,
    DR,
    DL,
}

impl SettingPair {
    pub const ALL: [SettingPair; 6] = [Self::VH, Self::HV, Self::DD, Self::DA, Self::DR, Self::DL];

    pub fn labels(self) -> (PolarizationLabel, PolarizationLabel) {
        use PolarizationLabel::*;
        match self {
            Self::VH => (V, H),
            Self::HV => (H, V),
            Self::DD => (D, D),
            Self::DA => (D, A),
            Self::DR => (D, R),
            Self::DL => (D, L),
        }
    }

    pub fn projectors(self) -> (ProjectorSetting, ProjectorSetting) {
        let (a, b) = self.labels();
        (ProjectorSetting::named(a), ProjectorSetting::named(b))
    }

    pub fn from_labels(p3: PolarizationLabel, p4: PolarizationLabel) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.labels() == (p3, p4))
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.labels();
        write!(f, "{a},{b}")
    }
}

/// Detection and integration parameters of one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Joint two-photon detection efficiency.
    pub eta: f64,
    /// Coincidence bin width (s).
    pub bin_width: f64,
    /// Total integration time (s).
    pub measure_time: f64,
    /// Accidental coincidences per bin (expected count).
    pub background_rate: f64,
    pub seed: u64,
}

impl AcquisitionConfig {
    pub fn new(eta: f64, bin_width: f64, measure_time: f64, background_rate: f64, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Param(format!("eta must lie in (0, 1], got {eta}")));
        }
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Param(format!("bin width must be positive, got {bin_width}")));
        }
        if !(measure_time > 0.0) || !measure_time.is_finite() {
            return Err(Error::Param(format!("measure time must be positive, got {measure_time}")));
        }
        if !(background_rate >= 0.0) || !background_rate.is_finite() {
            return Err(Error::Param(format!("background must be >= 0, got {background_rate}")));
        }
        Ok(Self {
            eta,
            bin_width,
            measure_time,
            background_rate,
            seed,
        })
    }

    /// Counts per unit `G2` (s^-2): `eta * dt * dt_m`.
    pub fn count_scale(&self) -> f64 {
        self.eta * self.bin_width * self.measure_time
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if (grid.bin_width_s() - self.bin_width).abs() > 1e-9 * self.bin_width {
            return Err(Error::GridMismatch(format!(
                "acquisition bin width {} s differs from grid bin width {} s",
                self.bin_width,
                grid.bin_width_s()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramKind {
    Expected,
    Sampled,
}

impl fmt::Display for HistogramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Expected => "expected",
            Self::Sampled => "sampled",
        })
    }
}

/// Coincidence counts versus `tau = t4 - t3` for one projector pair and delay.
///
/// `settings` is `None` for the source coincidence histogram recorded before
/// the beam splitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub grid: TimeGrid,
    pub delay_ns: f64,
    pub settings: Option<(ProjectorSetting, ProjectorSetting)>,
    pub values: Vec<f64>,
    pub kind: HistogramKind,
}

impl CoincidenceHistogram {
    pub fn new(
        grid: TimeGrid,
        delay_ns: f64,
        settings: Option<(ProjectorSetting, ProjectorSetting)>,
        values: Vec<f64>,
        kind: HistogramKind,
    ) -> Result<Self> {
        if values.len() != grid.n_bins() {
            return Err(Error::Length {
                expected: grid.n_bins(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Param(format!("bin {k} holds a negative or non-finite count")));
        }
        if kind == HistogramKind::Sampled {
            if let Some(k) = values.iter().position(|v| v.fract() != 0.0) {
                return Err(Error::Param(format!("sampled histogram has non-integer count at bin {k}")));
            }
        }
        Ok(Self {
            grid,
            delay_ns,
            settings,
            values,
            kind,
        })
    }

    /// The named pair, when both projectors carry labels from the measurement set.
    pub fn setting_pair(&self) -> Option<SettingPair> {
        let (a, b) = self.settings?;
        SettingPair::from_labels(a.label?, b.label?)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Checks that `T` is a finite non-negative delay with an unambiguous bin mapping.
///
/// Integer multiples of the bin width map bin centres onto bin centres. Other
/// delays map each centre into the interior of one bin, except half-integer
/// multiples, which land on bin edges and are rejected.
pub fn check_delay(grid: &TimeGrid, t_ns: f64) -> Result<()> {
    if !(t_ns >= 0.0) || !t_ns.is_finite() {
        return Err(Error::MisalignedDelay(t_ns));
    }
    let frac = (t_ns / grid.bin_width()).fract();
    if (frac - 0.5).abs() < 1e-9 {
        return Err(Error::MisalignedDelay(t_ns));
    }
    Ok(())
}

/// Source envelope seen through the interferometer.
#[derive(Debug, Clone, Copy)]
pub struct Interferometer<'a> {
    pub env: &'a ComplexEnvelope,
    pub source: SourceSpec,
    /// Extra phase on the second bracket, emulating imperfect optics.
    pub residual_phase: f64,
}

impl<'a> Interferometer<'a> {
    pub fn new(env: &'a ComplexEnvelope, source: SourceSpec) -> Self {
        Self {
            env,
            source,
            residual_phase: 0.0,
        }
    }

    pub fn with_residual_phase(mut self, lambda0: f64) -> Self {
        self.residual_phase = lambda0;
        self
    }

    /// `psi34(T, tau)` for the projector pair `(s3, s4)`; times in ns.
    pub fn amplitude(&self, s3: &ProjectorSetting, s4: &ProjectorSetting, t_ns: f64, tau: f64) -> Result<Complex64> {
        check_delay(self.env.grid(), t_ns)?;
        Ok(self.amplitude_unchecked(s3, s4, t_ns, tau))
    }

    fn amplitude_unchecked(&self, s3: &ProjectorSetting, s4: &ProjectorSetting, t: f64, tau: f64) -> Complex64 {
        let d = self.source.delta() * NS;
        let psi = |x: f64| self.env.at(x);
        let first = Complex64::from_polar(1.0, -d * (tau - t)) * psi(tau - t) + psi(t - tau);
        let second = Complex64::from_polar(1.0, d * t) * psi(-tau - t)
            + Complex64::from_polar(1.0, -d * tau) * psi(tau + t);
        let c1 = 0.5 * s3.alpha.cos() * s4.alpha.sin() * Complex64::from_polar(1.0, s4.theta);
        let c2 = 0.5
            * s3.alpha.sin()
            * s4.alpha.cos()
            * Complex64::from_polar(1.0, s3.theta + self.residual_phase);
        c1 * first - c2 * second
    }

    /// Noise-free counts `pair_rate |psi34|^2 eta dt dt_m + background` per bin.
    pub fn expected_histogram(
        &self,
        s3: &ProjectorSetting,
        s4: &ProjectorSetting,
        t_ns: f64,
        acq: &AcquisitionConfig,
        grid: &TimeGrid,
    ) -> Result<CoincidenceHistogram> {
        check_delay(self.env.grid(), t_ns)?;
        acq.check_grid(grid)?;
        if !grid.same_lattice(self.env.grid()) {
            return Err(Error::GridMismatch("histogram grid is not on the envelope lattice".into()));
        }
        let scale = self.source.pair_rate() * acq.count_scale();
        let values = grid
            .centers()
            .map(|tau| self.amplitude_unchecked(s3, s4, t_ns, tau).norm_sqr() * scale + acq.background_rate)
            .collect();
        CoincidenceHistogram::new(*grid, t_ns, Some((*s3, *s4)), values, HistogramKind::Expected)
    }

    pub fn expected_for(&self, pair: SettingPair, t_ns: f64, acq: &AcquisitionConfig, grid: &TimeGrid) -> Result<CoincidenceHistogram> {
        let (s3, s4) = pair.projectors();
        self.expected_histogram(&s3, &s4, t_ns, acq, grid)
    }
}

/// `psi34(T, tau)` with ideal optics.
pub fn joint_amplitude(
    env: &ComplexEnvelope,
    delta: f64,
    s3: &ProjectorSetting,
    s4: &ProjectorSetting,
    t_ns: f64,
    tau: f64,
) -> Result<Complex64> {
    let source = SourceSpec::with_delta(0.0, delta, 0.0)?;
    Interferometer::new(env, source).amplitude(s3, s4, t_ns, tau)
}

/// Poisson-resamples an expected histogram.
///
/// The stream is seeded from `(seed, projector labels, T)`, so the six settings
/// can be drawn in any order.
pub fn sample_histogram(expected: &CoincidenceHistogram, seed: u64) -> Result<CoincidenceHistogram> {
    if expected.kind != HistogramKind::Expected {
        return Err(Error::Param("only expected histograms can be sampled".into()));
    }
    let tag = match &expected.settings {
        Some((a, b)) => format!("{}|{}", a.tag(), b.tag()),
        None => "source".to_string(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &tag, expected.delay_ns));
    let values = expected
        .values
        .iter()
        .map(|&mean| poisson(&mut rng, mean))
        .collect();
    CoincidenceHistogram::new(
        expected.grid,
        expected.delay_ns,
        expected.settings,
        values,
        HistogramKind::Sampled,
    )
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

/// Mixes a base seed with a label and delay into an independent stream seed.
pub fn derive_seed(seed: u64, label: &str, t_ns: f64) -> u64 {
    // FNV-1a over the inputs, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(label.bytes())
        .chain(t_ns.to_bits().to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Coincidences recorded before the beam splitter: `A^2(tau) + A^2(-tau)`.
///
/// Negative `tau` collects the pairs whose anti-Stokes photon took the other
/// path, which is why the histogram is even.
pub fn source_coincidence(
    env: &ComplexEnvelope,
    source: &SourceSpec,
    acq: &AcquisitionConfig,
    grid: &TimeGrid,
) -> Result<CoincidenceHistogram> {
    acq.check_grid(grid)?;
    if !grid.is_symmetric() {
        return Err(Error::Grid("source coincidence needs a grid symmetric about 0".into()));
    }
    if !grid.same_lattice(env.grid()) {
        return Err(Error::GridMismatch("histogram grid is not on the envelope lattice".into()));
    }
    let scale = source.pair_rate() * acq.count_scale();
    let values = (0..grid.n_bins())
        .map(|k| {
            let tau = grid.center(k);
            let g2 = env.at(tau).norm_sqr() + env.at(-tau).norm_sqr();
            g2 * scale + acq.background_rate
        })
        .collect();
    CoincidenceHistogram::new(*grid, 0.0, None, values, HistogramKind::Expected)
}

/// Time-tagged Stokes and anti-Stokes detections (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct EventStreams {
    pub stokes: Vec<f64>,
    pub antistokes: Vec<f64>,
    pub duration: f64,
}

impl EventStreams {
    pub fn new(stokes: Vec<f64>, antistokes: Vec<f64>, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Param(format!("duration must be positive, got {duration}")));
        }
        for (name, tags) in [("stokes", &stokes), ("anti-stokes", &antistokes)] {
            if tags.iter().any(|t| !(*t >= 0.0 && *t <= duration)) {
                return Err(Error::Param(format!("{name} tag outside [0, {duration}] s")));
            }
            if tags.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Param(format!("{name} tags are not sorted")));
            }
        }
        Ok(Self {
            stokes,
            antistokes,
            duration,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.stokes.is_empty() && self.antistokes.is_empty()
    }
}

/// Emitted pairs before background is mixed in: `(t_stokes, t_antistokes)` in seconds.
pub fn generate_pairs(
    env: &ComplexEnvelope,
    source: &SourceSpec,
    acq: &AcquisitionConfig,
    duration: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Param(format!("duration must be positive, got {duration}")));
    }
    let rate = source.pair_rate() * acq.eta;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pairs", 0.0));
    let n = poisson(&mut rng, rate * duration) as usize;
    if n == 0 {
        return Ok(Vec::new());
    }
    let grid = env.grid();
    let mut cdf = Vec::with_capacity(grid.n_bins());
    let mut acc = 0.0;
    for z in env.samples() {
        acc += z.norm_sqr();
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::ZeroEnvelope);
    }
    let mut starts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * duration).collect();
    starts.sort_by(f64::total_cmp);
    let pairs = starts
        .into_iter()
        .filter_map(|t| {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(grid.n_bins() - 1);
            let lo = grid.center(k) - 0.5 * grid.bin_width();
            let tau = (lo + rng.random::<f64>() * grid.bin_width()) * NS;
            let t_as = t + tau;
            (t_as <= duration).then_some((t, t_as))
        })
        .collect();
    Ok(pairs)
}

/// Pair events plus independent Poisson background singles on each channel.
pub fn generate_event_streams(
    env: &ComplexEnvelope,
    source: &SourceSpec,
    acq: &AcquisitionConfig,
    singles_background_s: f64,
    singles_background_as: f64,
    duration: f64,
    seed: u64,
) -> Result<EventStreams> {
    if !(singles_background_s >= 0.0) || !(singles_background_as >= 0.0) {
        return Err(Error::Param("background singles rates must be >= 0".into()));
    }
    let pairs = generate_pairs(env, source, acq, duration, seed)?;
    let (mut stokes, mut antistokes): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "singles", 0.0));
    for (rate, tags) in [
        (singles_background_s, &mut stokes),
        (singles_background_as, &mut antistokes),
    ] {
        let n = poisson(&mut rng, rate * duration) as usize;
        tags.extend((0..n).map(|_| rng.random::<f64>() * duration));
        tags.sort_by(f64::total_cmp);
    }
    EventStreams::new(stokes, antistokes, duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{make_time_grid, RabiParams};
    use std::f64::consts::TAU;

    fn rabi() -> ComplexEnvelope {
        let g = make_time_grid(-200.0, 200.0, 1.0).unwrap();
        ComplexEnvelope::damped_rabi(RabiParams::new(TAU * 50e6, 3e7, 0.4).unwrap(), g).unwrap()
    }

    fn expo() -> ComplexEnvelope {
        let g = make_time_grid(-200.0, 200.0, 1.0).unwrap();
        ComplexEnvelope::exponential(5e7, g).unwrap()
    }

    fn acq(grid: &TimeGrid) -> AcquisitionConfig {
        AcquisitionConfig::new(0.1, grid.bin_width_s(), 100.0, 0.0, 1).unwrap()
    }

    #[test]
    fn table_angles() {
        use PolarizationLabel::*;
        assert_eq!(H.angles(), (0.0, 0.0));
        assert_eq!(V.angles(), (FRAC_PI_2, 0.0));
        assert_eq!(D.angles(), (FRAC_PI_4, 0.0));
        assert_eq!(A.angles(), (-FRAC_PI_4, 0.0));
        assert_eq!(R.angles(), (FRAC_PI_4, FRAC_PI_2));
        assert_eq!(L.angles(), (FRAC_PI_4, -FRAC_PI_2));
        for l in PolarizationLabel::ALL {
            assert_eq!(l.to_string().parse::<PolarizationLabel>().unwrap(), l);
        }
        assert_eq!(SettingPair::DR.to_string(), "D,R");
    }

    #[test]
    fn single_bracket_settings() {
        let env = rabi();
        let d = TAU * 43e6;
        let t = 3.0;
        let (h, v) = (
            ProjectorSetting::named(PolarizationLabel::H),
            ProjectorSetting::named(PolarizationLabel::V),
        );
        for &tau in &[-12.5, -2.5, 0.5, 4.5, 17.5] {
            let dn = d * NS;
            let first = Complex64::from_polar(1.0, -dn * (tau - t)) * env.at(tau - t) + env.at(t - tau);
            let second = Complex64::from_polar(1.0, dn * t) * env.at(-tau - t)
                + Complex64::from_polar(1.0, -dn * tau) * env.at(tau + t);
            let hv = joint_amplitude(&env, d, &h, &v, t, tau).unwrap();
            let vh = joint_amplitude(&env, d, &v, &h, t, tau).unwrap();
            assert!((hv - 0.5 * first).norm() <= 1e-12 * (1.0 + first.norm()));
            assert!((vh + 0.5 * second).norm() <= 1e-12 * (1.0 + second.norm()));
        }
    }

    #[test]
    fn diagonal_hand_expansion() {
        // delta = 0, T = 0, P3 = P4 = D, tau = +5 ns:
        // c1 = c2 = 1/4, so psi34 = 1/4 [psi(5) + psi(-5)] - 1/4 [psi(-5) + psi(5)] = 0
        let env = expo();
        let d = ProjectorSetting::named(PolarizationLabel::D);
        let z = joint_amplitude(&env, 0.0, &d, &d, 0.0, 5.0).unwrap();
        let p5 = env.at(5.0);
        let hand = 0.25 * (p5 + Complex64::new(0.0, 0.0)) - 0.25 * (Complex64::new(0.0, 0.0) + p5);
        assert!((z - hand).norm() < 1e-12 * p5.norm());
        assert!(z.norm() < 1e-12 * p5.norm());
        // with T = 2 the two brackets no longer cancel: 1/4 psi(3) - 1/4 psi(7)
        let z = joint_amplitude(&env, 0.0, &d, &d, 2.0, 5.0).unwrap();
        let hand = 0.25 * env.at(3.0) - 0.25 * env.at(7.0);
        assert!((z - hand).norm() < 1e-12 * env.at(3.0).norm());
    }

    #[test]
    fn delay_checks() {
        let env = expo();
        let h = ProjectorSetting::named(PolarizationLabel::H);
        assert!(joint_amplitude(&env, 0.0, &h, &h, -1.0, 0.5).is_err());
        assert!(joint_amplitude(&env, 0.0, &h, &h, 2.5, 0.5).is_err());
        assert!(joint_amplitude(&env, 0.0, &h, &h, 5.8, 0.5).is_ok());
        assert!(joint_amplitude(&env, 0.0, &h, &h, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn count_law_scale() {
        // G2 = 1e12 s^-2, eta = 0.1, dt = 1 ns, dt_m = 100 s
        let a = AcquisitionConfig::new(0.1, 1e-9, 100.0, 0.0, 0).unwrap();
        assert!((1e12 * a.count_scale() - 1e4).abs() < 1e-6);
        assert!(AcquisitionConfig::new(0.0, 1e-9, 1.0, 0.0, 0).is_err());
        assert!(AcquisitionConfig::new(1.1, 1e-9, 1.0, 0.0, 0).is_err());
        assert!(AcquisitionConfig::new(0.5, 1e-9, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn hh_is_dark() {
        let env = rabi();
        let g = *env.grid();
        let src = SourceSpec::with_delta(0.0, 0.0, 1e5).unwrap();
        let i = Interferometer::new(&env, src);
        let h = ProjectorSetting::named(PolarizationLabel::H);
        let hist = i.expected_histogram(&h, &h, 1.0, &acq(&g), &g).unwrap();
        assert!(hist.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expected_matches_per_bin_recomputation() {
        let env = rabi();
        let g = *env.grid();
        let src = SourceSpec::with_delta(0.0, TAU * 43e6, 2e4).unwrap();
        let a = acq(&g);
        let i = Interferometer::new(&env, src);
        for pair in SettingPair::ALL {
            let (s3, s4) = pair.projectors();
            let hist = i.expected_histogram(&s3, &s4, 5.8, &a, &g).unwrap();
            for (k, &v) in hist.values.iter().enumerate() {
                let amp = joint_amplitude(&env, src.delta(), &s3, &s4, 5.8, g.center(k)).unwrap();
                let oracle = amp.norm_sqr() * 2e4 * 0.1 * 1e-9 * 100.0;
                assert!((v - oracle).abs() <= 1e-12 * oracle.max(f64::MIN_POSITIVE), "{pair} bin {k}");
            }
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let env = rabi();
        let src = SourceSpec::with_delta(0.0, 0.0, 1e4).unwrap();
        let i = Interferometer::new(&env, src);
        let g2 = make_time_grid(-100.0, 100.0, 2.0).unwrap();
        let a = AcquisitionConfig::new(0.1, 2e-9, 1.0, 0.0, 0).unwrap();
        assert!(i.expected_for(SettingPair::DD, 1.0, &a, &g2).is_err());
        let g = *env.grid();
        assert!(i.expected_for(SettingPair::DD, 1.0, &a, &g).is_err());
    }

    #[test]
    fn poisson_sampling_contract() {
        let g = make_time_grid(-500.0, 500.0, 1.0).unwrap();
        let flat = CoincidenceHistogram::new(g, 0.0, None, vec![1e4; 1000], HistogramKind::Expected).unwrap();
        let s1 = sample_histogram(&flat, 9).unwrap();
        let s2 = sample_histogram(&flat, 9).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.kind, HistogramKind::Sampled);
        let mean = s1.total() / 1000.0;
        // sigma of the mean = 100 / sqrt(1000)
        assert!((mean - 1e4).abs() < 3.0 * 100.0 / 1000f64.sqrt(), "{mean}");
        let zeros = CoincidenceHistogram::new(g, 0.0, None, vec![0.0; 1000], HistogramKind::Expected).unwrap();
        assert!(sample_histogram(&zeros, 1).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(sample_histogram(&s1, 1).is_err());
    }

    #[test]
    fn source_coincidence_even_and_causal() {
        let env = rabi();
        let g = *env.grid();
        let src = SourceSpec::with_delta(0.0, 0.0, 1e4).unwrap();
        let a = acq(&g);
        let c12 = source_coincidence(&env, &src, &a, &g).unwrap();
        let scale = 1e4 * a.count_scale();
        for k in 0..g.n_bins() {
            assert_eq!(c12.values[k], c12.values[g.mirror(k).unwrap()]);
            if g.center(k) > 0.0 {
                assert_eq!(c12.values[k], env.samples()[k].norm_sqr() * scale);
            }
        }
        let peak = crate::waveform::argmax(c12.values.iter().copied().skip(200)) + 200;
        assert_eq!(peak, env.peak_bin());
    }

    #[test]
    fn event_stream_basics() {
        let env = rabi();
        let g = *env.grid();
        let a = acq(&g);
        let none = SourceSpec::with_delta(0.0, 0.0, 0.0).unwrap();
        let s = generate_event_streams(&env, &none, &a, 0.0, 0.0, 1.0, 3).unwrap();
        assert!(s.is_empty());
        let src = SourceSpec::with_delta(0.0, 0.0, 1e5).unwrap();
        let pairs = generate_pairs(&env, &src, &a, 0.5, 3).unwrap();
        assert!(pairs.len() > 4000);
        assert!(pairs.iter().all(|(s, a)| a > s));
        let s1 = generate_event_streams(&env, &src, &a, 1e3, 2e3, 0.5, 3).unwrap();
        let s2 = generate_event_streams(&env, &src, &a, 1e3, 2e3, 0.5, 3).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.stokes.windows(2).all(|w| w[0] <= w[1]));
        assert!(s1.antistokes.iter().all(|&t| (0.0..=0.5).contains(&t)));
    }

    #[test]
    fn pair_delays_follow_envelope_density() {
        let env = rabi();
        let g = *env.grid();
        let a = AcquisitionConfig::new(1.0, g.bin_width_s(), 1.0, 0.0, 0).unwrap();
        let src = SourceSpec::with_delta(0.0, 0.0, 1e5).unwrap();
        let pairs = generate_pairs(&env, &src, &a, 1.0, 11).unwrap();
        let n = pairs.len() as f64;
        let mut hist = vec![0.0; g.n_bins()];
        for (s, t) in &pairs {
            hist[g.bin_of((t - s) / NS).unwrap()] += 1.0;
        }
        let w = g.bin_width_s();
        let (mut chi2, mut dof) = (0.0, 0usize);
        for k in 0..g.n_bins() {
            let e = n * env.samples()[k].norm_sqr() * w;
            if e >= 5.0 {
                chi2 += (hist[k] - e).powi(2) / e;
                dof += 1;
            } else {
                assert!(e > 0.0 || hist[k] == 0.0, "event in forbidden bin {k}");
            }
        }
        // mean dof, sd sqrt(2 dof); 5 sigma bound
        let bound = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
        assert!(chi2 < bound, "chi2 {chi2} dof {dof}");
    }
}
