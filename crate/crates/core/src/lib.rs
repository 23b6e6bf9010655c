//! Temporal quantum-state tomography of narrowband biphotons.
//!
//! The crate has two halves. The forward half ([`waveform`], [`interferometer`])
//! models a causal two-photon temporal waveform `psi(tau) = A(tau) exp(i phi(tau))`,
//! the two-path polarization interferometer that follows the source, and the
//! coincidence histograms recorded for each pair of polarization projectors.
//! The inverse half ([`tomography`]) takes the six projector histograms at a
//! short and a long delay and recovers the amplitude, the phase, the photon
//! frequency difference and the residual optical phase. [`metrics`] holds the
//! nonclassicality estimators (cross/auto correlation, Cauchy-Schwarz ratio,
//! heralded autocorrelation) and reconstruction quality scores.
//!
//! Times on a [`TimeGrid`] are in nanoseconds. Angular frequencies are in rad/s
//! and event tags are in seconds.

pub mod angle;
pub mod error;
pub mod formats;
pub mod interferometer;
pub mod metrics;
pub mod tomography;
pub mod waveform;

pub use error::{Error, Result};
pub use interferometer::{
    AcquisitionConfig, CoincidenceHistogram, EventStreams, HistogramKind, Interferometer,
    PolarizationLabel, ProjectorSetting, SettingPair,
};
pub use tomography::{ReconstructionResult, SixPack, TomographyPlan};
pub use waveform::{ComplexEnvelope, RabiParams, SourceSpec, TimeGrid};

/// Nanoseconds to seconds.
pub const NS: f64 = 1e-9;
