mod common;

use biphoton::angle::wrap;
use biphoton::interferometer::generate_event_streams;
use biphoton::metrics::{
    auto_g2_zero, cauchy_schwarz_estimate, compare_phase, conditional_g2, cross_g2, overlap_fidelity,
};
use biphoton::waveform::make_time_grid;
use biphoton::{AcquisitionConfig, ComplexEnvelope, EventStreams, SourceSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn acq() -> AcquisitionConfig {
    AcquisitionConfig::new(0.1, 1e-9, 1.0, 0.0, 1).unwrap()
}

fn streams(pair_rate: f64, bg: f64, duration: f64, seed: u64) -> EventStreams {
    let env = common::rabi_envelope();
    let source = SourceSpec::with_delta(0.0, 0.0, pair_rate).unwrap();
    generate_event_streams(&env, &source, &acq(), bg, bg, duration, seed).unwrap()
}

#[test]
fn independent_streams_are_uncorrelated() {
    let ev = streams(0.0, 2e5, 5.0, 1);
    let g = make_time_grid(-100.0, 100.0, 2.0).unwrap();
    let c = cross_g2(&ev, &g).unwrap();
    let within = (0..g.n_bins()).filter(|&k| (c.g2[k] - 1.0).abs() <= 3.0 * c.stderr[k]).count();
    assert!(within as f64 >= 0.98 * g.n_bins() as f64, "{within}/{}", g.n_bins());
}

#[test]
fn pair_streams_peak_at_the_envelope_maximum() {
    let ev = streams(1e6, 1e4, 1.0, 2);
    let g = common::grid();
    let c = cross_g2(&ev, &g).unwrap();
    let truth_peak = common::rabi_envelope().peak_bin();
    assert!(c.peak_bin().abs_diff(truth_peak) <= 1);
    assert!(c.g2[c.peak_bin()] > 100.0);
}

#[test]
fn doubling_duration_halves_variance() {
    let g = make_time_grid(-100.0, 100.0, 2.0).unwrap();
    let mean_var = |d: f64| {
        let c = cross_g2(&streams(0.0, 2e5, d, 3), &g).unwrap();
        c.stderr.iter().map(|s| s * s).sum::<f64>() / g.n_bins() as f64
    };
    let ratio = mean_var(4.0) / mean_var(2.0);
    assert!((ratio - 0.5).abs() < 0.03, "{ratio}");
}

#[test]
fn poisson_stream_autocorrelation_is_one() {
    let ev = streams(0.0, 1e6, 1.0, 4);
    let g = auto_g2_zero(&ev.stokes, ev.duration, 1e-6, 9).unwrap();
    assert!((g.value - 1.0).abs() <= 3.0 * g.stderr, "{g:?}");
    assert_eq!(g, auto_g2_zero(&ev.stokes, ev.duration, 1e-6, 9).unwrap());
}

#[test]
fn merged_pair_stream_matches_mixture_oracle() {
    // merged s + as stream: accidentals r^2/4 * 2W * D across halves, plus half
    // of the pairs whose separation falls inside W: g = 1 + R_p f / (r^2 W)
    let (pair_rate, bg, duration, window) = (1e6, 1.2e6, 1.0, 100e-9);
    let ev = streams(pair_rate, bg, duration, 5);
    let mut merged: Vec<f64> = ev.stokes.iter().chain(&ev.antistokes).copied().collect();
    merged.sort_by(f64::total_cmp);
    let detected_pairs = pair_rate * acq().eta;
    let r = merged.len() as f64 / duration;
    let env = common::rabi_envelope();
    let f: f64 = env
        .grid()
        .centers()
        .zip(env.samples())
        .filter(|(tau, _)| *tau < window * 1e9)
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        * env.grid().bin_width_s();
    let want = 1.0 + detected_pairs * f / (r * r * window);
    let g = auto_g2_zero(&merged, duration, window, 6).unwrap();
    assert!(want > 1.0 && want <= 2.0);
    assert!((g.value - want).abs() <= 3.0 * g.stderr, "{} vs {want} ± {}", g.value, g.stderr);
}

#[test]
fn too_few_events_to_split() {
    assert!(auto_g2_zero(&[0.5], 1.0, 1e-6, 0).is_err());
    assert!(auto_g2_zero(&[], 1.0, 1e-6, 0).is_err());
}

#[test]
fn cs_of_independent_streams_is_classical() {
    let g = make_time_grid(-20.0, 20.0, 1.0).unwrap();
    let mut classical = 0;
    let trials = 100;
    for seed in 0..trials {
        let ev = streams(0.0, 2e5, 0.5, 1000 + seed);
        let c = cross_g2(&ev, &g).unwrap();
        let k = g.bin_of(10.0).unwrap();
        let gss = auto_g2_zero(&ev.stokes, ev.duration, 2e-6, seed).unwrap();
        let gas = auto_g2_zero(&ev.antistokes, ev.duration, 2e-6, seed).unwrap();
        let cs = cauchy_schwarz_estimate(c.at_bin(k), gss, gas).unwrap();
        classical += usize::from(cs.value <= 1.0 + 3.0 * cs.stderr);
    }
    assert!(classical >= 99, "{classical}/{trials}");
}

#[test]
fn conditional_g2_limits() {
    let coherent = streams(0.0, 1e6, 1.0, 7);
    let gc = conditional_g2(&coherent, 100e-9, 1).unwrap();
    assert!((gc.gc - 1.0).abs() <= 3.0 * gc.stderr, "{gc:?}");

    let bright = streams(1e6, 1e4, 1.0, 8);
    let gc = conditional_g2(&bright, 150e-9, 1).unwrap();
    assert!(gc.gc + 3.0 * gc.stderr < 0.5, "{gc:?}");

    let ideal = streams(1e6, 0.0, 0.2, 9);
    let gc = conditional_g2(&ideal, 150e-9, 1).unwrap();
    assert!(gc.gc < 0.05, "{gc:?}");

    assert!(conditional_g2(&EventStreams::new(vec![], vec![0.1], 1.0).unwrap(), 1e-7, 0).is_err());
}

#[test]
fn conditional_g2_falls_with_pair_rate() {
    // multi-pair events within one window become rarer as the pair rate drops
    let gc: Vec<f64> = [4e6, 2e6, 1e6]
        .iter()
        .map(|&rate| conditional_g2(&streams(rate, 0.0, 1.0, 10), 150e-9, 2).unwrap().gc)
        .collect();
    assert!(gc[0] > gc[1] && gc[1] > gc[2], "{gc:?}");
}

#[test]
fn phase_rmse_examples() {
    let env = common::rabi_envelope();
    let truth: Vec<Option<f64>> = env.samples().iter().map(|z| Some(z.arg())).collect();
    assert_eq!(compare_phase(&truth, &env, 0.1).unwrap().rmse, 0.0);

    let shifted: Vec<Option<f64>> = truth.iter().map(|p| p.map(|v| v + 1.0)).collect();
    assert!(compare_phase(&shifted, &env, 0.1).unwrap().rmse < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let fine = make_time_grid(-200.0, 200.0, 0.05).unwrap();
    let env = ComplexEnvelope::damped_rabi(biphoton::RabiParams::new(std::f64::consts::TAU * 50e6, 3e7, 0.0).unwrap(), fine).unwrap();
    let noisy: Vec<Option<f64>> = env.samples().iter().map(|z| Some(z.arg() + noise.sample(&mut rng))).collect();
    let c = compare_phase(&noisy, &env, 0.1).unwrap();
    assert!(c.masked > 300);
    assert!((c.rmse - 0.1).abs() < 0.01, "{}", c.rmse);
}

#[test]
fn fidelity_of_unflipped_lobe() {
    // psi and psi' differ by the sign of the second lobe: <psi, psi'> = 1 - 2w
    let env = common::rabi_envelope();
    let g = *env.grid();
    let node1 = 20.0;
    let node2 = 40.0;
    let flipped: Vec<Complex64> = env
        .samples()
        .iter()
        .zip(g.centers())
        .map(|(z, tau)| if tau > node1 && tau < node2 { -z } else { *z })
        .collect();
    let w = g
        .centers()
        .zip(env.samples())
        .filter(|(tau, _)| *tau > node1 && *tau < node2)
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        / env.samples().iter().map(|z| z.norm_sqr()).sum::<f64>();
    let f = overlap_fidelity(env.samples(), &flipped, None).unwrap();
    assert!((f - (1.0 - 2.0 * w).powi(2)).abs() < 1e-12);
    assert!(f < 1.0);
}

fn waveform() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((0.0..1.0f64, -3.2..3.2f64), 2..40)
        .prop_map(|v| v.into_iter().map(|(a, p)| Complex64::from_polar(a + 1e-3, p)).collect())
}

proptest! {
    #[test]
    fn fidelity_symmetric_and_phase_blind(a in waveform(), seed in any::<u64>(), ga in -4.0..4.0f64, gb in -4.0..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Complex64> = a.iter().map(|z| z * rng.random::<f64>() + Complex64::new(rng.random(), rng.random())).collect();
        let f = overlap_fidelity(&a, &b, None).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - overlap_fidelity(&b, &a, None).unwrap()).abs() < 1e-12);
        let ra: Vec<Complex64> = a.iter().map(|z| z * Complex64::from_polar(1.0, ga)).collect();
        let rb: Vec<Complex64> = b.iter().map(|z| z * Complex64::from_polar(1.0, gb)).collect();
        prop_assert!((f - overlap_fidelity(&ra, &rb, None).unwrap()).abs() < 1e-12);
        prop_assert!((overlap_fidelity(&a, &a, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_rmse_is_gauge_free(shift in -20.0..20.0f64) {
        let env = common::rabi_envelope();
        let p: Vec<Option<f64>> = env.samples().iter().map(|z| Some(wrap(z.arg() + shift))).collect();
        prop_assert!(compare_phase(&p, &env, 0.1).unwrap().rmse < 1e-9);
    }
}
