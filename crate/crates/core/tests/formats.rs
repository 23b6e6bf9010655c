use biphoton::formats::{
    read_envelope_csv, read_events_csv, read_histogram_csv, write_envelope_csv, write_events_csv,
    write_histogram_csv,
};
use biphoton::waveform::make_time_grid;
use biphoton::{
    CoincidenceHistogram, ComplexEnvelope, Error, EventStreams, HistogramKind, ProjectorSetting, RabiParams,
    SettingPair,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn parse_line(err: Error) -> usize {
    match err {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn envelope_round_trip_keeps_twelve_digits() {
    let g = make_time_grid(-50.0, 50.0, 0.5).unwrap();
    let env = ComplexEnvelope::damped_rabi(RabiParams::new(3e8, 3e7, 0.7).unwrap(), g).unwrap();
    let mut buf = Vec::new();
    write_envelope_csv(&env, &mut buf).unwrap();
    let back = read_envelope_csv(buf.as_slice()).unwrap();
    assert_eq!(back.grid(), env.grid());
    for (a, b) in env.samples().iter().zip(back.samples()) {
        assert!((a - b).norm() <= 1e-11 * a.norm().max(1.0));
    }
}

#[test]
fn envelope_errors_carry_line_numbers() {
    let acausal = "tau_ns,re,im\n-0.5,1,0\n0.5,1,0\n";
    assert_eq!(parse_line(read_envelope_csv(acausal.as_bytes()).unwrap_err()), 2);
    let uneven = "tau_ns,re,im\n0.5,1,0\n1.5,1,0\n2.7,1,0\n";
    assert_eq!(parse_line(read_envelope_csv(uneven.as_bytes()).unwrap_err()), 4);
    let short = "tau_ns,re,im\n0.5,1,0\n1.5,1\n";
    assert_eq!(parse_line(read_envelope_csv(short.as_bytes()).unwrap_err()), 3);
    let header = "tau,re,im\n0.5,1,0\n";
    assert_eq!(parse_line(read_envelope_csv(header.as_bytes()).unwrap_err()), 1);
    let nan = "tau_ns,re,im\n0.5,NaN,0\n1.5,1,0\n";
    assert_eq!(parse_line(read_envelope_csv(nan.as_bytes()).unwrap_err()), 2);
}

#[test]
fn histogram_metadata_rules() {
    let body = "tau_ns,counts\n-0.5,1\n0.5,2\n";
    assert!(read_histogram_csv(body.as_bytes()).is_err());
    let c12 = format!("# T_ns=0\n{body}");
    let h = read_histogram_csv(c12.as_bytes()).unwrap();
    assert!(h.settings.is_none());
    assert_eq!(h.kind, HistogramKind::Sampled);
    let half = format!("# T_ns=1\n# setting3=D\n{body}");
    assert!(read_histogram_csv(half.as_bytes()).is_err());
    let frac = "# T_ns=1\ntau_ns,counts\n-0.5,1.5\n0.5,2\n";
    assert_eq!(parse_line(read_histogram_csv(frac.as_bytes()).unwrap_err()), 3);
    let custom = format!("# T_ns=1\n# setting3=0.3/0.1\n# setting4=H\n# kind=expected\n{body}");
    let h = read_histogram_csv(custom.as_bytes()).unwrap();
    let (a, b) = h.settings.unwrap();
    assert_eq!((a.alpha, a.theta, a.label), (0.3, 0.1, None));
    assert_eq!(b, ProjectorSetting::named(biphoton::PolarizationLabel::H));
}

#[test]
fn events_errors() {
    assert_eq!(parse_line(read_events_csv("channel,time_s\ns,1e-6\nx,2e-6\n".as_bytes()).unwrap_err()), 3);
    assert_eq!(parse_line(read_events_csv("# duration_s=1e-6\nchannel,time_s\ns,2e-6\n".as_bytes()).unwrap_err()), 1);
    assert!(read_events_csv("channel,time_s\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn histogram_round_trip(values in prop::collection::vec(0u32..1_000_000, 2..64), t in 0u32..20, pair in 0usize..6) {
        let n = values.len();
        let g = biphoton::TimeGrid::new(-(n as f64) / 2.0, 1.0, n).unwrap();
        let (a, b) = SettingPair::ALL[pair].projectors();
        let h = CoincidenceHistogram::new(g, f64::from(t) * 0.1, Some((a, b)),
            values.into_iter().map(f64::from).collect(), HistogramKind::Sampled).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        prop_assert_eq!(read_histogram_csv(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn expected_histogram_round_trip_is_exact(values in prop::collection::vec(0.0..1e9f64, 2..32)) {
        let g = biphoton::TimeGrid::new(0.0, 0.25, values.len()).unwrap();
        let h = CoincidenceHistogram::new(g, 5.8, None, values, HistogramKind::Expected).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        prop_assert_eq!(read_histogram_csv(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn events_round_trip(s in prop::collection::vec(0.0..1.0f64, 0..50), a in prop::collection::vec(0.0..1.0f64, 1..50)) {
        let mut s = s;
        let mut a = a;
        s.sort_by(f64::total_cmp);
        a.sort_by(f64::total_cmp);
        let ev = EventStreams::new(s, a, 1.0).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        prop_assert_eq!(read_events_csv(buf.as_slice()).unwrap(), ev);
    }

    #[test]
    fn envelope_reader_never_panics(text in "[-0-9.,e\\n# a-z_=]{0,200}") {
        let _ = read_envelope_csv(text.as_bytes());
        let _ = read_histogram_csv(text.as_bytes());
        let _ = read_events_csv(text.as_bytes());
    }
}

#[test]
fn sampled_envelope_from_file_drives_the_forward_model() {
    let text = "tau_ns,re,im\n-1.5,0,0\n-0.5,0,0\n0.5,1,0\n1.5,0,1\n";
    let env = read_envelope_csv(text.as_bytes()).unwrap();
    assert_eq!(env.at(1.0), Complex64::new(0.0, 1.0));
}
