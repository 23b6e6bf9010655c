#![no_main]

use biphoton::formats::{read_histogram_csv, write_histogram_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(hist) = read_histogram_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_histogram_csv(&hist, &mut buf).unwrap();
    let again = read_histogram_csv(buf.as_slice()).unwrap();
    assert_eq!(hist.values, again.values);
    assert_eq!(hist.kind, again.kind);
    assert_eq!(hist.delay_ns, again.delay_ns);
});
