#![no_main]

use biphoton::formats::{read_envelope_csv, write_envelope_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(env) = read_envelope_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_envelope_csv(&env, &mut buf).unwrap();
    let again = read_envelope_csv(buf.as_slice()).unwrap();
    assert_eq!(env.grid().n_bins(), again.grid().n_bins());
});
