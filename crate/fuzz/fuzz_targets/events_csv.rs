#![no_main]

use biphoton::formats::{read_events_csv, write_events_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(streams) = read_events_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_events_csv(&streams, &mut buf).unwrap();
    assert_eq!(read_events_csv(buf.as_slice()).unwrap(), streams);
});
