#![no_main]

use biphoton_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mut cfg) = RunConfig::parse(text) else {
        return;
    };
    let _ = cfg.set_threshold("phase_rmse_rad=0.1");
    if cfg.validate().is_ok() {
        let _ = cfg.plan();
        let _ = cfg.source();
    }
});
