//! Fuzzes the TOML config parser: arbitrary bytes must parse into a valid
//! config or return an error, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use manoma::config::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = SimConfig::from_toml(text) {
        // a config that parses and validates must convert cleanly
        let _ = cfg.scenario_params();
        let _ = cfg.bench_params();
    }
});
