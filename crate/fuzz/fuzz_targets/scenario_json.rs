//! Fuzzes the scenario JSON decoder: arbitrary bytes must either parse
//! into a consistent scenario or return an error, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use manoma::channel::{Apv, Scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sc) = Scenario::from_json(text) {
        // a scenario that parses must be usable
        let apv = Apv::origin(sc.n_users(), sc.region_half);
        let _ = sc.channel_matrix(&apv);
        let _ = sc.to_json();
    }
});
