//! Fuzzes the cone-program text decoder: arbitrary bytes must round-trip
//! through parse/dump or return an error, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use manoma::socp::SocpProblem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = SocpProblem::parse(text) {
        let dumped = p.dump();
        let back = SocpProblem::parse(&dumped).expect("dump of a parsed problem must re-parse");
        assert_eq!(back.nvars, p.nvars);
        assert_eq!(back.cones.len(), p.cones.len());
    }
});
