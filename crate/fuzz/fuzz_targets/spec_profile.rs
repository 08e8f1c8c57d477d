#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = zrp::io::spec::parse_profile(s) {
            assert!(p.eval(0.25) >= 0.0);
        }
    }
});
