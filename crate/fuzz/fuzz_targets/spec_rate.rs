#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = zrp::io::spec::parse_rate_inline(s) {
            let _ = zrp::io::spec::parse_rate_inline(&g.label()).expect("labels parse back");
        }
    }
});
