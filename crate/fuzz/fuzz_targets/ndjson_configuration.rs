#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = zrp::io::ndjson::parse_configuration_line(s) {
            c.verify().expect("parsed configurations are consistent");
        }
    }
});
