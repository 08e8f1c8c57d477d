#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = zrp::hydro::DensityField::read_csv(s.as_bytes(), 1.0);
    }
});
