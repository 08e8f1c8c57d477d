#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(k) = zrp::io::spec::parse_kernel(s) {
            assert_eq!(zrp::io::spec::parse_kernel(&k.label()).expect("labels parse back"), k);
        }
    }
});
