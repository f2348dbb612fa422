#![no_main]

use libfuzzer_sys::fuzz_target;
use sle_lab::records::parse_real_list;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = parse_real_list(text) {
            assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
        }
    }
});
