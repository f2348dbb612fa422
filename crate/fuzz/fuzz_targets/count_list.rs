#![no_main]

use libfuzzer_sys::fuzz_target;
use sle_lab::records::{format_packs, parse_count_list};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = parse_count_list(text) {
            assert!(v.iter().all(|&n| n > 0));
            assert_eq!(parse_count_list(&format_packs(&v)).unwrap(), v);
        }
    }
});
