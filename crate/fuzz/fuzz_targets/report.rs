#![no_main]

use libfuzzer_sys::fuzz_target;
use sle_lab::report;

// Inputs holding several files are split on NUL bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = report::build_from_texts(text.split('\0')) {
            let _ = r.to_markdown();
            let _ = r.to_csv();
        }
    }
});
