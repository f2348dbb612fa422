#![no_main]

use libfuzzer_sys::fuzz_target;
use sle_lab::records::ResultFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ResultFile::parse_json(text);
        let _ = ResultFile::parse(text);
    }
});
