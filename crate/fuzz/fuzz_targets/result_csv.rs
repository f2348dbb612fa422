#![no_main]

use libfuzzer_sys::fuzz_target;
use sle_lab::records::{Format, ResultFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = ResultFile::parse_csv(text) else { return };
    // Whatever parses must serialize and parse back to the same table shape.
    let bytes = file.to_bytes(Format::Csv).expect("serializes");
    let back = ResultFile::parse_csv(std::str::from_utf8(&bytes).unwrap()).expect("re-parses");
    assert_eq!(std::mem::discriminant(&file.rows), std::mem::discriminant(&back.rows));
});
