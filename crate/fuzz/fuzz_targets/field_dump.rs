#![no_main]
use libfuzzer_sys::fuzz_target;
use vnslab::io::{decode_field, parse_field_header};

// Input: JSON sidecar, a NUL byte, then the raw payload.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let Ok(text) = std::str::from_utf8(&data[..split]) else { return };
    if let Ok(header) = parse_field_header(text) {
        let _ = decode_field(&header, &data[split + 1..]);
    }
});
