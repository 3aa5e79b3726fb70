#![no_main]
use libfuzzer_sys::fuzz_target;
use vnslab::io::RunManifest;

fuzz_target!(|data: &str| {
    if let Ok(m) = RunManifest::parse(data) {
        let _ = m.to_json();
    }
});
