#![no_main]
use libfuzzer_sys::fuzz_target;
use vnslab::diagnostics::{read_timeseries, write_timeseries};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_timeseries(data) {
        let mut out = Vec::new();
        write_timeseries(&mut out, &records).unwrap();
        let again = read_timeseries(&out[..]).unwrap();
        assert_eq!(again.len(), records.len());
    }
});
