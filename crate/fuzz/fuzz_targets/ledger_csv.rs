#![no_main]
use libfuzzer_sys::fuzz_target;
use vnslab::io::read_ledger;

fuzz_target!(|data: &[u8]| {
    let _ = read_ledger(data);
});
