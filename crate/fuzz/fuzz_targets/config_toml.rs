#![no_main]
use libfuzzer_sys::fuzz_target;
use vnslab::config::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::from_toml_str(data) {
        if let Ok(domain) = cfg.validate() {
            let _ = cfg.initial_spec(&domain);
        }
        let _ = cfg.hash();
        let _ = cfg.steps();
    }
});
