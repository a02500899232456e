#![no_main]

use growfrag::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            // the resolved echo must read back to the same configuration
            let again = RunConfig::parse(&cfg.to_toml()).expect("resolved config parses");
            assert_eq!(again.to_toml(), cfg.to_toml());
        }
    }
});
