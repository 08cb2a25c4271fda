#![no_main]

use hermite_fem::runner::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_toml_str(text) {
        let _ = config.resolved_levels();
        let _ = config.validate();
    }
});
