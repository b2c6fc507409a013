#![no_main]

use attrflip_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = toml::from_str::<ExperimentConfig>(text) {
        let _ = cfg.resolve();
    }
});
