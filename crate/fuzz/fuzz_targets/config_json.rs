#![no_main]

use effstab::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let once = cfg.to_json();
        let back = ExperimentConfig::from_json(&once).expect("serialized config parses");
        assert_eq!(back.to_json(), once);
    }
});
