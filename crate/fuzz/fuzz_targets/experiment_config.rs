// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_harness::ExperimentConfig;

fuzz_target!(|text: &str| {
    for parsed in [ExperimentConfig::from_toml(text), ExperimentConfig::from_json(text)] {
        if let Ok(cfg) = parsed {
            let _ = cfg.validate();
            let _ = cfg.validate_layers(4);
        }
    }
});
