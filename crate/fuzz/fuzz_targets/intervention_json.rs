// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_core::InterventionSpec;

fuzz_target!(|text: &str| {
    if let Ok(spec) = InterventionSpec::from_json(text) {
        let back = InterventionSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        let _ = spec.validate(32);
    }
});
