// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_core::format::toy;

fuzz_target!(|data: &[u8]| {
    let _ = toy::parse_header(data);
    if let Ok(m) = toy::from_bytes(data) {
        assert_eq!(toy::from_bytes(&toy::to_bytes(&m)).unwrap().config(), m.config());
    }
});
