// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_core::format::gguf::{self, GgufFile};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = GgufFile::parse(data) {
        let _ = f.config();
        let _ = f.tokenizer();
    }
    let _ = gguf::from_bytes(data);
});
