// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_core::Tokenizer;

fuzz_target!(|data: &[u8]| {
    if let Ok(tok) = Tokenizer::from_json(data) {
        if let Ok(ids) = tok.tokenize("The patient is Male") {
            let _ = tok.detokenize(&ids);
        }
    }
});
