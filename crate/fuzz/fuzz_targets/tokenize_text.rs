// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use patchlab_core::Tokenizer;
use patchlab_harness::toy::toy_tokenizer;

static TOK: OnceLock<Tokenizer> = OnceLock::new();

fuzz_target!(|text: &str| {
    let tok = TOK.get_or_init(toy_tokenizer);
    if let Ok(spans) = tok.tokenize_with_offsets(text) {
        let ids: Vec<u32> = spans.iter().map(|s| s.id).collect();
        assert_eq!(tok.detokenize(&ids).unwrap(), text);
    }
});
