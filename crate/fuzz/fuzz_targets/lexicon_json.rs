// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use patchlab_metrics::{classify_demographic, neutralize_gender, Lexicon, Mode};

fuzz_target!(|text: &str| {
    if let Ok(lex) = Lexicon::from_json(text) {
        let sample = "Gender: Female. He is a 40 year old man; Race: Black.";
        let _ = classify_demographic(sample, &lex, Mode::Gender);
        let _ = classify_demographic(sample, &lex, Mode::Race);
        let _ = neutralize_gender(sample, &lex.neutralize);
    }
});
