// SPDX-License-Identifier: MIT OR Apache-2.0
#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use patchlab_metrics::{
    classify_demographic, neutralize_gender, parse_list_items, parse_risk_answer, rank_of_diagnosis,
    relaxed_assignment, strict_assignment, Lexicon, Mode,
};

static LEX: OnceLock<Lexicon> = OnceLock::new();

fuzz_target!(|text: &str| {
    let lex = LEX.get_or_init(Lexicon::default);
    let _ = classify_demographic(text, lex, Mode::Gender);
    let _ = classify_demographic(text, lex, Mode::Race);
    let _ = parse_risk_answer(text, lex);
    let _ = parse_list_items(text);
    let _ = rank_of_diagnosis(text, "pulmonary embolism", &["PE"]);
    if let Ok(true) = strict_assignment(text, "male", "female", lex) {
        assert!(relaxed_assignment(text, "female", lex).unwrap());
    }
    let n = neutralize_gender(text, &lex.neutralize);
    assert_eq!(neutralize_gender(&n.text, &lex.neutralize).replacements, 0);
});
