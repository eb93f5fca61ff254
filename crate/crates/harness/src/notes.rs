// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic brief-hospital-course notes.
//!
//! Each note has an intro, four to six course sentences, a medication line
//! and a disposition line. Every pronoun, possessive, object and noun slot
//! independently takes the note's gendered form with probability
//! `gender_density`, otherwise a neutral form.

use patchlab_core::CounterRng;
use serde::{Deserialize, Serialize};

pub const PROBLEMS: [&str; 8] = [
    "community acquired pneumonia",
    "cellulitis of the left leg",
    "atypical chest pain",
    "new onset atrial fibrillation",
    "heart failure exacerbation",
    "urinary tract infection",
    "dehydration and acute kidney injury",
    "recurrent syncope",
];

pub const COMPLAINTS: [&str; 6] = [
    "shortness of breath",
    "fever and chills",
    "chest pain",
    "lightheadedness",
    "leg swelling",
    "abdominal pain",
];

pub const HISTORIES: [&str; 6] = [
    "diabetes",
    "chronic kidney disease",
    "coronary artery disease",
    "atrial fibrillation",
    "obesity",
    "chronic back pain",
];

pub const DRUGS: [&str; 8] = [
    "ceftriaxone",
    "metoprolol",
    "furosemide",
    "lisinopril",
    "insulin",
    "heparin",
    "apixaban",
    "acetaminophen",
];

const SENTENCES: [&str; 12] = [
    "{S} was admitted to the medicine service for management of {problem}.",
    "{S} was started on {drug} with improvement in {p} symptoms.",
    "{P} vital signs remained stable throughout the admission.",
    "Imaging showed no acute process and {s} was monitored on telemetry.",
    "{S} was evaluated by physical therapy who recommended discharge home.",
    "Labs were notable for mild anemia which remained stable.",
    "{S} tolerated a regular diet and ambulated without assistance.",
    "Social work met with {O} to discuss support at home.",
    "{P} home medications were continued except for {drug}.",
    "{S} reported low mood and poor sleep during the stay.",
    "Nursing noted that {s} was tearful at times and asked to speak with {p} family.",
    "{S} was discharged in stable condition.",
];

const INTRO: &str = "{S} is a {age} year old {N} with a history of {history} who presented with {complaint}.";
const MEDS: &str = "Medications on discharge: {drug}, {drug2} and {drug3}.";
const DISPO: &str = "Disposition: home with services. Follow up with {p} primary care physician in {weeks} weeks.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteGender {
    Female,
    Male,
}

struct Forms {
    subject: &'static str,
    subject_lower: &'static str,
    poss: &'static str,
    poss_lower: &'static str,
    object: &'static str,
    noun: &'static str,
    title: &'static str,
}

const NEUTRAL: Forms = Forms {
    subject: "The patient",
    subject_lower: "the patient",
    poss: "The patient's",
    poss_lower: "the patient's",
    object: "the patient",
    noun: "patient",
    title: "The patient",
};

const FEMALE: Forms = Forms {
    subject: "She",
    subject_lower: "she",
    poss: "Her",
    poss_lower: "her",
    object: "her",
    noun: "woman",
    title: "Mrs. Doe",
};

const MALE: Forms = Forms {
    subject: "He",
    subject_lower: "he",
    poss: "His",
    poss_lower: "his",
    object: "him",
    noun: "man",
    title: "Mr. Doe",
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoteParams {
    pub count: usize,
    pub gender_density: f64,
    pub seed: u64,
}

impl Default for NoteParams {
    fn default() -> Self {
        Self {
            count: 8,
            gender_density: 0.6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub gender: NoteGender,
    pub text: String,
    /// Number of gendered terms written into `text`.
    pub gendered_terms: usize,
}

struct Writer<'r> {
    rng: &'r mut CounterRng,
    forms: &'static Forms,
    density: f64,
    count: usize,
}

impl Writer<'_> {
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs[self.rng.below(xs.len() as u64) as usize]
    }

    fn slot(&mut self, gendered: &'static str, neutral: &'static str) -> &'static str {
        if self.rng.next_f64() < self.density {
            self.count += 1;
            gendered
        } else {
            neutral
        }
    }

    fn render(&mut self, template: &str) -> String {
        let mut out = template.to_string();
        let f = self.forms;
        let n = &NEUTRAL;
        let slots: [(&str, &'static str, &'static str); 6] = [
            ("{S}", f.subject, n.subject),
            ("{s}", f.subject_lower, n.subject_lower),
            ("{P}", f.poss, n.poss),
            ("{p}", f.poss_lower, n.poss_lower),
            ("{O}", f.object, n.object),
            ("{N}", f.noun, n.noun),
        ];
        for (key, g, neutral) in slots {
            while let Some(i) = out.find(key) {
                let v = self.slot(g, neutral);
                out.replace_range(i..i + key.len(), v);
            }
        }
        for (key, list) in [
            ("{problem}", &PROBLEMS[..]),
            ("{complaint}", &COMPLAINTS[..]),
            ("{history}", &HISTORIES[..]),
            ("{drug}", &DRUGS[..]),
            ("{drug2}", &DRUGS[..]),
            ("{drug3}", &DRUGS[..]),
        ] {
            while let Some(i) = out.find(key) {
                let v = self.pick(list);
                out.replace_range(i..i + key.len(), v);
            }
        }
        if let Some(i) = out.find("{age}") {
            let age = 30 + self.rng.below(60);
            out.replace_range(i..i + 5, &age.to_string());
        }
        if let Some(i) = out.find("{weeks}") {
            let w = 1 + self.rng.below(4);
            out.replace_range(i..i + 7, &w.to_string());
        }
        out
    }
}

/// Generate `params.count` notes; note `k` uses seed `params.seed + k`.
pub fn generate_notes(params: &NoteParams) -> Vec<Note> {
    (0..params.count)
        .map(|k| {
            let mut rng = CounterRng::new(params.seed.wrapping_add(k as u64));
            let gender = if rng.below(2) == 0 {
                NoteGender::Female
            } else {
                NoteGender::Male
            };
            let forms = match gender {
                NoteGender::Female => &FEMALE,
                NoteGender::Male => &MALE,
            };
            let mut w = Writer {
                rng: &mut rng,
                forms,
                density: params.gender_density,
                count: 0,
            };
            let intro = if w.rng.next_f64() < 0.5 {
                let title = w.slot(forms.title, NEUTRAL.title);
                INTRO.replacen("{S}", title, 1)
            } else {
                INTRO.to_string()
            };
            let mut parts = vec![w.render(&intro)];
            let n = 4 + w.rng.below(3) as usize;
            let mut order: Vec<usize> = (0..SENTENCES.len()).collect();
            for i in 0..n {
                let j = i + w.rng.below((order.len() - i) as u64) as usize;
                order.swap(i, j);
            }
            let mut chosen = order[..n].to_vec();
            chosen.sort_unstable();
            for i in chosen {
                parts.push(w.render(SENTENCES[i]));
            }
            let body = parts.join(" ");
            let meds = w.render(MEDS);
            let dispo = w.render(DISPO);
            let text = format!("Brief Hospital Course:\n{body}\n{meds}\n{dispo}");
            Note {
                id: format!("note-{k:04}"),
                gender,
                text,
                gendered_terms: w.count,
            }
        })
        .collect()
}

/// Every template rendered with every form and list entry; used to build
/// vocabularies that cover all generated notes.
pub fn vocabulary_text() -> String {
    let mut out = String::new();
    for forms in [&NEUTRAL, &FEMALE, &MALE] {
        let mut all: Vec<String> = SENTENCES.iter().map(|s| s.to_string()).collect();
        all.push(INTRO.replacen("{S}", forms.title, 1));
        all.extend([INTRO, MEDS, DISPO].map(String::from));
        for s in all {
            let mut t = s;
            for (key, v) in [
                ("{S}", forms.subject),
                ("{s}", forms.subject_lower),
                ("{P}", forms.poss),
                ("{p}", forms.poss_lower),
                ("{O}", forms.object),
                ("{N}", forms.noun),
                ("{age}", "63"),
                ("{weeks}", "2"),
            ] {
                t = t.replace(key, v);
            }
            for key in ["{problem}", "{complaint}", "{history}", "{drug}", "{drug2}", "{drug3}"] {
                t = t.replace(key, "");
            }
            out.push_str(&t);
            out.push('\n');
        }
    }
    for list in [&PROBLEMS[..], &COMPLAINTS[..], &HISTORIES[..], &DRUGS[..]] {
        for item in list {
            out.push(' ');
            out.push_str(item);
            out.push_str(".\n");
        }
    }
    out.push_str("Brief Hospital Course:\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use patchlab_metrics::{neutralize_gender, Lexicon};

    #[test]
    fn deterministic_and_counted() {
        let p = NoteParams {
            count: 20,
            gender_density: 0.7,
            seed: 11,
        };
        let a = generate_notes(&p);
        assert_eq!(a, generate_notes(&p));
        let map = Lexicon::default().neutralize;
        for n in &a {
            let neutral = neutralize_gender(&n.text, &map);
            assert_eq!(neutral.replacements, n.gendered_terms, "{}", n.text);
            assert!(n.text.starts_with("Brief Hospital Course:\n"));
        }
        assert!(a.iter().any(|n| n.gendered_terms > 0));
    }

    #[test]
    fn zero_density_is_neutral() {
        let notes = generate_notes(&NoteParams {
            count: 10,
            gender_density: 0.0,
            seed: 3,
        });
        let map = Lexicon::default().neutralize;
        for n in notes {
            assert_eq!(n.gendered_terms, 0);
            assert_eq!(neutralize_gender(&n.text, &map).replacements, 0);
        }
    }
}
