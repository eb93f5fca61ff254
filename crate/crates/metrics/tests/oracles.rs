// SPDX-License-Identifier: MIT OR Apache-2.0

use patchlab_metrics::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ---------------------------------------------------------------------------
// Mann-Whitney against brute-force relabelling
// ---------------------------------------------------------------------------

/// Two-sided p by visiting every subset of the pooled sample of size |a|.
fn brute_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let u_of = |mask: u32| {
        let mut u = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    continue;
                }
                if pooled[i] > pooled[j] {
                    u += 1.0;
                } else if pooled[i] == pooled[j] {
                    u += 0.5;
                }
            }
        }
        u
    };
    let obs = u_of((1u32 << a.len()) - 1);
    let center = (a.len() * b.len()) as f64 / 2.0;
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        total += 1;
        if (u_of(mask) - center).abs() >= (obs - center).abs() - 1e-9 {
            hit += 1;
        }
    }
    (obs, hit as f64 / total as f64)
}

#[test]
fn exact_branch_matches_enumeration() {
    let mut rng = StdRng::seed_from_u64(6);
    for na in 1..=6 {
        for nb in 1..=6 {
            for alphabet in [3u32, 6, 50] {
                let a: Vec<f64> = (0..na).map(|_| rng.gen_range(1..=alphabet) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(1..=alphabet) as f64).collect();
                let (u, p) = brute_p(&a, &b);
                let r = mann_whitney_exact(&a, &b).unwrap();
                assert_eq!(r.u, u, "{a:?} {b:?}");
                assert!((r.p - p).abs() < 1e-12, "{a:?} {b:?}: {} vs {p}", r.p);
            }
        }
    }
}

#[test]
fn normal_branch_close_to_exact_at_fifteen() {
    let mut rng = StdRng::seed_from_u64(15);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let shift: f64 = rng.gen_range(0.0..1.0);
        let a: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..15).map(|_| rng.gen::<f64>() + shift).collect();
        let e = mann_whitney_exact(&a, &b).unwrap();
        let n = mann_whitney_normal(&a, &b).unwrap();
        assert_eq!(e.u, n.u);
        worst = worst.max((e.p - n.p).abs());
    }
    assert!(worst <= 0.01, "worst |dp| = {worst}");
}

#[test]
fn rank_arms_all_one_vs_all_two() {
    let r = mann_whitney(&[1.0; 5], &[2.0; 5]).unwrap();
    assert_eq!(r.u, 0.0);
    assert!((r.p - 2.0 / 252.0).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// Formula oracles
// ---------------------------------------------------------------------------

#[test]
fn rewrite_hand_values() {
    let cases = [
        (0.2, 0.6, 0.5),
        (0.0, 0.3, 0.3),
        (0.5, 0.75, 0.5),
        (0.5, 0.25, -0.5),
        (0.9, 0.91, 0.1),
        (0.1, 0.1, 0.0),
        (0.3, 1.0, 1.0),
        (0.75, 0.0, -3.0),
        (0.6, 0.8, 0.5),
        (0.25, 0.625, 0.5),
        (0.4, 0.55, 0.25),
    ];
    for (p, q, want) in cases {
        assert!((rewrite_score(p, q).unwrap() - want).abs() < 1e-9, "{p} {q}");
    }
}

#[test]
fn perplexity_hand_values() {
    let cases: [(&[f64], f64); 10] = [
        (&[0.0], 1.0),
        (&[-1.0], std::f64::consts::E),
        (&[-2.0, 0.0], std::f64::consts::E),
        (&[-(2f64.ln())], 2.0),
        (&[-(4f64.ln()), 0.0], 2.0),
        (&[-(3f64.ln()); 5], 3.0),
        (&[-(10f64.ln()), -(1000f64.ln())], 100.0),
        (&[-0.5, -1.5], std::f64::consts::E),
        (&[-(8f64.ln()), -(2f64.ln()), -(4f64.ln())], 4.0),
        (&[0.5f64.ln(), 0.25f64.ln()], 8f64.sqrt()),
    ];
    for (lp, want) in cases {
        assert!((perplexity(lp).unwrap() - want).abs() < 1e-9, "{lp:?}");
    }
}

#[test]
fn delta_risk_hand_values() {
    let cases: [(&[u8], &[u8], f64); 10] = [
        (&[1, 1, 0], &[0, 1, 0], 1.0 / 3.0),
        (&[1], &[0], 1.0),
        (&[0], &[1], -1.0),
        (&[1, 0], &[1, 0], 0.0),
        (&[1, 1, 1, 1], &[0, 0, 0, 0], 1.0),
        (&[1, 0, 0, 0], &[0, 0, 0, 0], 0.25),
        (&[0, 0, 1, 1], &[1, 1, 0, 0], 0.0),
        (&[1, 1, 1, 0, 0], &[0, 0, 0, 0, 1], 0.4),
        (&[0, 1, 0, 1, 0, 1, 0, 1], &[0, 0, 0, 0, 0, 0, 0, 0], 0.5),
        (&[0, 0, 0], &[1, 1, 0], -2.0 / 3.0),
    ];
    for (u, v, want) in cases {
        let ids = (0..u.len()).map(|i| format!("n{i}")).collect();
        let o = RiskOutcomes::new(ids, u.to_vec(), v.to_vec()).unwrap();
        assert!((delta_risk(&o).unwrap() - want).abs() < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Laws
// ---------------------------------------------------------------------------

#[test]
fn strict_implies_relaxed_on_fixture_corpus() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/texts/assignment_corpus.jsonl");
    let lex = Lexicon::default();
    let texts: Vec<String> = std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(texts.len(), 500);
    let pairs = [("male", "female"), ("female", "male"), ("black", "white"), ("white", "black")];
    let mut strict_true = 0;
    for t in &texts {
        for (target, cf) in pairs {
            if strict_assignment(t, target, cf, &lex).unwrap() {
                strict_true += 1;
                assert!(relaxed_assignment(t, cf, &lex).unwrap(), "{t}");
            }
        }
    }
    assert!(strict_true > 50);
}

fn arb_label() -> impl Strategy<Value = Classification> {
    prop_oneof![
        Just(Classification::Label("male".into())),
        Just(Classification::Label("female".into())),
        Just(Classification::Ambiguous),
        Just(Classification::Unstated),
    ]
}

proptest! {
    #[test]
    fn flip_ratio_permutation_invariant(
        labels in proptest::collection::vec(arb_label(), 1..60),
        seed in any::<u64>(),
    ) {
        let mut shuffled = labels.clone();
        let mut rng = StdRng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let a = flip_ratio(&labels, "male");
        let b = flip_ratio(&shuffled, "male");
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one side failed"),
        }
    }

    #[test]
    fn mann_whitney_u_symmetry(
        a in proptest::collection::vec(1u8..6, 1..8),
        b in proptest::collection::vec(1u8..6, 1..8),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney(&a, &b).unwrap();
        let ba = mann_whitney(&b, &a).unwrap();
        prop_assert_eq!(ab.u + ba.u, (a.len() * b.len()) as f64);
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
    }
}
