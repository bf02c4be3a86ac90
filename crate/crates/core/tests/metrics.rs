use std::collections::HashMap;

use actcap::metrics::{bleu_best_reference, bleu_n, evaluate_corpus};
use actcap::seq2seq::Caption;
use proptest::prelude::*;
use serde::Deserialize;

/// Direct floating-point BLEU, written from the definition.
fn oracle_bleu(cand: &[String], refw: &[String], n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for m in 1..=n {
        let grams = |w: &[String]| {
            let mut h: HashMap<Vec<String>, usize> = HashMap::new();
            for i in 0..(w.len() + 1).saturating_sub(m) {
                *h.entry(w[i..i + m].to_vec()).or_default() += 1;
            }
            h
        };
        let (c, r) = (grams(cand), grams(refw));
        let total: usize = c.values().sum();
        let hit: usize = c.iter().map(|(g, k)| (*k).min(*r.get(g).unwrap_or(&0))).sum();
        let p = if hit == 0 { 0.5 / total.max(1) as f64 } else { hit as f64 / total as f64 };
        log_sum += p.ln();
    }
    let bp = if cand.len() > refw.len() { 1.0 } else { (1.0 - refw.len() as f64 / cand.len() as f64).exp() };
    100.0 * bp * (log_sum / n as f64).exp()
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["the", "cup", "put", "on", "table", "a", "go"]), 0..12)
        .prop_map(|w| w.into_iter().map(String::from).collect())
}

fn caption(w: &[String]) -> Caption {
    Caption::from_text(&w.join(" "))
}

#[test]
fn hand_computed_fixtures() {
    let r = Caption::from_text("a b c d");
    assert_eq!(bleu_n(&Caption::from_text("a b x d"), &r, 2).unwrap(), 50.0);
    for n in 1..=4 {
        assert_eq!(bleu_n(&r, &r, n).unwrap(), 100.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn identity_scores_exactly_one_hundred(w in words(), n in 1usize..5) {
        prop_assume!(w.len() >= n);
        let c = caption(&w);
        prop_assert_eq!(bleu_n(&c, &c, n).unwrap(), 100.0);
    }

    #[test]
    fn best_reference_ignores_reference_order(cand in words(), refs in prop::collection::vec(words(), 1..6),
                                               perm in any::<prop::sample::Index>(), n in 1usize..5) {
        let refs: Vec<Caption> = refs.iter().map(|r| caption(r)).collect();
        let mut shuffled = refs.clone();
        shuffled.rotate_left(perm.index(refs.len()));
        shuffled.reverse();
        let c = caption(&cand);
        let best = bleu_best_reference(&c, &refs, n).unwrap();
        prop_assert_eq!(best, bleu_best_reference(&c, &shuffled, n).unwrap());
        for r in &refs {
            let s = bleu_n(&c, r, n).unwrap();
            prop_assert!((0.0..=100.0).contains(&s) && s <= best);
        }
    }

    #[test]
    fn agrees_with_direct_formula(cand in words(), refw in words(), n in 1usize..5) {
        let got = bleu_n(&caption(&cand), &caption(&refw), n).unwrap();
        let want = oracle_bleu(&cand, &refw, n);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn renaming_words_consistently_changes_nothing(cand in words(), refw in words(), n in 1usize..5) {
        let rename = |w: &[String]| w.iter().map(|x| format!("{x}_x")).collect::<Vec<_>>();
        let a = bleu_n(&caption(&cand), &caption(&refw), n).unwrap();
        let b = bleu_n(&caption(&rename(&cand)), &caption(&rename(&refw)), n).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[derive(Deserialize)]
struct Regression {
    outputs: Vec<String>,
    references: Vec<Vec<String>>,
    orders: Vec<usize>,
    aggregates: Vec<f64>,
}

#[test]
fn stored_corpus_scores_reproduce_exactly() {
    let fixture: Regression = serde_json::from_str(include_str!("fixtures/bleu_regression.json")).unwrap();
    let outputs: Vec<Caption> = fixture.outputs.iter().map(|s| Caption::from_text(s)).collect();
    let refs: Vec<Vec<Caption>> =
        fixture.references.iter().map(|r| r.iter().map(|s| Caption::from_text(s)).collect()).collect();
    let reports = evaluate_corpus(&outputs, &refs, &fixture.orders).unwrap();
    let got: Vec<f64> = reports.iter().map(|r| r.aggregate).collect();
    assert_eq!(got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
               fixture.aggregates.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}
