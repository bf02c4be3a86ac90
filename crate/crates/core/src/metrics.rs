//! Sentence-level BLEU with best-reference selection, plus the CSV and
//! Markdown forms used to report scores.
//!
//! Scores live on a 0 to 100 scale. A zero n-gram precision is replaced by
//! `1 / (2 * c)` where `c` is the candidate's n-gram count (taken as 1 when the
//! candidate is shorter than the order), so short captions keep a nonzero
//! BLEU-4. The corpus aggregate is the mean of per-sentence best-reference
//! scores.
//!
//! ```
//! use actcap::metrics::bleu_n;
//! use actcap::seq2seq::Caption;
//!
//! let reference = Caption::from_text("a b c d");
//! assert_eq!(bleu_n(&Caption::from_text("a b x d"), &reference, 2).unwrap(), 50.0);
//! assert_eq!(bleu_n(&reference, &reference, 4).unwrap(), 100.0);
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err};
use crate::seq2seq::Caption;
use crate::Result;

fn ngram_counts(words: &[String], m: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if words.len() >= m {
        for g in words.windows(m) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-`n` of `candidate` against one reference.
pub fn bleu_n(candidate: &Caption, reference: &Caption, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(config_err!("BLEU order must be at least 1"));
    }
    let cand = candidate.words();
    let refw = reference.words();
    if cand.is_empty() {
        return Ok(0.0);
    }
    // The precision product is kept as an exact fraction until the final root.
    let mut exact = Some((1u128, 1u128));
    let mut approx = 1.0f64;
    for m in 1..=n {
        let total = cand.len().saturating_sub(m - 1);
        let ref_counts = ngram_counts(refw, m);
        let matched: usize = ngram_counts(cand, m)
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let (pn, pd) = if matched == 0 { (1, 2 * total.max(1)) } else { (matched, total) };
        approx *= pn as f64 / pd as f64;
        exact = exact.and_then(|(a, b)| {
            let (a, b) = (a.checked_mul(pn as u128)?, b.checked_mul(pd as u128)?);
            let g = gcd(a, b);
            Some((a / g, b / g))
        });
    }
    let product = exact.map_or(approx, |(a, b)| a as f64 / b as f64);
    let precision = product.powf(1.0 / n as f64);
    let (c, r) = (cand.len() as f64, refw.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * precision)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Maximum of [`bleu_n`] over `references`.
pub fn bleu_best_reference(candidate: &Caption, references: &[Caption], n: usize) -> Result<f64> {
    if references.is_empty() {
        return Err(data_err!("best-reference BLEU needs at least one reference"));
    }
    let mut best = f64::NEG_INFINITY;
    for r in references {
        best = best.max(bleu_n(candidate, r, n)?);
    }
    Ok(best)
}

/// Per-sentence and aggregate scores for one order `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub n: usize,
    pub per_sentence: Vec<f64>,
    /// Mean of `per_sentence`; 0 when there are no sentences.
    pub aggregate: f64,
}

/// Scores every output against its reference set, once per order in `orders`.
pub fn evaluate_corpus(outputs: &[Caption], references: &[Vec<Caption>], orders: &[usize]) -> Result<Vec<BleuReport>> {
    if outputs.len() != references.len() {
        return Err(data_err!("{} outputs for {} reference sets", outputs.len(), references.len()));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(data_err!("test item {i} has no references"));
    }
    orders
        .iter()
        .map(|&n| {
            let per_sentence = outputs
                .iter()
                .zip(references)
                .map(|(o, r)| bleu_best_reference(o, r, n))
                .collect::<Result<Vec<_>>>()?;
            let aggregate = mean(&per_sentence);
            Ok(BleuReport { n, per_sentence, aggregate })
        })
        .collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variant: String,
    pub fold: usize,
    pub n: usize,
    pub score: f64,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| data_err!("metrics csv: {e}"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| data_err!("metrics csv: {e}")))
        .collect()
}

/// Fold-mean score per (variant, n), in first-seen variant order.
pub fn fold_means(rows: &[MetricRow]) -> Vec<(String, Vec<(usize, f64)>)> {
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<(String, usize), Vec<f64>> = HashMap::new();
    for r in rows {
        if !order.contains(&r.variant) {
            order.push(r.variant.clone());
        }
        cells.entry((r.variant.clone(), r.n)).or_default().push(r.score);
    }
    order
        .into_iter()
        .map(|v| {
            let mut ns: Vec<(usize, f64)> =
                cells.iter().filter(|((cv, _), _)| *cv == v).map(|((_, n), s)| (*n, mean(s))).collect();
            ns.sort_by_key(|&(n, _)| n);
            (v, ns)
        })
        .collect()
}

/// Markdown table with one row per variant and one BLEU column per order.
/// Missing cells are written as `n/a`.
pub fn markdown_table(rows: &[MetricRow], orders: &[usize]) -> String {
    let mut s = String::from("| Model |");
    for n in orders {
        s.push_str(&format!(" BLEU-{n} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(orders.len()));
    s.push('\n');
    for (variant, scores) in fold_means(rows) {
        s.push_str(&format!("| {variant} |"));
        for n in orders {
            match scores.iter().find(|(m, _)| m == n) {
                Some((_, v)) => s.push_str(&format!(" {v:.1} |")),
                None => s.push_str(" n/a |"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Caption {
        Caption::from_text(s)
    }

    #[test]
    fn hand_counted_bigram_score() {
        assert_eq!(bleu_n(&c("a b x d"), &c("a b c d"), 2).unwrap(), 50.0);
        assert_eq!(bleu_n(&c("a b c d"), &c("a b c d"), 2).unwrap(), 100.0);
    }

    #[test]
    fn longer_candidate_has_unit_brevity_penalty() {
        // p1 = 4/5, p2 = 3/4: no penalty leaves 100 * sqrt(3/5).
        let s = bleu_n(&c("a b c d e"), &c("a b c d"), 2).unwrap();
        assert!((s - 100.0 * (0.6f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shorter_candidate_is_penalized() {
        // p1 = 1, p2 = 1, BP = exp(1 - 4/2).
        let s = bleu_n(&c("a b"), &c("a b c d"), 2).unwrap();
        assert!((s - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_precision_is_smoothed() {
        // p1 = 1/2 (one of two unigrams), p2 = 1/(2*1) smoothed, BP = exp(1 - 3/2).
        let s = bleu_n(&c("a z"), &c("a b c"), 2).unwrap();
        assert!((s - 100.0 * 0.5 * (-0.5f64).exp()).abs() < 1e-12);
        // Order above candidate length: count treated as 1.
        let s = bleu_n(&c("a"), &c("a"), 2).unwrap();
        assert!((s - 100.0 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeated_ngrams() {
        // p1 = 2/4 after clipping "a" to the reference count of 2.
        let s = bleu_n(&c("a a a a"), &c("a a b c"), 1).unwrap();
        assert_eq!(s, 50.0);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(bleu_n(&c(""), &c("a b"), 2).unwrap(), 0.0);
        assert!(bleu_n(&c("a"), &c("a"), 0).is_err());
    }

    #[test]
    fn best_reference_takes_the_max() {
        let refs = [c("a b c d"), c("a b x d")];
        assert_eq!(bleu_best_reference(&c("a b x d"), &refs, 2).unwrap(), 100.0);
        assert!(bleu_best_reference(&c("a"), &[], 2).is_err());
    }

    #[test]
    fn corpus_extremes_and_alignment() {
        let refs = vec![vec![c("pick up the cup")], vec![c("drop the dog"), c("drop it")]];
        let copied = [c("pick up the cup"), c("drop the dog")];
        for r in evaluate_corpus(&copied, &refs, &[2, 3]).unwrap() {
            assert_eq!(r.aggregate, 100.0);
        }
        let empty = [c(""), c("")];
        assert_eq!(evaluate_corpus(&empty, &refs, &[4]).unwrap()[0].aggregate, 0.0);
        assert!(evaluate_corpus(&copied[..1], &refs, &[2]).is_err());
        assert!(evaluate_corpus(&copied, &[vec![], vec![c("x")]], &[2]).is_err());
    }

    #[test]
    fn csv_round_trip_and_table() {
        let rows = vec![
            MetricRow { variant: "vanilla".into(), fold: 0, n: 2, score: 1.0 },
            MetricRow { variant: "vanilla".into(), fold: 1, n: 2, score: 2.0 },
            MetricRow { variant: "hybrid".into(), fold: 0, n: 2, score: 0.1 + 0.2 },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("variant,fold,n,score\n"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
        let md = markdown_table(&rows, &[2, 3]);
        assert_eq!(md.lines().next().unwrap(), "| Model | BLEU-2 | BLEU-3 |");
        assert!(md.contains("| vanilla | 1.5 | n/a |"));
    }
}
