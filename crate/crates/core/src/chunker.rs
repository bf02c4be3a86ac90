//! Byte-pair encoding over cluster label streams.
//!
//! Training repeatedly merges the most frequent adjacent token pair into a
//! new token. Base tokens are the cluster labels `0..base_alphabet_size`;
//! the merge at rank `r` creates token `base_alphabet_size + r`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, Result};
use crate::hashing::content_hash;
use crate::quantizer::LabelSequence;

/// BPE token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkSequence(pub Vec<usize>);

impl ChunkSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BpeModel {
    base_alphabet_size: usize,
    target_vocab: usize,
    merges: Vec<(usize, usize)>,
    #[serde(skip)]
    expansions: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct MergeHeader {
    version: u32,
    base_alphabet_size: usize,
    target_vocab: usize,
}

/// Counts adjacent pairs left to right without overlap, so a run `a a a`
/// yields a single `(a, a)`.
fn count_pairs(seq: &[usize], counts: &mut HashMap<(usize, usize), usize>) {
    let mut last_same: Option<usize> = None;
    for i in 0..seq.len().saturating_sub(1) {
        let pair = (seq[i], seq[i + 1]);
        if pair.0 == pair.1 {
            if i > 0 && last_same == Some(i - 1) {
                last_same = None;
                continue;
            }
            last_same = Some(i);
        }
        *counts.entry(pair).or_insert(0) += 1;
    }
}

fn apply_merge(seq: &[usize], pair: (usize, usize), token: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == pair.0 && seq[i + 1] == pair.1 {
            out.push(token);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    out
}

impl BpeModel {
    fn from_merges(base_alphabet_size: usize, target_vocab: usize, merges: Vec<(usize, usize)>) -> Result<Self> {
        let mut expansions: Vec<Vec<usize>> = (0..base_alphabet_size).map(|t| vec![t]).collect();
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let existing = base_alphabet_size + rank;
            if l >= existing || r >= existing {
                return Err(data_err!(
                    "merge {rank} references token ({l}, {r}) that does not exist yet"
                ));
            }
            let mut e = expansions[l].clone();
            e.extend_from_slice(&expansions[r]);
            expansions.push(e);
        }
        Ok(BpeModel {
            base_alphabet_size,
            target_vocab,
            merges,
            expansions,
        })
    }

    pub fn base_alphabet_size(&self) -> usize {
        self.base_alphabet_size
    }

    pub fn target_vocab(&self) -> usize {
        self.target_vocab
    }

    /// Base labels plus one token per merge.
    pub fn vocab_size(&self) -> usize {
        self.base_alphabet_size + self.merges.len()
    }

    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    /// Base-label expansion of a token.
    pub fn expand(&self, token: usize) -> Option<&[usize]> {
        self.expansions.get(token).map(Vec::as_slice)
    }

    pub fn content_hash(&self) -> String {
        content_hash(self)
    }

    /// Merge-table text: one JSON header line, then `rank left right` per merge.
    pub fn to_merge_table(&self) -> String {
        let header = MergeHeader {
            version: 1,
            base_alphabet_size: self.base_alphabet_size,
            target_vocab: self.target_vocab,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (rank, (l, r)) in self.merges.iter().enumerate() {
            writeln!(out, "{rank} {l} {r}").unwrap();
        }
        out
    }

    pub fn from_merge_table(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: MergeHeader = serde_json::from_str(
            lines.next().ok_or_else(|| data_err!("merge table is empty"))?,
        )?;
        if header.version != 1 {
            return Err(data_err!("unsupported merge table version {}", header.version));
        }
        let mut merges = Vec::new();
        for (expected, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let fields: Vec<usize> = line
                .split_whitespace()
                .map(|f| f.parse::<usize>().map_err(|e| data_err!("bad merge line {line:?}: {e}")))
                .collect::<Result<_>>()?;
            match fields[..] {
                [rank, l, r] if rank == expected => merges.push((l, r)),
                _ => return Err(data_err!("bad merge line {line:?}")),
            }
        }
        Self::from_merges(header.base_alphabet_size, header.target_vocab, merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_merge_table())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_merge_table(&fs::read_to_string(path)?)
    }
}

fn check_labels(seq: &LabelSequence, alphabet: usize) -> Result<()> {
    match seq.0.iter().find(|&&l| l >= alphabet) {
        Some(bad) => Err(data_err!("label {bad} outside base alphabet of size {alphabet}")),
        None => Ok(()),
    }
}

/// Learns merges until the vocabulary reaches `target_vocab` or no pair
/// occurs at least twice. Pairs never span two sequences; frequency ties go
/// to the smallest `(left, right)`.
pub fn bpe_train(corpus: &[LabelSequence], base_alphabet_size: usize, target_vocab: usize) -> Result<BpeModel> {
    if corpus.is_empty() {
        return Err(data_err!("BPE training corpus is empty"));
    }
    if target_vocab < base_alphabet_size {
        return Err(config_err!(
            "target vocabulary {target_vocab} is smaller than the base alphabet {base_alphabet_size}"
        ));
    }
    for seq in corpus {
        check_labels(seq, base_alphabet_size)?;
    }
    let mut seqs: Vec<Vec<usize>> = corpus.iter().map(|s| s.0.clone()).collect();
    let mut merges = Vec::new();
    while base_alphabet_size + merges.len() < target_vocab {
        let mut counts = HashMap::new();
        for s in &seqs {
            count_pairs(s, &mut counts);
        }
        let best = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then(pb.cmp(pa)));
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let token = base_alphabet_size + merges.len();
        for s in &mut seqs {
            *s = apply_merge(s, pair, token);
        }
        merges.push(pair);
    }
    BpeModel::from_merges(base_alphabet_size, target_vocab, merges)
}

/// Applies the merges in rank order, each left to right without overlap.
pub fn bpe_encode(model: &BpeModel, seq: &LabelSequence) -> Result<ChunkSequence> {
    check_labels(seq, model.base_alphabet_size)?;
    let mut tokens = seq.0.clone();
    for (rank, &pair) in model.merges.iter().enumerate() {
        if tokens.len() < 2 {
            break;
        }
        tokens = apply_merge(&tokens, pair, model.base_alphabet_size + rank);
    }
    Ok(ChunkSequence(tokens))
}

/// Concatenates the base-label expansion of every token.
pub fn bpe_decode(model: &BpeModel, chunks: &ChunkSequence) -> Result<LabelSequence> {
    let mut out = Vec::with_capacity(chunks.len() * 2);
    for &t in &chunks.0 {
        out.extend_from_slice(
            model
                .expand(t)
                .ok_or_else(|| data_err!("unknown BPE token {t}"))?,
        );
    }
    Ok(LabelSequence(out))
}
