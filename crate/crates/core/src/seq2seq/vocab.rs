use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
const SPECIALS: [&str; 3] = ["<bos>", "<eos>", "<unk>"];

/// Whitespace-tokenized caption words, without special markers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Caption(pub Vec<String>);

impl Caption {
    pub fn from_text(text: &str) -> Self {
        Caption(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn text(&self) -> String {
        self.0.join(" ")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.0
    }
}

/// Word table for caption ids. Ids 0..3 are `<bos>`, `<eos>` and `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CaptionVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for CaptionVocab {
    type Error = crate::Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        Self::from_words(words)
    }
}

impl From<CaptionVocab> for Vec<String> {
    fn from(v: CaptionVocab) -> Self {
        v.words
    }
}

impl CaptionVocab {
    /// Keeps words seen at least `min_freq` times; the rest map to `<unk>`.
    pub fn build<'a>(captions: impl IntoIterator<Item = &'a Caption>, min_freq: usize) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for c in captions {
            for w in &c.0 {
                *freq.entry(w.as_str()).or_insert(0) += 1;
            }
        }
        let words = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(
                freq.into_iter()
                    .filter(|&(_, n)| n >= min_freq)
                    .map(|(w, _)| w.to_string()),
            )
            .collect();
        Self::from_words(words).expect("specials are first")
    }

    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < SPECIALS.len() || words[..3] != SPECIALS {
            return Err(data_err!("caption vocabulary must start with {SPECIALS:?}"));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(CaptionVocab { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    /// Training form: word ids followed by `<eos>`.
    pub fn encode(&self, caption: &Caption) -> Vec<usize> {
        caption
            .0
            .iter()
            .map(|w| self.id(w))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Words up to the first `<eos>`; `<bos>` is dropped.
    pub fn decode(&self, ids: &[usize]) -> Caption {
        Caption(
            ids.iter()
                .take_while(|&&i| i != EOS)
                .filter(|&&i| i != BOS)
                .map(|&i| self.words.get(i).cloned().unwrap_or_else(|| SPECIALS[UNK].to_string()))
                .collect(),
        )
    }
}
