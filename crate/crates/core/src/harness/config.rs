use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::hashing::content_hash;
use crate::seq2seq::{TrainConfig, Variant};

pub const CONFIG_VERSION: u32 = 1;

/// Every knob of a cross-validated run. Serialized next to each result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub variants: Vec<Variant>,
    /// Codebook size used when `k_candidates` is empty.
    pub k: usize,
    /// When non-empty, each fold picks its codebook size by elbow over these.
    pub k_candidates: Vec<usize>,
    /// BPE vocabulary target, base labels included.
    pub bpe_vocab: usize,
    /// When set, the BPE target is the selected `k` plus this many merges
    /// and `bpe_vocab` is ignored.
    pub bpe_merges: Option<usize>,
    pub hidden: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub folds: usize,
    /// Validation actions per fold; defaults to the test fold size.
    pub val_actions: Option<usize>,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Fit codebook and BPE on every action instead of each fold's training split.
    pub global_segmentation: bool,
    pub min_word_freq: usize,
    pub max_decode_len: usize,
    pub bleu_orders: Vec<usize>,
    /// Worker threads for fold and variant jobs; 0 uses every core.
    pub workers: usize,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            variants: Variant::ALL.to_vec(),
            k: 150,
            k_candidates: Vec::new(),
            bpe_vocab: 200,
            bpe_merges: None,
            hidden: 160,
            batch_size: 64,
            lr: 0.001,
            weight_decay: 1e-6,
            dropout: 0.5,
            max_epochs: 300,
            patience: 10,
            clip_norm: 5.0,
            seed: 0,
            folds: 10,
            val_actions: None,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            global_segmentation: false,
            min_word_freq: 1,
            max_decode_len: crate::seq2seq::MAX_DECODE_LEN,
            bleu_orders: vec![2, 3, 4],
            workers: 0,
            dataset: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err!("{}: {e}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| config_err!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.variants.is_empty() {
            return Err(config_err!("no variants selected"));
        }
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(config_err!("hidden, batch_size and max_epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err!("lr must be positive, weight_decay non-negative, dropout in [0, 1)"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(config_err!("clip_norm must be positive"));
        }
        if self.folds < 2 {
            return Err(config_err!("need at least 2 folds"));
        }
        if self.k_candidates.is_empty() && self.k == 0 {
            return Err(config_err!("k must be positive"));
        }
        if !self.k_candidates.is_empty() && (self.k_candidates.len() < 3 || self.k_candidates.windows(2).any(|w| w[0] >= w[1])) {
            return Err(config_err!("k_candidates must hold at least 3 strictly ascending values"));
        }
        if self.bpe_merges.is_none() && self.k_candidates.is_empty() && self.bpe_vocab < self.k {
            return Err(config_err!("bpe_vocab {} is below k {}", self.bpe_vocab, self.k));
        }
        if self.bleu_orders.is_empty() || self.bleu_orders.contains(&0) {
            return Err(config_err!("bleu_orders must be non-empty and positive"));
        }
        if self.min_word_freq == 0 || self.max_decode_len == 0 {
            return Err(config_err!("min_word_freq and max_decode_len must be positive"));
        }
        Ok(())
    }

    /// BPE vocabulary target for a codebook of `k` labels.
    pub fn bpe_target(&self, k: usize) -> usize {
        match self.bpe_merges {
            Some(m) => k + m,
            None => self.bpe_vocab.max(k),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            seed,
        }
    }

    /// Hash of every field that can change a result. Paths and the worker
    /// count are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.dataset = None;
        c.output_dir = None;
        c.workers = 0;
        content_hash(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.hidden, c.batch_size, c.k, c.bpe_vocab), (160, 64, 150, 200));
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn hash_ignores_paths_and_workers() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_dir: Some("x".into()), workers: 3, ..a.clone() };
        let c = ExperimentConfig { hidden: 8, ..a.clone() };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let bad = [
            ExperimentConfig { version: 2, ..Default::default() },
            ExperimentConfig { dropout: 1.0, ..Default::default() },
            ExperimentConfig { k_candidates: vec![4, 2, 8], ..Default::default() },
            ExperimentConfig { bpe_vocab: 10, ..Default::default() },
            ExperimentConfig { folds: 1, ..Default::default() },
        ];
        for c in bad {
            assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        }
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"hiden": 3}"#).is_err());
    }
}
