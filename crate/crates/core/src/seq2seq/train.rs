use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EncoderInput, ModelInput, Seq2SeqModel};
use crate::error::{config_err, Error, Result};
use crate::nn::{Adam, ParamStore};

/// Minibatch training schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 0.001,
            weight_decay: 1e-6,
            dropout: 0.5,
            max_epochs: 300,
            patience: 10,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// One action: its encoder input and every gold caption in training form.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub input: ModelInput,
    pub captions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch (with dropout).
    pub train_curve: Vec<f64>,
    /// Mean validation loss per epoch; empty without a validation set.
    pub val_curve: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub updates: u64,
}

/// Mean token cross-entropy of every caption, dropout off.
pub fn dataset_loss(model: &Seq2SeqModel, samples: &[TrainSample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut tokens = 0;
    for s in samples {
        let enc = model.encode(s.input.as_input())?;
        for gold in &s.captions {
            let (l, n) = model.caption_loss(&enc, gold)?;
            sum += l;
            tokens += n;
        }
    }
    Ok(sum / tokens.max(1) as f64)
}

/// Trains `model` on shuffled `(action, caption)` pairs and keeps the
/// parameters of the epoch with the lowest validation loss.
///
/// Stops after `patience` epochs without improvement or `max_epochs`. With
/// an empty validation set every epoch runs and the last one is kept.
pub fn train(model: &mut Seq2SeqModel, train: &[TrainSample], val: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    let pairs: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(a, s)| (0..s.captions.len()).map(move |c| (a, c)))
        .collect();
    if pairs.is_empty() {
        return Err(config_err!("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(config_err!("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam = Adam::default();
    let mut order = pairs.clone();
    let mut report = TrainReport {
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        best_epoch: 0,
        best_val_loss: None,
        updates: 0,
    };
    let mut best_params: Option<ParamStore> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grouped: BTreeMap<usize, Vec<&[usize]>> = BTreeMap::new();
            for &(a, c) in chunk {
                grouped.entry(a).or_default().push(&train[a].captions[c]);
            }
            let batch: Vec<(EncoderInput<'_>, Vec<&[usize]>)> = grouped
                .into_iter()
                .map(|(a, caps)| (train[a].input.as_input(), caps))
                .collect();
            model.params_mut().zero_grad();
            let loss = model.accumulate_batch(&batch, cfg.dropout, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss became {loss} at epoch {epoch}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            model.params_mut().clip_grad_norm(cfg.clip_norm);
            adam.step(model.params_mut(), cfg.lr, cfg.weight_decay);
            report.updates += 1;
        }
        if !model.params().all_finite() {
            return Err(Error::Numeric(format!("parameters became non-finite at epoch {epoch}")));
        }
        report.train_curve.push(epoch_loss / pairs.len() as f64);

        if val.is_empty() {
            report.best_epoch = epoch;
            continue;
        }
        let val_loss = dataset_loss(model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        report.val_curve.push(val_loss);
        debug!("epoch {epoch}: train {:.4} val {val_loss:.4}", report.train_curve[epoch]);
        if report.best_val_loss.is_none_or(|b| val_loss < b) {
            report.best_val_loss = Some(val_loss);
            report.best_epoch = epoch;
            best_params = Some(model.params().clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some(best) = best_params {
        model.params_mut().copy_values_from(&best);
    }
    Ok(report)
}
