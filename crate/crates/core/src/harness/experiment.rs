use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::folds::{make_folds, Fold, FoldPlan};
use super::report::{self, ActionSummary, ResultBundle, RunHeader};
use crate::chunker::{bpe_encode, bpe_train, BpeModel, ChunkSequence};
use crate::datagen::Dataset;
use crate::error::{config_err, data_err, Error, Result};
use crate::hashing::{bytes_hash, mix_seed};
use crate::metrics::{evaluate_corpus, write_metrics_csv, MetricRow};
use crate::nn::Tensor2;
use crate::observation::OBSERVATION_DIM;
use crate::quantizer::{elbow_select, kmeans_fit_detailed, quantize, stack_steps, Codebook, ElbowResult, KMeansParams, LabelSequence};
use crate::seq2seq::{train, Caption, CaptionVocab, ModelDims, ModelInput, Seq2SeqModel, TrainReport, TrainSample, Variant};

/// Prefixes an error with the fold and stage that raised it, keeping its kind.
fn at_stage(fold: usize, stage: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| {
        let msg = format!("fold {fold}, {stage}: {e}");
        match e {
            Error::Config(_) => Error::Config(msg),
            Error::Numeric(_) => Error::Numeric(msg),
            _ => Error::Data(msg),
        }
    }
}

/// Codebook and chunker fitted for one fold, plus every action's chunks.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub codebook: Codebook,
    pub bpe: BpeModel,
    pub elbow: Option<ElbowResult>,
    /// Chunk sequence of every dataset action, by position.
    pub chunks: Vec<ChunkSequence>,
}

impl Segmentation {
    /// Rebuilds chunk sequences of every action from saved artifacts.
    pub fn from_artifacts(dataset: &Dataset, codebook: Codebook, bpe: BpeModel) -> Result<Self> {
        if bpe.base_alphabet_size() != codebook.k {
            return Err(data_err!("merge table expects {} labels, codebook has {}", bpe.base_alphabet_size(), codebook.k));
        }
        let chunks = dataset
            .samples
            .iter()
            .map(|s| bpe_encode(&bpe, &quantize(&codebook, &s.observations)?))
            .collect::<Result<_>>()?;
        Ok(Segmentation { codebook, bpe, elbow: None, chunks })
    }
}

pub fn fit_segmentation(dataset: &Dataset, fit_on: &[usize], cfg: &ExperimentConfig, seed: u64) -> Result<Segmentation> {
    let points = stack_steps(fit_on.iter().map(|&i| &dataset.samples[i].observations));
    let params = KMeansParams { max_iter: cfg.kmeans_max_iter, tol: cfg.kmeans_tol, n_init: 1, seed };
    let (k, elbow) = if cfg.k_candidates.is_empty() {
        (cfg.k, None)
    } else {
        let e = elbow_select(points.view(), &cfg.k_candidates, &params)?;
        (e.k, Some(e))
    };
    let codebook = kmeans_fit_detailed(points.view(), k, &params)?.codebook;
    let labels: Vec<LabelSequence> = dataset
        .samples
        .iter()
        .map(|s| quantize(&codebook, &s.observations))
        .collect::<Result<_>>()?;
    let corpus: Vec<LabelSequence> = fit_on.iter().map(|&i| labels[i].clone()).collect();
    let bpe = bpe_train(&corpus, k, cfg.bpe_target(k))?;
    let chunks = labels.iter().map(|l| bpe_encode(&bpe, l)).collect::<Result<_>>()?;
    Ok(Segmentation { codebook, bpe, elbow, chunks })
}

/// Everything a fold's jobs share.
#[derive(Clone, Debug)]
pub struct FoldContext {
    pub fold: Fold,
    pub vocab: CaptionVocab,
    pub segmentation: Option<Segmentation>,
}

pub fn prepare_fold(dataset: &Dataset, fold: &Fold, cfg: &ExperimentConfig) -> Result<FoldContext> {
    let stage = at_stage(fold.index, "vocabulary");
    if fold.train.iter().chain(&fold.val).chain(&fold.test).any(|&i| i >= dataset.len()) {
        return Err(stage(data_err!("fold references an action outside the dataset")));
    }
    let vocab = CaptionVocab::build(fold.train.iter().flat_map(|&i| dataset.samples[i].captions.iter()), cfg.min_word_freq);
    let segmentation = if cfg.variants.iter().any(|v| v.uses_chunks()) {
        let all: Vec<usize> = (0..dataset.len()).collect();
        let fit_on = if cfg.global_segmentation { &all } else { &fold.train };
        let seed = mix_seed(cfg.seed, 1000 + fold.index as u64);
        Some(fit_segmentation(dataset, fit_on, cfg, seed).map_err(at_stage(fold.index, "segmentation"))?)
    } else {
        None
    };
    Ok(FoldContext { fold: fold.clone(), vocab, segmentation })
}

fn model_input(dataset: &Dataset, ctx: &FoldContext, variant: Variant, i: usize) -> ModelInput {
    match (&ctx.segmentation, variant.uses_chunks()) {
        (Some(seg), true) => ModelInput::Chunks(seg.chunks[i].clone()),
        _ => ModelInput::Raw(dataset.samples[i].observations.clone()),
    }
}

fn samples(dataset: &Dataset, ctx: &FoldContext, variant: Variant, ids: &[usize]) -> Vec<TrainSample> {
    ids.iter()
        .map(|&i| TrainSample {
            input: model_input(dataset, ctx, variant, i),
            captions: dataset.samples[i].captions.iter().map(|c| ctx.vocab.encode(c)).collect(),
        })
        .collect()
}

/// Saved model with the hashes of the artifacts it depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub fold: usize,
    pub dims: ModelDims,
    pub vocab: CaptionVocab,
    pub codebook_hash: Option<String>,
    pub merges_hash: Option<String>,
    pub report: TrainReport,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| data_err!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| data_err!("{}: {e}", path.display()))
    }

    pub fn model(&self) -> Result<Seq2SeqModel> {
        let mut m = Seq2SeqModel::new(self.dims, 0)?;
        m.load_tensors(&self.tensors)?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Dataset id of the test action.
    pub action: usize,
    pub caption: Caption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub config_hash: String,
    pub fold: usize,
    pub variant: Variant,
    pub action: usize,
    pub words: Vec<String>,
    /// One row per emitted decoder step, one column per encoder step.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct JobOutput {
    pub fold: usize,
    pub variant: Variant,
    pub rows: Vec<MetricRow>,
    pub generations: Vec<Generation>,
    pub attention: Vec<AttentionRecord>,
    pub checkpoint: Checkpoint,
    pub seconds: f64,
}

/// Greedy captions for `ids`, with attention rows for attention variants.
pub fn decode_actions(
    model: &Seq2SeqModel,
    vocab: &CaptionVocab,
    dataset: &Dataset,
    ctx: &FoldContext,
    ids: &[usize],
    max_len: usize,
) -> Result<Vec<(Generation, Option<Vec<Vec<f64>>>)>> {
    ids.iter()
        .map(|&i| {
            let input = model_input(dataset, ctx, model.variant(), i);
            let enc = model.encode(input.as_input())?;
            let (tokens, trace) = model.decode_greedy(&enc, max_len);
            let caption = vocab.decode(&tokens);
            Ok((Generation { action: dataset.samples[i].id, caption }, trace.map(|t| t.weights)))
        })
        .collect()
}

pub fn run_job(dataset: &Dataset, ctx: &FoldContext, variant: Variant, cfg: &ExperimentConfig) -> Result<JobOutput> {
    let started = Instant::now();
    let f = ctx.fold.index;
    let config_hash = cfg.config_hash();
    let chunk_vocab = ctx.segmentation.as_ref().map_or(0, |s| s.bpe.vocab_size());
    let dims = ModelDims {
        variant,
        input_dim: OBSERVATION_DIM,
        chunk_vocab: if variant.uses_chunks() { chunk_vocab } else { 0 },
        hidden: cfg.hidden,
        caption_vocab: ctx.vocab.len(),
    };
    let job_seed = mix_seed(mix_seed(cfg.seed, f as u64), variant as u64 + 1);
    let mut model = Seq2SeqModel::new(dims, job_seed).map_err(at_stage(f, "model"))?;
    let train_set = samples(dataset, ctx, variant, &ctx.fold.train);
    let val_set = samples(dataset, ctx, variant, &ctx.fold.val);
    let report = train(&mut model, &train_set, &val_set, &cfg.train_config(mix_seed(job_seed, 7)))
        .map_err(at_stage(f, &format!("training {variant}")))?;

    let decoded = decode_actions(&model, &ctx.vocab, dataset, ctx, &ctx.fold.test, cfg.max_decode_len)
        .map_err(at_stage(f, &format!("decoding {variant}")))?;
    let outputs: Vec<Caption> = decoded.iter().map(|(g, _)| g.caption.clone()).collect();
    let refs: Vec<Vec<Caption>> = ctx.fold.test.iter().map(|&i| dataset.samples[i].captions.clone()).collect();
    let rows = evaluate_corpus(&outputs, &refs, &cfg.bleu_orders)
        .map_err(at_stage(f, "scoring"))?
        .into_iter()
        .map(|r| MetricRow { variant: variant.name().to_string(), fold: f, n: r.n, score: r.aggregate })
        .collect();
    let mut generations = Vec::new();
    let mut attention = Vec::new();
    for (g, w) in decoded {
        if let Some(weights) = w {
            attention.push(AttentionRecord {
                config_hash: config_hash.clone(),
                fold: f,
                variant,
                action: g.action,
                words: g.caption.0.clone(),
                weights,
            });
        }
        generations.push(g);
    }
    let seg = ctx.segmentation.as_ref().filter(|_| variant.uses_chunks());
    let checkpoint = Checkpoint {
        version: 1,
        config_hash,
        fold: f,
        dims,
        vocab: ctx.vocab.clone(),
        codebook_hash: seg.map(|s| s.codebook.content_hash()),
        merges_hash: seg.map(|s| s.bpe.content_hash()),
        report,
        tensors: model.named_tensors(),
    };
    info!(
        "fold {f} {variant}: {} epochs, best {}, {:.1}s",
        checkpoint.report.train_curve.len(),
        checkpoint.report.best_epoch,
        started.elapsed().as_secs_f64()
    );
    Ok(JobOutput { fold: f, variant, rows, generations, attention, checkpoint, seconds: started.elapsed().as_secs_f64() })
}

pub fn job_dir(out: &Path, fold: usize, variant: Variant) -> PathBuf {
    out.join("jobs").join(format!("fold{fold:02}-{variant}"))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec(value)?)?;
    Ok(())
}

pub fn write_job(out: &Path, job: &JobOutput) -> Result<()> {
    let dir = job_dir(out, job.fold, job.variant);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("checkpoint.json"), &job.checkpoint)?;
    write_json(&dir.join("generations.json"), &job.generations)?;
    let mut csv = Vec::new();
    write_metrics_csv(&job.rows, &mut csv)?;
    fs::write(dir.join("metrics.csv"), csv)?;
    if !job.attention.is_empty() {
        let adir = dir.join("attention");
        fs::create_dir_all(&adir)?;
        for a in &job.attention {
            write_json(&adir.join(format!("action{:03}.json", a.action)), a)?;
        }
    }
    Ok(())
}

pub fn write_segmentation(out: &Path, ctx: &FoldContext) -> Result<()> {
    if let Some(seg) = &ctx.segmentation {
        let dir = out.join("segmentation");
        fs::create_dir_all(&dir)?;
        seg.codebook.save(&dir.join(format!("fold{:02}-codebook.json", ctx.fold.index)))?;
        seg.bpe.save(&dir.join(format!("fold{:02}-merges.txt", ctx.fold.index)))?;
        if let Some(e) = &seg.elbow {
            write_json(&dir.join(format!("fold{:02}-elbow.json", ctx.fold.index)), e)?;
        }
    }
    Ok(())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().map_err(|e| config_err!("worker pool: {e}"))
}

/// Runs every (fold, variant) job, writes the result bundle to `out` and
/// returns it. Results do not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &Dataset, out: &Path) -> Result<ResultBundle> {
    run_folds(cfg, dataset, out, None)
}

/// Like [`run_experiment`] but only for the listed folds; the others are
/// reported as missing unless already on disk.
pub fn run_folds(cfg: &ExperimentConfig, dataset: &Dataset, out: &Path, only: Option<&[usize]>) -> Result<ResultBundle> {
    use rayon::prelude::*;

    cfg.validate()?;
    if dataset.is_empty() {
        return Err(data_err!("dataset is empty"));
    }
    let plan = make_folds(dataset.len(), cfg.folds, cfg.val_actions, cfg.seed)?;
    fs::create_dir_all(out)?;
    write_run_header(out, cfg, dataset, &plan)?;
    let pool = pool(cfg.workers)?;
    let selected: Vec<&Fold> = match only {
        None => plan.folds.iter().collect(),
        Some(ids) => {
            if let Some(bad) = ids.iter().find(|&&i| i >= plan.folds.len()) {
                return Err(config_err!("fold {bad} out of range (plan has {})", plan.folds.len()));
            }
            plan.folds.iter().filter(|f| ids.contains(&f.index)).collect()
        }
    };

    let contexts: Vec<FoldContext> = pool.install(|| {
        selected
            .par_iter()
            .map(|f| prepare_fold(dataset, f, cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    for ctx in &contexts {
        write_segmentation(out, ctx)?;
    }
    let jobs: Vec<(usize, Variant)> = (0..contexts.len())
        .flat_map(|f| cfg.variants.iter().map(move |&v| (f, v)))
        .collect();
    let timing: Vec<(usize, Variant, f64, usize)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(f, v)| {
                let job = run_job(dataset, &contexts[f], v, cfg)?;
                write_job(out, &job)?;
                Ok((job.fold, v, job.seconds, job.checkpoint.report.train_curve.len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    fs::write(out.join("timing.json"), serde_json::to_vec_pretty(&timing)?)?;
    let bundle = report::load_bundle(out)?;
    report::write_report(out, &bundle)?;
    Ok(bundle)
}

/// Reloads a stored checkpoint, decodes its fold's test actions and scores
/// them again. The segmentation, when used, is read from the run directory.
pub fn evaluate_checkpoint(out: &Path, dataset: &Dataset, fold: usize, variant: Variant) -> Result<Vec<MetricRow>> {
    let bundle = report::load_bundle(out)?;
    if dataset_hash(dataset)? != bundle.header.dataset_hash {
        return Err(data_err!("dataset does not match the one this run was trained on"));
    }
    let f = bundle
        .header
        .plan
        .folds
        .get(fold)
        .ok_or_else(|| config_err!("fold {fold} out of range"))?
        .clone();
    let ckpt = Checkpoint::load(&job_dir(out, fold, variant).join("checkpoint.json"))?;
    let model = ckpt.model()?;
    let segmentation = if variant.uses_chunks() {
        let dir = out.join("segmentation");
        let codebook = Codebook::load(&dir.join(format!("fold{fold:02}-codebook.json")))?;
        let bpe = BpeModel::load(&dir.join(format!("fold{fold:02}-merges.txt")))?;
        if ckpt.codebook_hash.as_deref() != Some(&codebook.content_hash()) || ckpt.merges_hash.as_deref() != Some(&bpe.content_hash()) {
            return Err(data_err!("segmentation artifacts do not match the checkpoint"));
        }
        Some(Segmentation::from_artifacts(dataset, codebook, bpe)?)
    } else {
        None
    };
    let ctx = FoldContext { fold: f, vocab: ckpt.vocab.clone(), segmentation };
    let decoded = decode_actions(&model, &ctx.vocab, dataset, &ctx, &ctx.fold.test, bundle.config.max_decode_len)?;
    let outputs: Vec<Caption> = decoded.into_iter().map(|(g, _)| g.caption).collect();
    let refs: Vec<Vec<Caption>> = ctx.fold.test.iter().map(|&i| dataset.samples[i].captions.clone()).collect();
    Ok(evaluate_corpus(&outputs, &refs, &bundle.config.bleu_orders)?
        .into_iter()
        .map(|r| MetricRow { variant: variant.name().to_string(), fold, n: r.n, score: r.aggregate })
        .collect())
}

/// Archived config, fold plan and test-action summaries, written before any job.
pub fn write_run_header(out: &Path, cfg: &ExperimentConfig, dataset: &Dataset, plan: &FoldPlan) -> Result<()> {
    cfg.save(&out.join("config.json"))?;
    let header = RunHeader {
        config_hash: cfg.config_hash(),
        dataset_hash: dataset_hash(dataset)?,
        plan: plan.clone(),
        actions: dataset
            .samples
            .iter()
            .map(|s| ActionSummary {
                id: s.id,
                description: format!("{} {} {} -> {}", s.spec.verb, s.spec.object_name(), s.spec.source_name(), s.spec.target_name()),
                references: s.captions.clone(),
            })
            .collect(),
    };
    write_json(&out.join("run.json"), &header)
}

/// Hash of the dataset's JSONL serialization.
pub fn dataset_hash(dataset: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    dataset.write_jsonl(&mut buf)?;
    Ok(bytes_hash(&buf))
}
