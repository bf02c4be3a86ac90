use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actcap::chunker::ChunkSequence;
use actcap::datagen::{gen_corpus, Dataset, GenParams, DEFAULT_MASTER_SEED};
use actcap::harness::{self, evaluate_checkpoint, fit_segmentation, make_folds, ExperimentConfig};
use actcap::metrics::{markdown_table, write_metrics_csv};
use actcap::seq2seq::{toy_gradient_check, Variant};
use actcap::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Action segmentation and captioning of robot observation streams.
#[derive(Parser)]
#[command(name = "actcap", version)]
struct Cli {
    /// Master seed (dataset generation) or experiment seed (everything else).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config JSON; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus as JSONL (gzip when the path ends in .gz).
    Datagen {
        #[arg(long, default_value_t = 50)]
        actions: usize,
        #[arg(long, default_value_t = 20)]
        captions: usize,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the fold plan as JSON.
    Folds {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and score every configured job, or only `--fold` ones.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        fold: Vec<usize>,
    },
    /// Re-score a stored checkpoint on its fold's test actions.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        variant: String,
    },
    /// Fit a codebook and merge table and write every action's chunks.
    Segment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Fit on this fold's training split instead of every action.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild table, transcript and manifest of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Compare analytic and numeric gradients at toy dimensions.
    Gradcheck {
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
}

/// Command-line mirrors of the config fields.
#[derive(Args, Default)]
struct ConfigArgs {
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k_candidates: Vec<usize>,
    #[arg(long)]
    bpe_vocab: Option<usize>,
    #[arg(long)]
    bpe_merges: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    val_actions: Option<usize>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    kmeans_tol: Option<f64>,
    #[arg(long)]
    global_segmentation: bool,
    #[arg(long)]
    min_word_freq: Option<usize>,
    #[arg(long)]
    max_decode_len: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    bleu_orders: Vec<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

impl ConfigArgs {
    fn resolve(self, file: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut c = match file {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.variants.is_empty() {
            c.variants = parse_variants(&self.variants)?;
        }
        if !self.k_candidates.is_empty() {
            c.k_candidates = self.k_candidates;
        }
        if !self.bleu_orders.is_empty() {
            c.bleu_orders = self.bleu_orders;
        }
        set(&mut c.k, self.k);
        set(&mut c.bpe_vocab, self.bpe_vocab);
        c.bpe_merges = self.bpe_merges.or(c.bpe_merges);
        set(&mut c.hidden, self.hidden);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.lr, self.lr);
        set(&mut c.weight_decay, self.weight_decay);
        set(&mut c.dropout, self.dropout);
        set(&mut c.max_epochs, self.max_epochs);
        set(&mut c.patience, self.patience);
        set(&mut c.clip_norm, self.clip_norm);
        set(&mut c.seed, seed);
        set(&mut c.folds, self.folds);
        c.val_actions = self.val_actions.or(c.val_actions);
        set(&mut c.kmeans_max_iter, self.kmeans_max_iter);
        set(&mut c.kmeans_tol, self.kmeans_tol);
        c.global_segmentation |= self.global_segmentation;
        set(&mut c.min_word_freq, self.min_word_freq);
        set(&mut c.max_decode_len, self.max_decode_len);
        set(&mut c.workers, self.workers);
        c.dataset = self.dataset.or(c.dataset);
        c.output_dir = self.output_dir.or(c.output_dir);
        c.validate()?;
        Ok(c)
    }
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    names.iter().map(|n| Variant::parse(n)).collect()
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("no dataset given (--dataset)".into()))?;
    Dataset::load(path)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.output_dir.as_deref().ok_or_else(|| Error::Config("no output directory given (--output-dir)".into()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct ChunkRecord<'a> {
    id: usize,
    chunks: &'a ChunkSequence,
}

fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Datagen { actions, captions, noise, out } => {
            let mut params = GenParams::default();
            set(&mut params.noise, noise);
            let ds = gen_corpus(actions, captions, cli.seed.unwrap_or(DEFAULT_MASTER_SEED), &params)?;
            ds.save(&out)?;
            eprintln!("wrote {} actions, {} captions to {}", ds.len(), ds.caption_count(), out.display());
        }
        Command::Folds { cfg } => {
            let cfg = cfg.resolve(file, cli.seed)?;
            let n = load_dataset(&cfg)?.len();
            print_json(&make_folds(n, cfg.folds, cfg.val_actions, cfg.seed)?)?;
        }
        Command::Train { cfg, fold } => {
            let cfg = cfg.resolve(file, cli.seed)?;
            let ds = load_dataset(&cfg)?;
            let out = output_dir(&cfg)?;
            let only = (!fold.is_empty()).then_some(fold.as_slice());
            let bundle = harness::run_folds(&cfg, &ds, out, only)?;
            print!("{}", markdown_table(&bundle.rows, &cfg.bleu_orders));
            if !bundle.missing.is_empty() {
                eprintln!("{} jobs not run yet", bundle.missing.len());
            }
        }
        Command::Eval { cfg, run, fold, variant } => {
            let cfg = cfg.resolve(file.or(Some(&run.join("config.json"))), cli.seed)?;
            let ds = load_dataset(&cfg)?;
            let rows = evaluate_checkpoint(&run, &ds, fold, Variant::parse(&variant)?)?;
            write_metrics_csv(&rows, std::io::stdout().lock())?;
        }
        Command::Segment { cfg, fold, out } => {
            let cfg = cfg.resolve(file, cli.seed)?;
            let ds = load_dataset(&cfg)?;
            let fit_on: Vec<usize> = match fold {
                None => (0..ds.len()).collect(),
                Some(f) => {
                    let plan = make_folds(ds.len(), cfg.folds, cfg.val_actions, cfg.seed)?;
                    plan.folds.get(f).ok_or_else(|| Error::Config(format!("fold {f} out of range")))?.train.clone()
                }
            };
            let seg = fit_segmentation(&ds, &fit_on, &cfg, cfg.seed)?;
            std::fs::create_dir_all(&out)?;
            seg.codebook.save(&out.join("codebook.json"))?;
            seg.bpe.save(&out.join("merges.txt"))?;
            let mut lines = Vec::new();
            for (s, chunks) in ds.samples.iter().zip(&seg.chunks) {
                serde_json::to_writer(&mut lines, &ChunkRecord { id: s.id, chunks })?;
                lines.push(b'\n');
            }
            std::fs::write(out.join("chunks.jsonl"), lines)?;
            let mean = seg.chunks.iter().map(|c| c.len()).sum::<usize>() as f64 / seg.chunks.len().max(1) as f64;
            eprintln!("k = {}, {} merges, mean chunk length {mean:.1}", seg.codebook.k, seg.bpe.merges().len());
        }
        Command::Report { run } => {
            let bundle = harness::report(&run)?;
            print!("{}", markdown_table(&bundle.rows, &bundle.config.bleu_orders));
        }
        Command::Gradcheck { variants } => {
            let variants = if variants.is_empty() { Variant::ALL.to_vec() } else { parse_variants(&variants)? };
            let seed = cli.seed.unwrap_or(17);
            let mut failed = Vec::new();
            for v in variants {
                let r = toy_gradient_check(v, seed)?;
                let ok = r.max_rel_error < 1e-4;
                println!("{v}: max relative error {:.3e} over {} entries {}", r.max_rel_error, r.entries, if ok { "ok" } else { "FAIL" });
                if !ok {
                    failed.push(v.name());
                }
            }
            if !failed.is_empty() {
                return Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
