use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{job_dir, write_json, Generation};
use super::folds::FoldPlan;
use crate::chunker::BpeModel;
use crate::error::{data_err, Result};
use crate::hashing::bytes_hash;
use crate::metrics::{markdown_table, read_metrics_csv, write_metrics_csv, MetricRow};
use crate::quantizer::Codebook;
use crate::seq2seq::{Caption, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub id: usize,
    pub description: String,
    pub references: Vec<Caption>,
}

/// Written before any job runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub config_hash: String,
    pub dataset_hash: String,
    pub plan: FoldPlan,
    pub actions: Vec<ActionSummary>,
}

/// A run directory as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub header: RunHeader,
    /// Variant-major, then fold order.
    pub rows: Vec<MetricRow>,
    pub generations: BTreeMap<(usize, Variant), Vec<Generation>>,
    /// Jobs without results on disk.
    pub missing: Vec<(usize, Variant)>,
    /// Codebook size and codebook/merge-table hashes per fold, when present.
    pub segmentation: Vec<Option<(usize, String, String)>>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| data_err!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| data_err!("{}: {e}", path.display()))
}

pub fn load_bundle(out: &Path) -> Result<ResultBundle> {
    let config = ExperimentConfig::load(&out.join("config.json"))?;
    let header: RunHeader = read_json(&out.join("run.json"))?;
    let mut rows = Vec::new();
    let mut generations = BTreeMap::new();
    let mut missing = Vec::new();
    for &v in &config.variants {
        for f in &header.plan.folds {
            let dir = job_dir(out, f.index, v);
            let (csv, gens) = (dir.join("metrics.csv"), dir.join("generations.json"));
            if csv.exists() && gens.exists() {
                rows.extend(read_metrics_csv(fs::File::open(&csv)?)?);
                generations.insert((f.index, v), read_json(&gens)?);
            } else {
                missing.push((f.index, v));
            }
        }
    }
    let seg_dir = out.join("segmentation");
    let segmentation = header
        .plan
        .folds
        .iter()
        .map(|f| {
            let cb = seg_dir.join(format!("fold{:02}-codebook.json", f.index));
            let mt = seg_dir.join(format!("fold{:02}-merges.txt", f.index));
            if cb.exists() && mt.exists() {
                let codebook = Codebook::load(&cb)?;
                Ok(Some((codebook.k, codebook.content_hash(), BpeModel::load(&mt)?.content_hash())))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    Ok(ResultBundle { config, header, rows, generations, missing, segmentation })
}

fn table_markdown(b: &ResultBundle) -> String {
    let mut s = String::new();
    writeln!(s, "# BLEU by model\n").unwrap();
    writeln!(s, "Config hash: `{}`\n", b.header.config_hash).unwrap();
    writeln!(
        s,
        "Each cell is the mean over {} folds of the per-fold mean best-reference sentence BLEU (0 to 100).\n",
        b.header.plan.folds.len()
    )
    .unwrap();
    if !b.missing.is_empty() {
        let gaps: Vec<String> = b.missing.iter().map(|(f, v)| format!("fold {f} {v}")).collect();
        writeln!(s, "**Incomplete run.** Missing jobs: {}. Means cover the folds present.\n", gaps.join(", ")).unwrap();
    }
    let mut rows = b.rows.clone();
    for &(_, v) in &b.missing {
        if !rows.iter().any(|r| r.variant == v.name()) {
            rows.extend(b.config.bleu_orders.iter().map(|&n| MetricRow { variant: v.name().into(), fold: 0, n, score: f64::NAN }));
        }
    }
    let table = markdown_table(&rows, &b.config.bleu_orders).replace(" NaN |", " n/a |");
    s.push_str(&table);
    s
}

fn transcript_markdown(b: &ResultBundle) -> String {
    let mut s = String::new();
    writeln!(s, "# Generation transcript\n").unwrap();
    writeln!(s, "Config hash: `{}`\n", b.header.config_hash).unwrap();
    let summary: BTreeMap<usize, &ActionSummary> = b.header.actions.iter().map(|a| (a.id, a)).collect();
    for f in &b.header.plan.folds {
        writeln!(s, "## Fold {}\n", f.index).unwrap();
        for &pos in &f.test {
            let Some(action) = b.header.actions.get(pos).and_then(|a| summary.get(&a.id)) else {
                continue;
            };
            writeln!(s, "### Action {}: {}\n", action.id, action.description).unwrap();
            writeln!(s, "| Method | Generation |\n|---|---|").unwrap();
            if let Some(r) = action.references.first() {
                writeln!(s, "| Reference | {} |", r.text()).unwrap();
            }
            for &v in &b.config.variants {
                let text = b
                    .generations
                    .get(&(f.index, v))
                    .and_then(|g| g.iter().find(|g| g.action == action.id))
                    .map_or_else(|| "(missing)".to_string(), |g| g.caption.text());
                let label = {
                    let n = v.name();
                    n[..1].to_uppercase() + &n[1..]
                };
                writeln!(s, "| {label} | {text} |").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

fn collect_files(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, root, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Writes `metrics.csv`, `table.md`, `transcript.md` and `manifest.json`
/// (config hash plus SHA-256 of every other artifact except `timing.json`).
/// Regenerating from the same directory rewrites identical bytes.
pub fn write_report(out: &Path, bundle: &ResultBundle) -> Result<()> {
    let mut csv = Vec::new();
    write_metrics_csv(&bundle.rows, &mut csv)?;
    fs::write(out.join("metrics.csv"), csv)?;
    fs::write(out.join("table.md"), table_markdown(bundle))?;
    fs::write(out.join("transcript.md"), transcript_markdown(bundle))?;

    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    files.retain(|p| p != Path::new("manifest.json") && p != Path::new("timing.json"));
    files.sort();
    let mut artifacts = BTreeMap::new();
    for p in files {
        artifacts.insert(p.to_string_lossy().replace('\\', "/"), bytes_hash(&fs::read(out.join(&p))?));
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        config_hash: &'a str,
        dataset_hash: &'a str,
        missing_jobs: &'a [(usize, Variant)],
        artifacts: BTreeMap<String, String>,
    }
    let manifest = Manifest {
        config_hash: &bundle.header.config_hash,
        dataset_hash: &bundle.header.dataset_hash,
        missing_jobs: &bundle.missing,
        artifacts,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

/// Rebuilds the report of an existing run directory.
pub fn report(out: &Path) -> Result<ResultBundle> {
    let bundle = load_bundle(out)?;
    write_report(out, &bundle)?;
    Ok(bundle)
}
