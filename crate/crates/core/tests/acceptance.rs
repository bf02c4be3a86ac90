//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are never captured
//! and the long experiment runs once, in order. `ACCEPT_ONLY=1,4` selects
//! criteria; criterion 7 and 8 need 6 and run it when selected.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use actcap::chunker::{bpe_decode, bpe_encode, bpe_train};
use actcap::datagen::{gen_corpus, GenParams, DEFAULT_MASTER_SEED};
use actcap::harness::{job_dir, run_experiment, AttentionRecord, ExperimentConfig, ResultBundle};
use actcap::metrics::{bleu_best_reference, bleu_n, fold_means};
use actcap::quantizer::{adjusted_rand_index, elbow_select, kmeans_fit_detailed, KMeansParams, LabelSequence};
use actcap::seq2seq::{
    is_contiguous_row, toy_gradient_check, train, Caption, ModelDims, ModelInput, Seq2SeqModel, TrainConfig, TrainSample,
    Variant, EOS,
};
use actcap::{chunker::ChunkSequence, observation::ObservationSequence};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Criteria known to fail on the default corpus. They still print FAIL; the
/// run exits non-zero if any other criterion fails or one of these passes.
const DOCUMENTED_FAILURES: &[usize] = &[6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        match toy_gradient_check(v, 17) {
            Ok(r) => {
                worst = worst.max(r.max_rel_error);
                parts.push(format!("{v} {:.1e}", r.max_rel_error));
            }
            Err(e) => return outcome(false, format!("{v}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst < 1e-4 && secs < 60.0, format!("max rel error {worst:.2e} (< 1e-4) [{}], {secs:.1}s (< 60s)", parts.join(", ")))
}

fn clustering_oracle() -> Outcome {
    let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 75f64.sqrt()]];
    let mut min_ari = f64::INFINITY;
    let mut elbows = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut pts = Array2::zeros((300, 2));
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for i in 0..100 {
                pts[[c * 100 + i, 0]] = center[0] + noise.sample(&mut rng);
                pts[[c * 100 + i, 1]] = center[1] + noise.sample(&mut rng);
                truth.push(c);
            }
        }
        let params = KMeansParams { seed, ..KMeansParams::default() };
        let fit = kmeans_fit_detailed(pts.view(), 3, &params).unwrap();
        min_ari = min_ari.min(adjusted_rand_index(&fit.labels, &truth));
        elbows.push(elbow_select(pts.view(), &(1..=8).collect::<Vec<_>>(), &params).unwrap().k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut monotone = 0;
    for case in 0..100u64 {
        let (n, dim, k) = (rng.gen_range(10..80), rng.gen_range(1..5), rng.gen_range(1..8));
        let pts = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-3.0..3.0));
        let fit = kmeans_fit_detailed(pts.view(), k, &KMeansParams { seed: case, tol: 0.0, ..KMeansParams::default() }).unwrap();
        if fit.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)) {
            monotone += 1;
        }
    }
    outcome(
        min_ari >= 0.95 && elbows.iter().all(|&k| k == 3) && monotone == 100,
        format!("min ARI {min_ari:.4} (>= 0.95) over 5 seeds, elbow picks {elbows:?} (all 3), inertia monotone on {monotone}/100 datasets"),
    )
}

fn bpe_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = 0;
    for case in 0..1000 {
        let alphabet = rng.gen_range(2..8);
        let corpus: Vec<LabelSequence> = (0..rng.gen_range(1..6))
            .map(|_| LabelSequence((0..rng.gen_range(1..40)).map(|_| rng.gen_range(0..alphabet)).collect()))
            .collect();
        let model = bpe_train(&corpus, alphabet, alphabet + 1 + case % 20).unwrap();
        let probe = LabelSequence((0..rng.gen_range(0..60)).map(|_| rng.gen_range(0..alphabet)).collect());
        let all = corpus.iter().chain(std::iter::once(&probe)).all(|s| {
            let enc = bpe_encode(&model, s).unwrap();
            enc.len() <= s.len() && &bpe_decode(&model, &enc).unwrap() == s
        });
        ok += all as usize;
    }
    let corpus = [LabelSequence(vec![0, 1, 0, 1, 2, 0, 1])];
    let model = bpe_train(&corpus, 3, 4).unwrap();
    let enc = bpe_encode(&model, &corpus[0]).unwrap();
    let example = model.merges() == [(0, 1)] && enc.0 == [3, 3, 2, 3];
    outcome(ok == 1000 && example, format!("round trip and no growth on {ok}/1000 sequences, A B A B C A B -> merges {:?}, tokens {:?}", model.merges(), enc.0))
}

fn bleu_fixtures() -> Outcome {
    let reference = Caption::from_text("a b c d");
    let half = bleu_n(&Caption::from_text("a b x d"), &reference, 2).unwrap();
    let words = ["the", "cup", "put", "on", "table", "a", "go"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random = |rng: &mut ChaCha8Rng, lo: usize| {
        let n = rng.gen_range(lo..12);
        Caption((0..n).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect())
    };
    let mut identity = 0;
    let mut invariant = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..5);
        let c = random(&mut rng, n);
        identity += (bleu_n(&c, &c, n).unwrap() == 100.0) as usize;
        let refs: Vec<Caption> = (0..rng.gen_range(1..7)).map(|_| random(&mut rng, 0)).collect();
        let mut shuffled = refs.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let cand = random(&mut rng, 0);
        invariant += (bleu_best_reference(&cand, &refs, n).unwrap() == bleu_best_reference(&cand, &shuffled, n).unwrap()) as usize;
    }
    let exact = bleu_n(&reference, &reference, 4).unwrap();
    outcome(
        exact == 100.0 && identity == 100 && half == 50.0 && invariant == 100,
        format!("identity {exact} and {identity}/100 random, \"a b x d\" BLEU-2 {half}, permutation invariant on {invariant}/100"),
    )
}

fn capacity() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for variant in Variant::ALL {
        let dims = ModelDims { variant, input_dim: 22, chunk_vocab: 12, hidden: 16, caption_vocab: 10 };
        let mut model = Seq2SeqModel::new(dims, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = if variant.uses_chunks() {
            ModelInput::Chunks(ChunkSequence((0..10).map(|_| rng.gen_range(0..12)).collect()))
        } else {
            let x = Array2::from_shape_fn((40, 22), |_| rng.gen_range(-1.0..1.0));
            ModelInput::Raw(ObservationSequence::from_array(x).unwrap())
        };
        let gold = vec![3, 7, 4, 9, 5, EOS];
        let sample = TrainSample { input, captions: vec![gold.clone()] };
        let cfg = TrainConfig { lr: 0.01, dropout: 0.0, weight_decay: 0.0, max_epochs: 500, ..TrainConfig::default() };
        let report = train(&mut model, std::slice::from_ref(&sample), &[], &cfg).unwrap();
        let enc = model.encode(sample.input.as_input()).unwrap();
        let loss = model.decode_train(&enc, &gold, None::<(f64, &mut ChaCha8Rng)>).unwrap();
        let (ids, _) = model.decode_greedy(&enc, 30);
        let ok = loss < 0.01 && report.updates <= 500 && ids == gold[..gold.len() - 1];
        pass &= ok;
        parts.push(format!("{variant} loss {loss:.1e} after {} updates{}", report.updates, if ok { "" } else { " (wrong)" }));
    }
    outcome(pass, parts.join(", "))
}

fn experiment_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ordering.json");
    ExperimentConfig::load(&path).expect("configs/ordering.json")
}

fn run_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

struct Experiment {
    out: PathBuf,
    bundle: ResultBundle,
    seconds: f64,
}

fn ordering(exp: &Experiment) -> Outcome {
    let means: HashMap<String, f64> = fold_means(&exp.bundle.rows)
        .into_iter()
        .filter_map(|(v, cells)| cells.iter().find(|(n, _)| *n == 2).map(|&(_, s)| (v, s)))
        .collect();
    let vanilla = means.get("vanilla").copied().unwrap_or(f64::NAN);
    let margins: Vec<(String, f64)> =
        ["explicit", "implicit", "hybrid"].iter().map(|v| (v.to_string(), means.get(*v).copied().unwrap_or(f64::NAN) - vanilla)).collect();
    let pass = exp.bundle.missing.is_empty() && margins.iter().all(|(_, m)| *m >= 10.0) && exp.seconds <= 1800.0;
    let shown: Vec<String> = margins.iter().map(|(v, m)| format!("{v} {:.1} ({m:+.1})", vanilla + m)).collect();
    outcome(pass, format!("10-fold BLEU-2: vanilla {vanilla:.1}, {} (each needs >= +10), {:.0}s (<= 1800s)", shown.join(", "), exp.seconds))
}

fn attention_shape(exp: &Experiment) -> Outcome {
    let mut rows = 0;
    let mut bad_sum = 0;
    let mut implicit_rows = 0;
    let mut contiguous = 0;
    for f in &exp.bundle.header.plan.folds {
        for v in [Variant::Implicit, Variant::Hybrid] {
            let Ok(entries) = fs::read_dir(job_dir(&exp.out, f.index, v).join("attention")) else { continue };
            for entry in entries {
                let rec: AttentionRecord = serde_json::from_slice(&fs::read(entry.unwrap().path()).unwrap()).unwrap();
                for row in &rec.weights {
                    rows += 1;
                    bad_sum += ((row.iter().sum::<f64>() - 1.0).abs() > 1e-6) as usize;
                    if v == Variant::Implicit {
                        implicit_rows += 1;
                        contiguous += is_contiguous_row(row) as usize;
                    }
                }
            }
        }
    }
    let frac = contiguous as f64 / implicit_rows.max(1) as f64;
    outcome(
        rows > 0 && bad_sum == 0 && implicit_rows > 0 && frac >= 0.5,
        format!("{} of {rows} rows off unit sum, implicit contiguous on {contiguous}/{implicit_rows} decoder steps ({:.0}%, >= 50%)", bad_sum, 100.0 * frac),
    )
}

fn determinism(exp: &Experiment) -> Outcome {
    let archived = ExperimentConfig::load(&exp.out.join("config.json")).unwrap();
    let data = gen_corpus(50, 20, DEFAULT_MASTER_SEED, &GenParams::default()).unwrap();
    let again = run_dir("rerun");
    if let Err(e) = run_experiment(&archived, &data, &again) {
        return outcome(false, format!("rerun failed: {e}"));
    }
    let a = fs::read(exp.out.join("metrics.csv")).unwrap();
    let b = fs::read(again.join("metrics.csv")).unwrap();
    outcome(a == b, format!("rerun metrics.csv {} ({} bytes)", if a == b { "identical" } else { "differs" }, a.len()))
}

fn main() {
    // `cargo test -- --list` and filters come through here too.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPT_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|o| o.contains(&c));
    let mut failed = Vec::new();
    let mut report = |c: usize, name: &str, o: Outcome| {
        println!("{} criterion {c} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(c);
        }
    };
    let quick: [(usize, &str, fn() -> Outcome); 5] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "clustering oracle", clustering_oracle),
        (3, "BPE laws", bpe_laws),
        (4, "BLEU fixtures", bleu_fixtures),
        (5, "capacity", capacity),
    ];
    for (c, name, f) in quick {
        if wanted(c) {
            report(c, name, f());
        }
    }
    if wanted(6) || wanted(7) || wanted(8) {
        let cfg = experiment_config();
        let data = gen_corpus(50, 20, DEFAULT_MASTER_SEED, &GenParams::default()).unwrap();
        let out = run_dir("run");
        let t = Instant::now();
        match run_experiment(&cfg, &data, &out) {
            Ok(bundle) => {
                let exp = Experiment { out, bundle, seconds: t.elapsed().as_secs_f64() };
                print!("{}", fs::read_to_string(exp.out.join("table.md")).unwrap_or_default());
                if wanted(6) {
                    report(6, "ordering", ordering(&exp));
                }
                if wanted(7) {
                    report(7, "attention shape", attention_shape(&exp));
                }
                if wanted(8) {
                    report(8, "determinism", determinism(&exp));
                }
            }
            Err(e) => {
                for (c, name) in [(6, "ordering"), (7, "attention shape"), (8, "determinism")] {
                    if wanted(c) {
                        report(c, name, outcome(false, format!("experiment failed: {e}")));
                    }
                }
            }
        }
    }
    let documented: Vec<usize> = failed.iter().copied().filter(|c| DOCUMENTED_FAILURES.contains(c)).collect();
    let unexpected: Vec<usize> = failed.iter().copied().filter(|c| !DOCUMENTED_FAILURES.contains(c)).collect();
    let resolved: Vec<usize> =
        DOCUMENTED_FAILURES.iter().copied().filter(|c| wanted(*c) && !failed.contains(c)).collect();
    for c in &documented {
        println!("note: criterion {c} fails on this corpus; the analysis is in README.md (Results)");
    }
    if !resolved.is_empty() {
        eprintln!("criteria {resolved:?} now pass; remove them from DOCUMENTED_FAILURES and update README.md");
    }
    if !unexpected.is_empty() || !resolved.is_empty() {
        eprintln!("failed criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
