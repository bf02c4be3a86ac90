use std::collections::HashSet;

use actcap::datagen::{gen_corpus, gen_trajectory, manipulation_steps, ActionSpec, Dataset, GenParams, Verb};
use actcap::observation::ACTUATION_DIM;

const SIGMA: f64 = 0.02;

#[test]
fn verbs_separate_on_manipulation_steps() {
    let params = GenParams::default();
    for a in Verb::ALL {
        for b in Verb::ALL {
            if a == b {
                continue;
            }
            let sa = ActionSpec { verb: a, object: 1, source: 3, target: 0, duration_s: 40.0, seed: 11 };
            let sb = ActionSpec { verb: b, ..sa.clone() };
            let (oa, ob) = (gen_trajectory(&sa, &params).unwrap(), gen_trajectory(&sb, &params).unwrap());
            let steps = manipulation_steps(&sa);
            let mut total = 0.0;
            for &t in &steps {
                for d in 0..ACTUATION_DIM {
                    total += (oa.step(t)[d] - ob.step(t)[d]).abs();
                }
            }
            let mad = total / (steps.len() * ACTUATION_DIM) as f64;
            assert!(mad > 5.0 * SIGMA, "{a} vs {b}: {mad}");
        }
    }
}

fn mean_actuation(d: &Dataset) -> Vec<(Verb, Vec<f64>)> {
    d.samples
        .iter()
        .map(|s| {
            let v = s.observations.view();
            let m = (0..ACTUATION_DIM).map(|c| v.column(c).mean().unwrap()).collect();
            (s.spec.verb, m)
        })
        .collect()
}

#[test]
fn nearest_centroid_recovers_the_verb() {
    let params = GenParams::default();
    let train = mean_actuation(&gen_corpus(100, 1, 1, &params).unwrap());
    let test = mean_actuation(&gen_corpus(100, 1, 2, &params).unwrap());
    let centroids: Vec<Vec<f64>> = Verb::ALL
        .iter()
        .map(|&v| {
            let rows: Vec<&Vec<f64>> = train.iter().filter(|(w, _)| *w == v).map(|(_, m)| m).collect();
            (0..ACTUATION_DIM).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64).collect()
        })
        .collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let correct = test
        .iter()
        .filter(|(v, m)| {
            let guess = (0..5).min_by(|&i, &j| dist(m, &centroids[i]).total_cmp(&dist(m, &centroids[j]))).unwrap();
            Verb::ALL[guess] == *v
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn twenty_captions_have_at_least_five_forms() {
    let d = gen_corpus(50, 20, 3, &GenParams::default()).unwrap();
    for s in &d.samples {
        let forms: HashSet<String> = s.captions.iter().map(|c| c.text()).collect();
        assert!(forms.len() >= 5, "action {}: {forms:?}", s.id);
    }
}

#[test]
fn one_caption_per_class() {
    let d = gen_corpus(5, 1, 9, &GenParams::default()).unwrap();
    assert_eq!(d.caption_count(), 5);
    let verbs: HashSet<Verb> = d.samples.iter().map(|s| s.spec.verb).collect();
    assert_eq!(verbs.len(), 5);
}

#[test]
fn jsonl_is_byte_identical_and_round_trips() {
    let params = GenParams::default();
    let mut a = Vec::new();
    let mut b = Vec::new();
    gen_corpus(10, 3, 42, &params).unwrap().write_jsonl(&mut a).unwrap();
    gen_corpus(10, 3, 42, &params).unwrap().write_jsonl(&mut b).unwrap();
    assert_eq!(a, b);
    let back = Dataset::read_jsonl(a.as_slice()).unwrap();
    assert_eq!(back, gen_corpus(10, 3, 42, &params).unwrap());
    let line: serde_json::Value = serde_json::from_slice(a.split(|&c| c == b'\n').next().unwrap()).unwrap();
    for key in ["id", "verb", "object", "source", "target", "observations", "captions"] {
        assert!(line.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn gzip_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = gen_corpus(5, 2, 4, &GenParams::default()).unwrap();
    for name in ["d.jsonl", "d.jsonl.gz"] {
        let p = dir.path().join(name);
        d.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), d);
    }
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 0}\n").unwrap();
    assert_eq!(Dataset::load(&bad).unwrap_err().exit_code(), 3);
}
