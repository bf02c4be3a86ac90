//! K-means vector quantization of observation steps.
//!
//! A [`Codebook`] is fitted with Lloyd's algorithm from k-means++ seeds and
//! maps each observation vector to the index of its nearest centroid.
//! [`elbow_select`] picks the cluster count from the inertia curve.

use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, Result};
use crate::hashing::{content_hash, mix_seed};
use crate::observation::ObservationSequence;

pub const CODEBOOK_VERSION: u32 = 1;

/// Cluster index per observation step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSequence(pub Vec<usize>);

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fitted centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub version: u32,
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of the training points to their centroids.
    pub inertia: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia fit wins.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iter: 100,
            tol: 1e-6,
            n_init: 1,
            seed: 0,
        }
    }
}

/// A fitted codebook plus what the fit observed along the way.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Final assignment of every training point.
    pub labels: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared Euclidean distance, ties to the lowest index.
fn nearest(point: ArrayView1<'_, f64>, centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn distinct_rows(points: ArrayView2<'_, f64>) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn plus_plus_seeds(points: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.nrows();
    let mut centroids = vec![points.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        if d2[pick] == 0.0 {
            // Rounding walked off the end; take the last point not yet covered.
            pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct points remain");
        }
        let c = points.row(pick).to_vec();
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: ArrayView2<'_, f64>, k: usize, max_iter: usize, tol: f64, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>, usize) {
    let (n, dim) = points.dim();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let mut inertia = 0.0;
        for (i, p) in points.rows().into_iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            labels[i] = j;
            dists[i] = d;
            inertia += d;
        }
        trace.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            counts[labels[i]] += 1;
            sums[labels[i]].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }

        // Empty clusters move to the points currently worst served.
        let mut taken = vec![false; n];
        let mut repaired = false;
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            repaired = true;
            let far = (0..n)
                .filter(|&i| !taken[i] && counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("more distinct points than clusters");
            taken[far] = true;
            counts[labels[far]] -= 1;
            sums[labels[far]].iter_mut().zip(points.row(far)).for_each(|(s, x)| *s -= x);
            counts[j] = 1;
            sums[j] = points.row(far).to_vec();
        }

        let mut shift: f64 = 0.0;
        for j in 0..k {
            let inv = 1.0 / counts[j] as f64;
            let next: Vec<f64> = sums[j].iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(ArrayView1::from(&next[..]), &centroids[j]).sqrt());
            centroids[j] = next;
        }
        iterations += 1;
        if (!repaired && shift < tol) || iterations >= max_iter {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        labels[i] = j;
        inertia += d;
    }
    trace.push(inertia);
    (centroids, labels, trace, iterations)
}

/// Lloyd's k-means from k-means++ seeds; see [`KMeansFit`].
pub fn kmeans_fit_detailed(points: ArrayView2<'_, f64>, k: usize, params: &KMeansParams) -> Result<KMeansFit> {
    let n = points.nrows();
    if n == 0 {
        return Err(data_err!("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(config_err!("k-means needs k >= 1"));
    }
    if n < k {
        return Err(data_err!("k-means with k = {k} needs at least {k} points, got {n}"));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(data_err!("k-means input contains non-finite values"));
    }
    let distinct = distinct_rows(points);
    if distinct < k {
        return Err(data_err!(
            "k-means with k = {k} needs {k} distinct points, got {distinct}"
        ));
    }

    let mut best: Option<KMeansFit> = None;
    for restart in 0..params.n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, restart as u64));
        let (centroids, labels, trace, iterations) = lloyd(points, k, params.max_iter, params.tol, &mut rng);
        let inertia = *trace.last().expect("at least one assignment");
        if best.as_ref().is_none_or(|b| inertia < b.codebook.inertia) {
            best = Some(KMeansFit {
                codebook: Codebook {
                    version: CODEBOOK_VERSION,
                    k,
                    dim: points.ncols(),
                    centroids,
                    inertia,
                    seed: params.seed,
                },
                labels,
                inertia_trace: trace,
                iterations,
            });
        }
    }
    Ok(best.expect("n_init >= 1"))
}

pub fn kmeans_fit(points: ArrayView2<'_, f64>, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Codebook> {
    let params = KMeansParams {
        max_iter,
        tol,
        n_init: 1,
        seed,
    };
    kmeans_fit_detailed(points, k, &params).map(|f| f.codebook)
}

impl Codebook {
    /// Index of the nearest centroid, ties to the lowest index.
    pub fn label(&self, v: ArrayView1<'_, f64>) -> usize {
        nearest(v, &self.centroids).0
    }

    pub fn content_hash(&self) -> String {
        content_hash(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let book: Codebook = serde_json::from_str(&fs::read_to_string(path)?)?;
        book.validate()?;
        Ok(book)
    }

    fn validate(&self) -> Result<()> {
        if self.version != CODEBOOK_VERSION {
            return Err(data_err!("unsupported codebook version {}", self.version));
        }
        if self.centroids.len() != self.k || self.centroids.iter().any(|c| c.len() != self.dim) {
            return Err(data_err!("codebook centroids do not match k = {}, dim = {}", self.k, self.dim));
        }
        Ok(())
    }
}

/// Maps every step of `seq` to its nearest centroid.
pub fn quantize(codebook: &Codebook, seq: &ObservationSequence) -> Result<LabelSequence> {
    if seq.dim() != codebook.dim && !seq.is_empty() {
        return Err(config_err!(
            "sequence dim {} does not match codebook dim {}",
            seq.dim(),
            codebook.dim
        ));
    }
    Ok(LabelSequence(
        seq.view().rows().into_iter().map(|r| codebook.label(r)).collect(),
    ))
}

/// Stacks the steps of several sequences into one point matrix.
pub fn stack_steps<'a>(seqs: impl IntoIterator<Item = &'a ObservationSequence>) -> Array2<f64> {
    let seqs: Vec<_> = seqs.into_iter().collect();
    let dim = seqs.first().map_or(0, |s| s.dim());
    let n = seqs.iter().map(|s| s.len()).sum();
    let mut out = Array2::zeros((n, dim));
    let mut r = 0;
    for s in seqs {
        for step in s.view().rows() {
            out.row_mut(r).assign(&step);
            r += 1;
        }
    }
    out
}

/// Inertia curve and the chosen cluster count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k: usize,
    /// `(k, inertia)` for every candidate.
    pub curve: Vec<(usize, f64)>,
    /// Set when the curve has no point strictly below its chord.
    pub no_elbow: bool,
}

/// Fits every candidate and returns the one farthest below the chord that
/// joins the first and last points of the inertia curve, with both axes
/// rescaled to `[0, 1]`.
pub fn elbow_select(points: ArrayView2<'_, f64>, k_candidates: &[usize], params: &KMeansParams) -> Result<ElbowResult> {
    if k_candidates.len() < 3 {
        return Err(config_err!(
            "elbow selection needs at least 3 candidates, got {}",
            k_candidates.len()
        ));
    }
    if k_candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err!("elbow candidates must be strictly ascending"));
    }
    let curve = k_candidates
        .iter()
        .map(|&k| kmeans_fit_detailed(points, k, params).map(|f| (k, f.codebook.inertia)))
        .collect::<Result<Vec<_>>>()?;
    let (k, no_elbow) = elbow_from_curve(&curve);
    if no_elbow {
        warn!("inertia curve has no elbow; falling back to k = {k}");
    }
    Ok(ElbowResult { k, curve, no_elbow })
}

/// Chord-distance elbow of an inertia curve with ascending `k`.
///
/// Returns the chosen `k` and whether the curve lacked an elbow, in which
/// case the middle candidate is returned.
pub fn elbow_from_curve(curve: &[(usize, f64)]) -> (usize, bool) {
    assert!(curve.len() >= 3, "elbow needs at least 3 points");
    let (k_lo, i_lo) = curve[0];
    let (k_hi, i_hi) = curve[curve.len() - 1];
    let span_k = (k_hi - k_lo) as f64;
    let span_i = i_lo - i_hi;

    let mut best: Option<(usize, f64)> = None;
    if span_i > 0.0 {
        for &(k, inertia) in &curve[1..curve.len() - 1] {
            let x = (k - k_lo) as f64 / span_k;
            let y = (inertia - i_hi) / span_i;
            let below = (1.0 - x - y) / std::f64::consts::SQRT_2;
            if best.is_none_or(|(_, d)| below > d) {
                best = Some((k, below));
            }
        }
    }
    match best {
        Some((k, d)) if d > 1e-9 => (k, false),
        _ => (curve[curve.len() / 2].0, true),
    }
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&m| c2(m)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(n as u64);
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
