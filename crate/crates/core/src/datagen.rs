//! Scripted robot actions paired with template captions.
//!
//! Each action runs three phases. The robot approaches the source location,
//! manipulates the object, then retreats toward the target location. Joint
//! postures move between per-verb keyframes along clamped smoothstep ramps.
//! The visual channels carry the identity embedding of whatever is in view:
//! the source location while approaching, the object while manipulating and
//! the target location while retreating.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, data_err, Result};
use crate::hashing::mix_seed;
use crate::observation::{step_count, ObservationSequence, ACTUATION_DIM, OBSERVATION_DIM, VISUAL_DIM};
use crate::seq2seq::Caption;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Bring,
    Put,
    PickUp,
    Drop,
    GoToSee,
}

impl Verb {
    pub const ALL: [Verb; 5] = [Verb::Bring, Verb::Put, Verb::PickUp, Verb::Drop, Verb::GoToSee];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Bring => "bring",
            Verb::Put => "put",
            Verb::PickUp => "pick_up",
            Verb::Drop => "drop",
            Verb::GoToSee => "go_to_see",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Surface forms a caption may use for this verb.
    pub fn lexemes(self) -> &'static [&'static str] {
        match self {
            Verb::Bring => &["bring", "get", "fetch"],
            Verb::Put => &["put", "place", "set"],
            Verb::PickUp => &["pick up", "grab", "take"],
            Verb::Drop => &["drop", "let go of", "release"],
            Verb::GoToSee => &["go to see", "go and look at", "check"],
        }
    }

    /// Steps of the reach, manipulation and departure motions.
    fn motion_steps(self) -> [usize; 4] {
        let manip = match self {
            Verb::Bring => 9,
            Verb::Put => 8,
            Verb::PickUp => 10,
            Verb::Drop => 6,
            Verb::GoToSee => 12,
        };
        [12, 8, manip, 12]
    }

    /// Joint keyframes (torso, head pan, head tilt, five arm joints, gripper)
    /// at the start, after reaching, after manipulating and at the end. Every
    /// verb ends stowed; only the gripper tells whether something is held.
    fn keyframes(self) -> [[f64; 9]; 4] {
        const REST: [f64; 9] = [0.0; 9];
        const STOW: [f64; 9] = [0.2, 0.0, 0.0, 0.3, -0.9, 0.0, 0.2, 0.0, 0.0];
        const STOW_OPEN: [f64; 9] = [0.2, 0.0, 0.0, 0.3, -0.9, 0.0, 0.2, 0.0, 1.0];
        match self {
            Verb::Bring => [
                REST,
                [0.2, 0.0, -0.4, 0.6, -0.8, 0.0, -0.5, 0.0, 1.0],
                [0.3, 0.0, -0.2, 0.3, -1.2, 0.0, -0.2, 0.0, 0.0],
                STOW,
            ],
            Verb::Put => [
                [0.1, 0.0, 0.2, 0.2, -1.1, 0.4, 0.2, 0.0, 0.0],
                [0.1, 0.0, -0.5, 0.8, -0.4, 0.3, -0.8, 0.0, 0.0],
                [0.1, 0.0, -0.5, 0.8, -0.4, 0.3, -0.8, 0.0, 1.0],
                STOW_OPEN,
            ],
            Verb::PickUp => [
                REST,
                [0.0, 0.0, -0.6, 0.9, -0.3, -0.3, -0.9, 0.5, 1.0],
                [0.6, 0.0, -0.3, 1.2, -0.9, -0.3, 0.4, 0.5, 0.0],
                STOW,
            ],
            Verb::Drop => [
                [0.5, 0.0, 0.0, 1.0, -0.9, 0.0, 0.3, 0.0, 0.0],
                [0.5, 0.0, -0.7, 1.3, -0.2, 0.0, 0.9, -0.5, 0.0],
                [0.5, 0.0, -0.7, 1.3, -0.2, 0.0, 0.9, -0.5, 1.0],
                STOW_OPEN,
            ],
            Verb::GoToSee => [
                REST,
                [0.4, 0.6, -0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.4, -0.6, -0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                STOW,
            ],
        }
    }
}

impl std::fmt::Display for Verb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Objects the robot handles: canonical name then synonyms.
pub const OBJECTS: [&[&str]; 6] = [
    &["cup", "mug"],
    &["bottle"],
    &["book", "notebook"],
    &["ball"],
    &["toy dog", "stuffed dog"],
    &["sauce", "sauce bottle"],
];

/// Locations in the scene with planar base coordinates.
pub const LOCATIONS: [(&[&str], [f64; 2]); 5] = [
    (&["table", "dining table"], [0.45, 0.15]),
    (&["shelf", "bookshelf"], [-0.3, 0.45]),
    (&["sofa", "couch"], [0.15, -0.45]),
    (&["desk"], [-0.45, -0.15]),
    (&["kitchen counter", "counter"], [0.6, -0.3]),
];

const EMBEDDING_SEED: u64 = 0x5eed_e3b0;

/// Fixed identity vector of the `i`-th entry of the combined entity catalog:
/// objects, then locations, then the hallway seen while idle.
pub fn identity_embedding(entity: usize) -> [f64; VISUAL_DIM] {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(EMBEDDING_SEED, entity as u64));
    let mut e = [0.0; VISUAL_DIM];
    for x in e.iter_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    e
}

fn object_entity(object: usize) -> usize {
    object
}

fn location_entity(location: usize) -> usize {
    OBJECTS.len() + location
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub verb: Verb,
    /// Index into [`OBJECTS`].
    pub object: usize,
    /// Index into [`LOCATIONS`].
    pub source: usize,
    pub target: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl ActionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.object >= OBJECTS.len() {
            return Err(config_err!("object id {} out of range", self.object));
        }
        if self.source >= LOCATIONS.len() || self.target >= LOCATIONS.len() {
            return Err(config_err!("location id out of range"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config_err!("duration must be positive, got {}", self.duration_s));
        }
        Ok(())
    }

    pub fn object_name(&self) -> &'static str {
        OBJECTS[self.object][0]
    }

    pub fn source_name(&self) -> &'static str {
        LOCATIONS[self.source].0[0]
    }

    pub fn target_name(&self) -> &'static str {
        LOCATIONS[self.target].0[0]
    }
}

/// Noise and timing knobs of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Standard deviation of the Gaussian noise on every channel.
    pub noise: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { noise: 0.02, min_duration_s: 18.0, max_duration_s: 60.0 }
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Consecutive pieces of an action, in time order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    /// Waiting at home before moving.
    Idle,
    /// Driving from home to the source location.
    Navigate,
    Reach,
    Manipulate,
    /// Holding the manipulated pose.
    Hold,
    /// Driving from the source to the target location.
    Depart,
    /// Waiting at the target.
    Wait,
}

impl Segment {
    /// 0 approach, 1 manipulate, 2 retreat.
    pub fn phase(self) -> usize {
        match self {
            Segment::Idle | Segment::Navigate | Segment::Reach => 0,
            Segment::Manipulate | Segment::Hold => 1,
            Segment::Depart | Segment::Wait => 2,
        }
    }
}

/// Segment lengths in steps for an action of `steps` samples. Motions have
/// fixed lengths; the remaining time is idle, split at random between the
/// start (at most a tenth), the hold and the final wait.
pub fn timeline(spec: &ActionSpec, steps: usize) -> Vec<(Segment, usize)> {
    let [nav, reach, manip, depart] = spec.verb.motion_steps();
    let motion = nav + reach + manip + depart;
    let scaled = |n: usize| if steps >= motion { n } else { (n * steps / motion).max(1) };
    let (nav, reach, manip, depart) = (scaled(nav), scaled(reach), scaled(manip), scaled(depart));
    let idle = steps.saturating_sub(nav + reach + manip + depart);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 2));
    let start = (idle as f64 * 0.1 * rng.gen::<f64>()) as usize;
    let hold = ((idle - start) as f64 * rng.gen::<f64>()) as usize;
    let wait = idle - start - hold;
    let mut t = vec![
        (Segment::Idle, start),
        (Segment::Navigate, nav),
        (Segment::Reach, reach),
        (Segment::Manipulate, manip),
        (Segment::Hold, hold),
        (Segment::Depart, depart),
        (Segment::Wait, wait),
    ];
    // Rounding of very short actions may overshoot; trim from the end.
    let mut excess = t.iter().map(|s| s.1).sum::<usize>().saturating_sub(steps);
    for seg in t.iter_mut().rev() {
        let cut = excess.min(seg.1);
        seg.1 -= cut;
        excess -= cut;
    }
    t
}

/// Segment of every step and progress through it in `[0, 1]`.
fn segment_per_step(spec: &ActionSpec, steps: usize) -> Vec<(Segment, f64)> {
    let mut out = Vec::with_capacity(steps);
    for (seg, len) in timeline(spec, steps) {
        for i in 0..len {
            out.push((seg, (i as f64 + 1.0) / len as f64));
        }
    }
    out
}

fn lerp<const N: usize>(a: &[f64; N], b: &[f64; N], s: f64) -> [f64; N] {
    std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
}

const HALLWAY: usize = OBJECTS.len() + LOCATIONS.len();
/// People passing through the camera view.
const PASSERS_BY: std::ops::Range<usize> = HALLWAY + 1..HALLWAY + 5;

/// Entity briefly covering the view at each step, if any. Passers-by appear
/// only while the robot idles or waits.
fn clutter(spec: &ActionSpec, segs: &[(Segment, f64)]) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 3));
    let mut out = vec![None; segs.len()];
    let mut t = 0;
    while t < segs.len() {
        t += rng.gen_range(4..=12);
        let (len, who) = (rng.gen_range(2..=6), rng.gen_range(PASSERS_BY));
        for i in t..(t + len).min(segs.len()) {
            if matches!(segs[i].0, Segment::Idle | Segment::Wait) {
                out[i] = Some(who);
            }
        }
        t += len;
    }
    out
}

/// Noise-free observation at one step.
fn clean_step(spec: &ActionSpec, seg: Segment, u: f64) -> [f64; OBSERVATION_DIM] {
    let k = spec.verb.keyframes();
    let s = smoothstep(u);
    let joints = match seg {
        Segment::Idle | Segment::Navigate => k[0],
        Segment::Reach => lerp(&k[0], &k[1], s),
        Segment::Manipulate => lerp(&k[1], &k[2], s),
        Segment::Hold => k[2],
        Segment::Depart => lerp(&k[2], &k[3], s),
        Segment::Wait => k[3],
    };
    let home = [0.0, 0.0];
    let src = LOCATIONS[spec.source].1;
    let tgt = LOCATIONS[spec.target].1;
    let heading = |p: [f64; 2], q: [f64; 2]| (q[1] - p[1]).atan2(q[0] - p[0]) / (4.0 * std::f64::consts::PI);
    let (h_in, h_out) = (heading(home, src), heading(src, tgt));
    let (base, yaw) = match seg {
        Segment::Idle => (home, 0.0),
        Segment::Navigate => (lerp(&home, &src, s), s * h_in),
        Segment::Reach | Segment::Manipulate | Segment::Hold => (src, h_in),
        Segment::Depart => (lerp(&src, &tgt, s), h_in + s * (h_out - h_in)),
        Segment::Wait => (tgt, h_out),
    };
    let e = identity_embedding;
    let visual = match seg {
        Segment::Idle => e(HALLWAY),
        Segment::Navigate => lerp(&e(HALLWAY), &e(location_entity(spec.source)), s),
        Segment::Reach => e(location_entity(spec.source)),
        Segment::Manipulate | Segment::Hold => e(object_entity(spec.object)),
        Segment::Depart => lerp(&e(location_entity(spec.source)), &e(location_entity(spec.target)), s),
        Segment::Wait => e(location_entity(spec.target)),
    };
    let mut out = [0.0; OBSERVATION_DIM];
    out[..9].copy_from_slice(&joints);
    out[9] = base[0];
    out[10] = base[1];
    out[11] = yaw;
    out[ACTUATION_DIM..].copy_from_slice(&visual);
    out
}

pub fn gen_trajectory(spec: &ActionSpec, params: &GenParams) -> Result<ObservationSequence> {
    spec.validate()?;
    let steps = step_count(spec.duration_s);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, params.noise).map_err(|e| config_err!("noise: {e}"))?;
    let mut data = Array2::zeros((steps, OBSERVATION_DIM));
    let segs = segment_per_step(spec, steps);
    for (t, (&(seg, u), extra)) in segs.iter().zip(clutter(spec, &segs)).enumerate() {
        let mut clean = clean_step(spec, seg, u);
        if let Some(who) = extra {
            clean[ACTUATION_DIM..].copy_from_slice(&identity_embedding(who));
        }
        for (d, x) in clean.iter().enumerate() {
            let eps = if params.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            data[[t, d]] = x + eps;
        }
    }
    ObservationSequence::from_array(data)
}

/// Steps of the manipulation phase (manipulation motion and hold).
pub fn manipulation_steps(spec: &ActionSpec) -> Vec<usize> {
    let steps = step_count(spec.duration_s);
    segment_per_step(spec, steps)
        .into_iter()
        .enumerate()
        .filter(|(_, (seg, _))| seg.phase() == 1)
        .map(|(t, _)| t)
        .collect()
}

fn pick<'a, R: Rng>(options: &[&'a str], rng: &mut R) -> &'a str {
    options.choose(rng).copied().expect("non-empty bank")
}

/// `n` paraphrases of the action, drawn from templates and synonym banks.
pub fn gen_captions<R: Rng>(spec: &ActionSpec, n: usize, rng: &mut R) -> Result<Vec<Caption>> {
    spec.validate()?;
    if n == 0 {
        return Err(config_err!("caption count must be at least 1"));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let verb = pick(spec.verb.lexemes(), rng);
        let obj = pick(OBJECTS[spec.object], rng);
        let src = pick(LOCATIONS[spec.source].0, rng);
        let tgt = pick(LOCATIONS[spec.target].0, rng);
        let text = match spec.verb {
            Verb::Bring => match rng.gen_range(0..3) {
                0 => format!("{verb} the {obj} from the {src} to the {tgt}"),
                1 => format!("{verb} the {obj} on the {src} to the {tgt}"),
                _ => format!("{verb} the {obj} to the {tgt} from the {src}"),
            },
            Verb::Put => match rng.gen_range(0..3) {
                0 => format!("{verb} the {obj} on the {tgt}"),
                1 => format!("{verb} the {obj} onto the {tgt}"),
                _ => format!("{verb} the {obj} down on the {tgt}"),
            },
            Verb::PickUp => match rng.gen_range(0..3) {
                0 => format!("{verb} the {obj} from the {src}"),
                1 => format!("{verb} the {obj} on the {src}"),
                _ => format!("{verb} the {obj} off the {src}"),
            },
            Verb::Drop => match rng.gen_range(0..3) {
                0 => format!("{verb} the {obj} from the {src}"),
                1 => format!("{verb} the {obj} near the {src}"),
                _ => format!("{verb} the {obj} by the {src}"),
            },
            Verb::GoToSee => match rng.gen_range(0..3) {
                0 => format!("{verb} the {obj} on the {src}"),
                1 => format!("{verb} the {obj} at the {src}"),
                _ => format!("{verb} the {obj} near the {src}"),
            },
        };
        out.push(Caption::from_text(&text));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub id: usize,
    pub spec: ActionSpec,
    pub observations: ObservationSequence,
    pub captions: Vec<Caption>,
}

/// A generated corpus, one sample per action.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GeneratedSample>,
}

/// Master seed of the default corpus.
pub const DEFAULT_MASTER_SEED: u64 = 2024;

pub fn gen_spec(index: usize, master_seed: u64, params: &GenParams) -> ActionSpec {
    let seed = mix_seed(master_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verb = Verb::ALL[index % Verb::ALL.len()];
    let object = rng.gen_range(0..OBJECTS.len());
    let source = rng.gen_range(0..LOCATIONS.len());
    let target = (source + rng.gen_range(1..LOCATIONS.len())) % LOCATIONS.len();
    let duration_s = if params.max_duration_s > params.min_duration_s {
        rng.gen_range(params.min_duration_s..params.max_duration_s)
    } else {
        params.min_duration_s
    };
    ActionSpec { verb, object, source, target, duration_s, seed }
}

/// Balanced corpus: action `i` has verb class `i mod 5`; every draw derives
/// from `mix_seed(master_seed, i)`.
pub fn gen_corpus(n_actions: usize, captions_per_action: usize, master_seed: u64, params: &GenParams) -> Result<Dataset> {
    if n_actions == 0 || !n_actions.is_multiple_of(Verb::ALL.len()) {
        return Err(config_err!("action count {n_actions} must be a positive multiple of {}", Verb::ALL.len()));
    }
    if !(params.min_duration_s > 0.0 && params.max_duration_s >= params.min_duration_s) {
        return Err(config_err!("invalid duration range"));
    }
    let mut samples = Vec::with_capacity(n_actions);
    for id in 0..n_actions {
        let spec = gen_spec(id, master_seed, params);
        let observations = gen_trajectory(&spec, params)?;
        let mut crng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 1));
        let captions = gen_captions(&spec, captions_per_action, &mut crng)?;
        samples.push(GeneratedSample { id, spec, observations, captions });
    }
    Ok(Dataset { samples })
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: usize,
    verb: Verb,
    object: String,
    source: String,
    target: String,
    duration_s: f64,
    seed: u64,
    observations: ObservationSequence,
    captions: Vec<Vec<String>>,
}

fn object_id(name: &str) -> Result<usize> {
    OBJECTS.iter().position(|o| o[0] == name).ok_or_else(|| data_err!("unknown object {name:?}"))
}

fn location_id(name: &str) -> Result<usize> {
    LOCATIONS.iter().position(|l| l.0[0] == name).ok_or_else(|| data_err!("unknown location {name:?}"))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn caption_count(&self) -> usize {
        self.samples.iter().map(|s| s.captions.len()).sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let rec = Record {
                id: s.id,
                verb: s.spec.verb,
                object: s.spec.object_name().to_string(),
                source: s.spec.source_name().to_string(),
                target: s.spec.target_name().to_string(),
                duration_s: s.spec.duration_s,
                seed: s.spec.seed,
                observations: s.observations.clone(),
                captions: s.captions.iter().map(|c| c.0.clone()).collect(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| data_err!("dataset line {}: {e}", lineno + 1))?;
            let spec = ActionSpec {
                verb: rec.verb,
                object: object_id(&rec.object)?,
                source: location_id(&rec.source)?,
                target: location_id(&rec.target)?,
                duration_s: rec.duration_s,
                seed: rec.seed,
            };
            spec.validate().map_err(|e| data_err!("dataset line {}: {e}", lineno + 1))?;
            if rec.observations.dim() != OBSERVATION_DIM || rec.observations.is_empty() {
                return Err(data_err!("dataset line {}: observations must be non-empty with {OBSERVATION_DIM} channels", lineno + 1));
            }
            if rec.captions.is_empty() {
                return Err(data_err!("dataset line {}: no captions", lineno + 1));
            }
            samples.push(GeneratedSample {
                id: rec.id,
                spec,
                observations: rec.observations,
                captions: rec.captions.into_iter().map(Caption).collect(),
            });
        }
        Ok(Dataset { samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        if path.extension().is_some_and(|e| e == "gz") {
            let mut gz = flate2::write::GzEncoder::new(BufWriter::new(file), flate2::Compression::default());
            self.write_jsonl(&mut gz)?;
            gz.finish()?.flush()?;
            Ok(())
        } else {
            self.write_jsonl(BufWriter::new(file))
        }
    }

    /// Reads plain or gzip-compressed JSONL, detected from the magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| data_err!("{}: {e}", path.display()))?;
        let mut magic = [0u8; 2];
        let n = file.read(&mut magic)?;
        let file = File::open(path)?;
        if n == 2 && magic == [0x1f, 0x8b] {
            Self::read_jsonl(BufReader::new(GzDecoder::new(file)))
        } else {
            Self::read_jsonl(BufReader::new(file))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(verb: Verb, duration_s: f64) -> ActionSpec {
        ActionSpec { verb, object: 4, source: 0, target: 2, duration_s, seed: 7 }
    }

    #[test]
    fn thirty_seconds_is_one_hundred_steps() {
        let obs = gen_trajectory(&spec(Verb::Drop, 30.0), &GenParams::default()).unwrap();
        assert_eq!(obs.len(), 100);
        assert_eq!(obs.dim(), OBSERVATION_DIM);
    }

    #[test]
    fn noise_free_generation_is_repeatable() {
        let p = GenParams { noise: 0.0, ..GenParams::default() };
        let a = gen_trajectory(&spec(Verb::Bring, 20.0), &p).unwrap();
        let b = gen_trajectory(&spec(Verb::Bring, 20.0), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_trajectory(&spec(Verb::Put, 0.0), &GenParams::default()).is_err());
        let mut s = spec(Verb::Put, 10.0);
        s.object = 99;
        assert!(gen_trajectory(&s, &GenParams::default()).is_err());
    }

    #[test]
    fn visual_channels_follow_the_phase() {
        let p = GenParams { noise: 0.0, ..GenParams::default() };
        let s = spec(Verb::PickUp, 30.0);
        let obs = gen_trajectory(&s, &p).unwrap();
        let vis = |t: usize| obs.step(t).slice(ndarray::s![ACTUATION_DIM..]).to_vec();
        let segs = segment_per_step(&s, obs.len());
        let at = |want: Segment| segs.iter().position(|(g, u)| *g == want && *u >= 1.0).unwrap();
        assert_eq!(vis(at(Segment::Reach)), identity_embedding(location_entity(0)).to_vec());
        assert_eq!(vis(at(Segment::Manipulate)), identity_embedding(object_entity(4)).to_vec());
        assert_eq!(vis(99), identity_embedding(location_entity(2)).to_vec());
    }

    #[test]
    fn timeline_covers_every_step() {
        for d in [0.3, 3.0, 9.0, 18.0, 33.3, 60.0] {
            for verb in Verb::ALL {
                let s = ActionSpec { verb, duration_s: d, ..spec(verb, d) };
                let total: usize = timeline(&s, step_count(d)).iter().map(|x| x.1).sum();
                assert_eq!(total, step_count(d), "{verb} {d}");
            }
        }
    }

    #[test]
    fn captions_name_the_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spec(Verb::Bring, 30.0);
        let caps = gen_captions(&s, 20, &mut rng).unwrap();
        assert_eq!(caps.len(), 20);
        for c in &caps {
            let t = c.text();
            assert!(Verb::Bring.lexemes().iter().any(|v| t.starts_with(v)), "{t}");
            assert!(OBJECTS[4].iter().any(|o| t.contains(o)), "{t}");
            assert!(LOCATIONS[0].0.iter().any(|l| t.contains(l)), "{t}");
            assert!(LOCATIONS[2].0.iter().any(|l| t.contains(l)), "{t}");
        }
        assert!(gen_captions(&s, 0, &mut rng).is_err());
    }

    #[test]
    fn default_corpus_shape() {
        let d = gen_corpus(50, 20, 1, &GenParams::default()).unwrap();
        assert_eq!(d.len(), 50);
        assert_eq!(d.caption_count(), 1000);
        for v in Verb::ALL {
            assert_eq!(d.samples.iter().filter(|s| s.spec.verb == v).count(), 10);
        }
        for s in &d.samples {
            assert_eq!(s.observations.len(), step_count(s.spec.duration_s));
            assert!((60..=200).contains(&s.observations.len()));
            assert_ne!(s.spec.source, s.spec.target);
        }
        assert!(gen_corpus(7, 1, 1, &GenParams::default()).is_err());
    }
}
