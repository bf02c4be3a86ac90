use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{data_err, Result};

/// Actuation channels per step: nine joint rotations plus planar base motion.
pub const ACTUATION_DIM: usize = 12;
/// Visual feature channels per step.
pub const VISUAL_DIM: usize = 10;
/// Full per-step observation width.
pub const OBSERVATION_DIM: usize = ACTUATION_DIM + VISUAL_DIM;
/// Sampling period of the observation stream, in seconds.
pub const SAMPLE_PERIOD_S: f64 = 0.3;

/// Time-major matrix of observation vectors, one row per sampled step.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    steps: Array2<f64>,
}

impl ObservationSequence {
    pub fn from_array(steps: Array2<f64>) -> Result<Self> {
        if steps.iter().any(|x| !x.is_finite()) {
            return Err(data_err!("observation sequence contains non-finite values"));
        }
        Ok(ObservationSequence { steps })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(data_err!(
                "observation step {bad} has dim {}, expected {dim}",
                rows[bad].len()
            ));
        }
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let steps = Array2::from_shape_vec((n, dim), flat).map_err(|e| data_err!("{e}"))?;
        Self::from_array(steps)
    }

    pub fn len(&self) -> usize {
        self.steps.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.steps.ncols()
    }

    pub fn step(&self, i: usize) -> ArrayView1<'_, f64> {
        self.steps.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.steps.view()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.steps.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

impl Serialize for ObservationSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObservationSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        ObservationSequence::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Number of samples covering `duration_s` seconds at the fixed period.
pub fn step_count(duration_s: f64) -> usize {
    // Tolerance absorbs representation error, e.g. 30.0 / 0.3 = 100.00000000000001.
    (duration_s / SAMPLE_PERIOD_S - 1e-9).ceil().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_is_exact_on_round_durations() {
        assert_eq!(step_count(30.0), 100);
        assert_eq!(step_count(18.0), 60);
        assert_eq!(step_count(60.0), 200);
        assert_eq!(step_count(0.31), 2);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(ObservationSequence::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(ObservationSequence::from_rows(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn json_shape() {
        let seq = ObservationSequence::from_rows(vec![vec![1.0, 2.5], vec![0.0, -1.0]]).unwrap();
        let text = serde_json::to_string(&seq).unwrap();
        assert_eq!(text, "[[1.0,2.5],[0.0,-1.0]]");
        let back: ObservationSequence = serde_json::from_str(&text).unwrap();
        assert_eq!(back, seq);
    }
}
