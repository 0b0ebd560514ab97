//! Dynamic time warping over cepstral sequences and speech template matching.
//!
//! The recurrence is the unconstrained one,
//! `D(i, j) = min(D(i-1, j-1), D(i-1, j), D(i, j-1)) + d(a_i, b_j)`,
//! with `d` the Euclidean distance over a chosen subset of coefficients.

use rayon::prelude::*;
use thiserror::Error;

use crate::speech::MfccSequence;

#[derive(Debug, Error, PartialEq)]
pub enum DtwError {
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("coefficient subset is empty")]
    EmptySubset,
    #[error("coefficient index {index} out of range for {n_ceps} coefficients")]
    BadCoefficient { index: usize, n_ceps: usize },
    #[error("template {0} has no sequences or inconsistent widths")]
    BadTemplate(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwConfig {
    pub coeff_subset: Vec<usize>,
    /// Resample both sequences to the longer length before aligning.
    pub equalize: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            coeff_subset: vec![0, 1, 2, 3],
            equalize: true,
        }
    }
}

impl DtwConfig {
    pub fn validate(&self, n_ceps: usize) -> Result<(), DtwError> {
        if self.coeff_subset.is_empty() {
            return Err(DtwError::EmptySubset);
        }
        match self.coeff_subset.iter().find(|&&i| i >= n_ceps) {
            Some(&index) => Err(DtwError::BadCoefficient { index, n_ceps }),
            None => Ok(()),
        }
    }
}

/// Euclidean distance restricted to `subset`.
pub fn local_distance(a: &[f64], b: &[f64], subset: &[usize]) -> f64 {
    subset
        .iter()
        .map(|&k| {
            let d = a[k] - b[k];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Linear interpolation of every coefficient track onto `len` frames.
fn resample(seq: &MfccSequence, len: usize) -> Vec<Vec<f64>> {
    let n = seq.n_frames();
    if n == len {
        return seq.frames().map(<[f64]>::to_vec).collect();
    }
    (0..len)
        .map(|j| {
            if n == 1 {
                return seq.frame(0).to_vec();
            }
            let t = if len == 1 {
                0.0
            } else {
                (j * (n - 1)) as f64 / (len - 1) as f64
            };
            let i = (t.floor() as usize).min(n - 2);
            let frac = t - i as f64;
            seq.frame(i)
                .iter()
                .zip(seq.frame(i + 1))
                .map(|(x, y)| x * (1.0 - frac) + y * frac)
                .collect()
        })
        .collect()
}

/// Accumulated-cost DP over two frame slices, O(|b|) memory.
pub fn dtw_frames<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    a: &[A],
    b: &[B],
    subset: &[usize],
) -> Result<f64, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    let m = b.len();
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    for (i, fa) in a.iter().enumerate() {
        let fa = fa.as_ref();
        for j in 0..m {
            let d = local_distance(fa, b[j].as_ref(), subset);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1] + d,
                (_, 0) => prev[0] + d,
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]) + d,
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn dtw_distance(a: &MfccSequence, b: &MfccSequence, cfg: &DtwConfig) -> Result<f64, DtwError> {
    cfg.validate(a.n_ceps().min(b.n_ceps()))?;
    if cfg.equalize {
        let len = a.n_frames().max(b.n_frames());
        dtw_frames(&resample(a, len), &resample(b, len), &cfg.coeff_subset)
    } else {
        let fa: Vec<&[f64]> = a.frames().collect();
        let fb: Vec<&[f64]> = b.frames().collect();
        dtw_frames(&fa, &fb, &cfg.coeff_subset)
    }
}

/// Enrolled training utterances of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechTemplate {
    pub subject_id: String,
    pub sequences: Vec<MfccSequence>,
}

impl SpeechTemplate {
    pub fn new(
        subject_id: impl Into<String>,
        sequences: Vec<MfccSequence>,
    ) -> Result<Self, DtwError> {
        let subject_id = subject_id.into();
        let width = sequences.first().map(MfccSequence::n_ceps);
        if width.is_none() || sequences.iter().any(|s| Some(s.n_ceps()) != width) {
            return Err(DtwError::BadTemplate(subject_id));
        }
        Ok(Self {
            subject_id,
            sequences,
        })
    }
}

/// Distance from `probe` to each identity: the best DTW match over its training sequences.
pub fn match_speech(
    probe: &MfccSequence,
    gallery: &[SpeechTemplate],
    cfg: &DtwConfig,
) -> Result<Vec<f64>, DtwError> {
    if gallery.is_empty() {
        return Err(DtwError::EmptyGallery);
    }
    gallery
        .par_iter()
        .map(|t| {
            t.sequences
                .iter()
                .map(|s| dtw_distance(probe, s, cfg))
                .try_fold(f64::INFINITY, |best, d| d.map(|d| best.min(d)))
        })
        .collect()
}
