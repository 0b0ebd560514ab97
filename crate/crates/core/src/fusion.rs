//! Score matrices, min-max normalization and weighted-sum fusion.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("probe or gallery ids differ between the matrices being fused")]
    IdMismatch,
    #[error("fusion weights must be non-negative and sum to 1, got {0} + {1}")]
    BadWeights(f64, f64),
    #[error("both matrices must be similarity scores in [0, 1]")]
    NotNormalized,
    #[error("malformed score matrix: {0}")]
    BadMatrix(String),
    #[error("probe {0}: true identity {1} is not in the gallery")]
    UnknownIdentity(String, String),
    #[error("probe {0}: twin {1} is not in the gallery")]
    MissingTwin(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Lower is better.
    Distance,
    /// Higher is better.
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Min-max over each probe's row.
    #[default]
    Row,
    /// Min-max over the whole matrix.
    Global,
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" => Ok(Self::Row),
            "global" => Ok(Self::Global),
            other => Err(format!(
                "unknown normalization '{other}' (expected row or global)"
            )),
        }
    }
}

/// `P x G` scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_ids: Vec<String>,
    gallery_ids: Vec<String>,
    scores: Vec<f64>,
    polarity: Polarity,
}

fn has_duplicates(ids: &[String]) -> bool {
    let mut seen = std::collections::HashSet::new();
    !ids.iter().all(|id| seen.insert(id))
}

impl ScoreMatrix {
    pub fn new(
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
        scores: Vec<f64>,
        polarity: Polarity,
    ) -> Result<Self, FusionError> {
        if probe_ids.is_empty() || gallery_ids.is_empty() {
            return Err(FusionError::BadMatrix("empty probe or gallery set".into()));
        }
        if scores.len() != probe_ids.len() * gallery_ids.len() {
            return Err(FusionError::BadMatrix(format!(
                "{} scores for {}x{} matrix",
                scores.len(),
                probe_ids.len(),
                gallery_ids.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(FusionError::BadMatrix("non-finite score".into()));
        }
        if has_duplicates(&probe_ids) || has_duplicates(&gallery_ids) {
            return Err(FusionError::BadMatrix("duplicate ids".into()));
        }
        Ok(Self {
            probe_ids,
            gallery_ids,
            scores,
            polarity,
        })
    }

    pub fn from_rows(
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
        rows: &[Vec<f64>],
        polarity: Polarity,
    ) -> Result<Self, FusionError> {
        if rows.iter().any(|r| r.len() != gallery_ids.len()) {
            return Err(FusionError::BadMatrix(
                "row length differs from gallery size".into(),
            ));
        }
        Self::new(probe_ids, gallery_ids, rows.concat(), polarity)
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.gallery_ids
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn n_gallery(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let g = self.gallery_ids.len();
        &self.scores[p * g..(p + 1) * g]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks_exact(self.gallery_ids.len())
    }

    pub fn gallery_index(&self, id: &str) -> Option<usize> {
        self.gallery_ids.iter().position(|g| g == id)
    }

    /// Header of gallery ids, then one `probe,score,...` line per probe.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe");
        for g in &self.gallery_ids {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (id, row) in self.probe_ids.iter().zip(self.rows()) {
            out.push_str(id);
            for s in row {
                out.push_str(&format!(",{s:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn min_max(values: &mut [f64], lo: f64, hi: f64, flip: bool) {
    for v in values {
        *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.5 };
        if flip && hi > lo {
            *v = 1.0 - *v;
        }
    }
}

/// Min-max normalizes into `[0, 1]` similarity scores; distances are flipped
/// with `s -> 1 - s`. Constant rows (or a constant matrix) become 0.5.
pub fn to_similarity(m: &ScoreMatrix, granularity: Normalization) -> ScoreMatrix {
    let flip = m.polarity == Polarity::Distance;
    let mut scores = m.scores.clone();
    match granularity {
        Normalization::Row => {
            for row in scores.chunks_exact_mut(m.gallery_ids.len()) {
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                min_max(row, lo, hi, flip);
            }
        }
        Normalization::Global => {
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            min_max(&mut scores, lo, hi, flip);
        }
    }
    ScoreMatrix {
        scores,
        polarity: Polarity::Similarity,
        ..m.clone()
    }
}

pub const SPEECH_WEIGHT: f64 = 0.85;
pub const EAR_WEIGHT: f64 = 0.15;

/// `w_speech * speech + w_ear * ear`, elementwise.
pub fn fuse(
    speech: &ScoreMatrix,
    ear: &ScoreMatrix,
    w_speech: f64,
    w_ear: f64,
) -> Result<ScoreMatrix, FusionError> {
    if !(w_speech >= 0.0 && w_ear >= 0.0 && (w_speech + w_ear - 1.0).abs() <= 1e-9) {
        return Err(FusionError::BadWeights(w_speech, w_ear));
    }
    if speech.probe_ids != ear.probe_ids || speech.gallery_ids != ear.gallery_ids {
        return Err(FusionError::IdMismatch);
    }
    let in_unit = |m: &ScoreMatrix| {
        m.polarity == Polarity::Similarity && m.scores.iter().all(|s| (0.0..=1.0).contains(s))
    };
    if !in_unit(speech) || !in_unit(ear) {
        return Err(FusionError::NotNormalized);
    }
    let scores = speech
        .scores
        .iter()
        .zip(&ear.scores)
        .map(|(s, e)| w_speech * s + w_ear * e)
        .collect();
    Ok(ScoreMatrix {
        scores,
        ..speech.clone()
    })
}
