use super::{FrameConfig, SpeechError};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the power-spectrum bins, one row per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    weights: Vec<Vec<f64>>,
    center_bins: Vec<usize>,
    center_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterBank {
    pub fn build(cfg: &FrameConfig, sample_rate: u32) -> Result<Self, SpeechError> {
        cfg.validate(sample_rate)?;
        let n_bins = cfg.n_fft / 2 + 1;
        let (m_lo, m_hi) = (hz_to_mel(cfg.f_lo), hz_to_mel(cfg.f_hi));
        let n_edges = cfg.n_filters + 2;
        let edge_hz: Vec<f64> = (0..n_edges)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_edges - 1) as f64))
            .collect();
        let bin_of = |f: f64| {
            ((f * cfg.n_fft as f64 / f64::from(sample_rate)).round() as usize).min(n_bins - 1)
        };
        let edge_bins: Vec<usize> = edge_hz.iter().map(|&f| bin_of(f)).collect();
        if let Some(i) = edge_bins.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SpeechError::BandTooNarrow {
                edge: i,
                bin: edge_bins[i],
            });
        }
        let weights = edge_bins
            .windows(3)
            .map(|e| {
                let (l, c, r) = (e[0], e[1], e[2]);
                let mut row = vec![0.0; n_bins];
                for (k, w) in row.iter_mut().enumerate().take(r + 1).skip(l) {
                    *w = if k <= c {
                        (k - l) as f64 / (c - l) as f64
                    } else {
                        (r - k) as f64 / (r - c) as f64
                    };
                }
                row
            })
            .collect();
        Ok(Self {
            weights,
            center_bins: edge_bins[1..n_edges - 1].to_vec(),
            center_hz: edge_hz[1..n_edges - 1].to_vec(),
            n_bins,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn center_bins(&self) -> &[usize] {
        &self.center_bins
    }

    pub fn center_hz(&self) -> &[f64] {
        &self.center_hz
    }

    /// Filter energies of one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}
