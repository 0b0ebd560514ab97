//! Speech frontend: framing, Hamming window, power spectrum, mel filter bank,
//! log compression and DCT-II, producing one cepstral vector per frame.

mod fft;
mod mel;

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::AudioClip;

pub use fft::{fft_in_place, power_spectrum};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterBank};

#[derive(Debug, Error, PartialEq)]
pub enum SpeechError {
    #[error("clip has {samples} samples, fewer than one {frame}-sample frame")]
    TooShort { samples: usize, frame: usize },
    #[error("FFT size {0} is not a power of two")]
    BadFftSize(usize),
    #[error("frame of {frame} samples exceeds FFT size {n_fft}")]
    FrameTooLong { frame: usize, n_fft: usize },
    #[error("mel edges {edge} and {} collapse onto FFT bin {bin}", edge + 1)]
    BandTooNarrow { edge: usize, bin: usize },
    #[error("invalid frame configuration: {0}")]
    BadConfig(String),
}

/// Floor applied to filter-bank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub frame_ms: f64,
    pub step_ms: f64,
    pub n_fft: usize,
    pub n_filters: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub n_ceps: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 30.0,
            step_ms: 10.0,
            n_fft: 512,
            n_filters: 20,
            f_lo: 300.0,
            f_hi: 3700.0,
            n_ceps: 13,
        }
    }
}

impl FrameConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn step_len(&self, sample_rate: u32) -> usize {
        (self.step_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), SpeechError> {
        let bad = |m: String| Err(SpeechError::BadConfig(m));
        if !(self.step_ms > 0.0 && self.step_ms <= self.frame_ms) {
            return bad(format!(
                "need 0 < step_ms ({}) <= frame_ms ({})",
                self.step_ms, self.frame_ms
            ));
        }
        if self.step_len(sample_rate) == 0 || self.frame_len(sample_rate) < 2 {
            return bad(format!("frame/step too short at {sample_rate} Hz"));
        }
        if !(self.f_lo >= 0.0 && self.f_lo < self.f_hi && self.f_hi <= f64::from(sample_rate) / 2.0)
        {
            return bad(format!(
                "need 0 <= f_lo ({}) < f_hi ({}) <= {}",
                self.f_lo,
                self.f_hi,
                f64::from(sample_rate) / 2.0
            ));
        }
        if self.n_filters == 0 || self.n_ceps == 0 || self.n_ceps > self.n_filters {
            return bad(format!(
                "need 1 <= n_ceps ({}) <= n_filters ({})",
                self.n_ceps, self.n_filters
            ));
        }
        if !self.n_fft.is_power_of_two() {
            return Err(SpeechError::BadFftSize(self.n_fft));
        }
        if self.n_fft < self.frame_len(sample_rate) {
            return Err(SpeechError::FrameTooLong {
                frame: self.frame_len(sample_rate),
                n_fft: self.n_fft,
            });
        }
        Ok(())
    }
}

/// Splits a clip into overlapping frames; the trailing partial frame is dropped.
pub fn frame_signal(clip: &AudioClip, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>, SpeechError> {
    let n = cfg.frame_len(clip.sample_rate());
    let step = cfg.step_len(clip.sample_rate());
    let x = clip.samples();
    if x.len() < n || step == 0 {
        return Err(SpeechError::TooShort {
            samples: x.len(),
            frame: n,
        });
    }
    Ok((0..=(x.len() - n) / step)
        .map(|i| x[i * step..i * step + n].to_vec())
        .collect())
}

/// `w(n) = 0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming_window(n: usize) -> Vec<f64> {
    assert!(n >= 2, "Hamming window needs at least 2 points");
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// `T x n_ceps` cepstral matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccSequence {
    n_ceps: usize,
    data: Vec<f64>,
    config: FrameConfig,
}

impl MfccSequence {
    pub fn new(n_ceps: usize, data: Vec<f64>, config: FrameConfig) -> Result<Self, SpeechError> {
        if n_ceps == 0 || data.is_empty() || !data.len().is_multiple_of(n_ceps) {
            return Err(SpeechError::BadConfig(format!(
                "{} values do not form frames of {n_ceps} coefficients",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SpeechError::BadConfig(
                "non-finite cepstral coefficient".into(),
            ));
        }
        Ok(Self {
            n_ceps,
            data,
            config,
        })
    }

    /// Builds a sequence from explicit frames (all the same width).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpeechError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(SpeechError::BadConfig("ragged frames".into()));
        }
        let config = FrameConfig {
            n_ceps: width,
            n_filters: FrameConfig::default().n_filters.max(width),
            ..FrameConfig::default()
        };
        Self::new(width, rows.concat(), config)
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_ceps
    }

    pub fn n_ceps(&self) -> usize {
        self.n_ceps
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_ceps..(i + 1) * self.n_ceps]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_ceps)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }
}

/// Reusable MFCC extractor for one sample rate.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: FrameConfig,
    sample_rate: u32,
    window: Vec<f64>,
    bank: MelFilterBank,
}

impl MfccExtractor {
    pub fn new(cfg: FrameConfig, sample_rate: u32) -> Result<Self, SpeechError> {
        let bank = MelFilterBank::build(&cfg, sample_rate)?;
        Ok(Self {
            window: hamming_window(cfg.frame_len(sample_rate)),
            cfg,
            sample_rate,
            bank,
        })
    }

    pub fn bank(&self) -> &MelFilterBank {
        &self.bank
    }

    /// Cepstrum of one already-framed (unwindowed) frame.
    pub fn frame_cepstrum(&self, frame: &[f64]) -> Result<Vec<f64>, SpeechError> {
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        let power = power_spectrum(&windowed, self.cfg.n_fft)?;
        let log_energy: Vec<f64> = self
            .bank
            .apply(&power)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        Ok(dct2(&log_energy, self.cfg.n_ceps))
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MfccSequence, SpeechError> {
        if clip.sample_rate() != self.sample_rate {
            return Err(SpeechError::BadConfig(format!(
                "clip rate {} Hz, extractor configured for {} Hz",
                clip.sample_rate(),
                self.sample_rate
            )));
        }
        let frames = frame_signal(clip, &self.cfg)?;
        let rows: Vec<Vec<f64>> = frames
            .par_iter()
            .map(|f| self.frame_cepstrum(f))
            .collect::<Result<_, _>>()?;
        MfccSequence::new(self.cfg.n_ceps, rows.concat(), self.cfg.clone())
    }
}

pub fn mfcc(clip: &AudioClip, cfg: &FrameConfig) -> Result<MfccSequence, SpeechError> {
    MfccExtractor::new(cfg.clone(), clip.sample_rate())?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(8000, samples).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn frame_counts() {
        let cfg = FrameConfig::default();
        assert_eq!(cfg.frame_len(8000), 240);
        assert_eq!(cfg.step_len(8000), 80);
        let c = clip((0..400).map(|i| i as f64 / 1000.0).collect());
        let frames = frame_signal(&c, &cfg).unwrap();
        assert_eq!(frames.len(), 3);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.len(), 240);
            assert_eq!(f[0], (i * 80) as f64 / 1000.0);
        }
        assert_eq!(
            frame_signal(&clip(vec![0.0; 100]), &cfg),
            Err(SpeechError::TooShort {
                samples: 100,
                frame: 240
            })
        );
    }

    #[test]
    fn hamming_identities() {
        let w = hamming_window(241);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[240] - 0.08).abs() < 1e-15);
        assert!((w[120] - 1.0).abs() < 1e-15);
        for n in 0..241 {
            assert!((w[n] - w[240 - n]).abs() < 1e-12);
            assert!(w[n] >= 0.08 - 1e-15 && w[n] <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn dct_of_constant() {
        let c = dct2(&[2.5; 20], 13);
        assert!((c[0] - 2.5 * 20f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dct_is_orthonormal() {
        let x = noise(20, 3);
        let c = dct2(&x, 20);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = c.iter().map(|v| v * v).sum();
        assert!((ex - ec).abs() < 1e-12 * ex);
    }

    #[test]
    fn mfcc_width_and_determinism() {
        let c = clip(noise(8000, 5));
        let a = mfcc(&c, &FrameConfig::default()).unwrap();
        assert_eq!(a.n_ceps(), 13);
        assert_eq!(a.n_frames(), (8000 - 240) / 80 + 1);
        assert_eq!(a, mfcc(&c, &FrameConfig::default()).unwrap());
    }

    #[test]
    fn silence_hits_log_floor() {
        let m = mfcc(&clip(vec![0.0; 480]), &FrameConfig::default()).unwrap();
        let expected_c0 = LOG_FLOOR.ln() * 20f64.sqrt();
        for f in m.frames() {
            assert!((f[0] - expected_c0).abs() < 1e-9);
            assert!(f[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn one_step_of_leading_zeros_shifts_one_frame() {
        let x = noise(2000, 9);
        let mut shifted = vec![0.0; 80];
        shifted.extend_from_slice(&x);
        let a = mfcc(&clip(x), &FrameConfig::default()).unwrap();
        let b = mfcc(&clip(shifted), &FrameConfig::default()).unwrap();
        assert_eq!(b.n_frames(), a.n_frames() + 1);
        for i in 0..a.n_frames() {
            for (u, v) in a.frame(i).iter().zip(b.frame(i + 1)) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rate_mismatch_rejected() {
        let ex = MfccExtractor::new(FrameConfig::default(), 16000).unwrap();
        assert!(ex.extract(&clip(vec![0.0; 1000])).is_err());
        assert!(FrameConfig::default().validate(4000).is_err());
    }

    proptest! {
        #[test]
        fn dct_is_linear(a in prop::collection::vec(-10.0f64..10.0, 20), b in prop::collection::vec(-10.0f64..10.0, 20), s in -3.0f64..3.0) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
            let (da, db, dm) = (dct2(&a, 20), dct2(&b, 20), dct2(&mix, 20));
            for k in 0..20 {
                prop_assert!((dm[k] - (da[k] + s * db[k])).abs() < 1e-9);
            }
        }

        #[test]
        fn parseval(x in prop::collection::vec(-1.0f64..1.0, 1..64)) {
            let n_fft = x.len().next_power_of_two();
            let half = power_spectrum(&x, n_fft).unwrap();
            // rebuild the full spectrum from conjugate symmetry
            let full: f64 = (0..n_fft).map(|k| half[if k <= n_fft / 2 { k } else { n_fft - k }]).sum();
            let energy: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!((energy - full / n_fft as f64).abs() <= 1e-6 * energy.max(1e-300));
        }
    }
}
