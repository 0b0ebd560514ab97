//! Deterministic synthetic twin cohort.
//!
//! Each twin pair draws its voice (three partials, amplitudes, syllable rate)
//! and its ear texture from a shared base; each subject then perturbs the pair
//! base by `twin_gap` times the pair-level spread, so co-twins are closer to
//! each other than to strangers. Recordings add per-utterance jitter, tempo
//! change and noise; ear photos add capture-specific texture, misalignment, gain and sensor noise.
//! The left ear is written mirrored, as a real left-side photo would be.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{Manifest, SubjectRecord};
use super::pnm::{write_ppm, PnmError, RgbImage};
use super::wav::{write_wav, AudioClip, WavError};

const PARTIALS: usize = 3;
const F_LO: f64 = 400.0;
const F_HI: f64 = 3400.0;
const TEXTURE_CELL: f64 = 6.0;
/// Weight of the fresh texture each photo adds on top of the subject's ear.
const CAPTURE_VARIATION: f64 = 0.8;
const MAX_SHIFT_PX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_pairs: usize,
    /// Subject perturbation as a fraction of the pair-level spread.
    pub twin_gap: f64,
    pub sample_rate: u32,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_pairs: 38,
            twin_gap: 0.2,
            sample_rate: 8000,
            image_width: 70,
            image_height: 90,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("n_pairs must be at least 1")]
    NoPairs,
    #[error("invalid synthesis parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<WavError> for SynthError {
    fn from(e: WavError) -> Self {
        match e {
            WavError::Io(e) => SynthError::Io(e),
            other => SynthError::Io(io::Error::other(other.to_string())),
        }
    }
}

impl From<PnmError> for SynthError {
    fn from(e: PnmError) -> Self {
        match e {
            PnmError::Io(e) => SynthError::Io(e),
            other => SynthError::Io(io::Error::other(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
struct Voice {
    freqs: [f64; PARTIALS],
    amps: [f64; PARTIALS],
    syllable_rate: f64,
    duration: f64,
}

/// Smooth random field: Gaussian lattice values, bilinearly interpolated.
#[derive(Debug, Clone)]
struct Texture {
    cols: usize,
    rows: usize,
    lattice: Vec<f64>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Self {
        let cols = (width as f64 / TEXTURE_CELL).ceil() as usize + 3;
        let rows = (height as f64 / TEXTURE_CELL).ceil() as usize + 3;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let lattice = (0..cols * rows).map(|_| normal.sample(rng)).collect();
        Self {
            cols,
            rows,
            lattice,
        }
    }

    fn blend(&self, other: &Texture, weight: f64) -> Self {
        Self {
            cols: self.cols,
            rows: self.rows,
            lattice: self
                .lattice
                .iter()
                .zip(&other.lattice)
                .map(|(a, b)| a + weight * b)
                .collect(),
        }
    }

    /// Sample at pixel coordinates; the lattice is offset by one cell so small
    /// negative shifts stay inside.
    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = (x / TEXTURE_CELL + 1.0).clamp(0.0, (self.cols - 2) as f64);
        let gy = (y / TEXTURE_CELL + 1.0).clamp(0.0, (self.rows - 2) as f64);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let (ix, iy) = (ix.min(self.cols - 2), iy.min(self.rows - 2));
        let (fx, fy) = (gx - ix as f64, gy - iy as f64);
        let v = |c: usize, r: usize| self.lattice[r * self.cols + c];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bottom = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn centered(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>() - 0.5
}

fn utterance(rng: &mut ChaCha8Rng, voice: &Voice, rate: u32) -> AudioClip {
    let jitter = Normal::new(0.0, 0.01 * (F_HI - F_LO)).unwrap();
    let noise = Normal::new(0.0, 0.02).unwrap();
    let duration = voice.duration * rng.random_range(0.9..1.1);
    let n = (duration * f64::from(rate)).round() as usize;
    let freqs: Vec<f64> = voice.freqs.iter().map(|f| f + jitter.sample(rng)).collect();
    let phases: Vec<f64> = (0..PARTIALS)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let env_phase = rng.random_range(0.0..2.0 * PI);
    let peak = 0.8 / voice.amps.iter().sum::<f64>();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            let env = 0.55 + 0.45 * (2.0 * PI * voice.syllable_rate * t + env_phase).sin();
            let tone: f64 = (0..PARTIALS)
                .map(|k| voice.amps[k] * (2.0 * PI * freqs[k] * t + phases[k]).sin())
                .sum();
            (peak * env * tone + noise.sample(rng)).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(rate, samples).expect("synthetic clip is valid")
}

fn ear_photo(
    rng: &mut ChaCha8Rng,
    textures: &[Texture; 3],
    width: usize,
    height: usize,
    mirrored: bool,
) -> RgbImage {
    let sensor = Normal::new(0.0, 0.04).unwrap();
    let textures: [Texture; 3] = std::array::from_fn(|c| {
        let capture = Texture::random(rng, width, height);
        textures[c].blend(&capture, CAPTURE_VARIATION)
    });
    let (sx, sy) = (
        rng.random_range(-MAX_SHIFT_PX..MAX_SHIFT_PX),
        rng.random_range(-MAX_SHIFT_PX..MAX_SHIFT_PX),
    );
    let gain = 1.0 + 0.1 * centered(rng);
    let offset = 0.05 * centered(rng);
    let planes = textures.map(|tex| {
        let mut plane = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let xs = if mirrored {
                    (width - 1 - x) as f64
                } else {
                    x as f64
                };
                let v = 0.5
                    + offset
                    + gain * 0.12 * tex.at(xs + sx, y as f64 + sy)
                    + sensor.sample(rng);
                plane.push(v.clamp(0.0, 1.0));
            }
        }
        plane
    });
    RgbImage::new(width, height, planes).expect("synthetic image is valid")
}

fn perturbed_voice(rng: &mut ChaCha8Rng, base: &Voice, gap: f64) -> Voice {
    let spread = F_HI - F_LO;
    let mut freqs = base.freqs;
    for f in &mut freqs {
        *f = (*f + gap * spread * centered(rng)).clamp(F_LO, F_HI);
    }
    let mut amps = base.amps;
    for a in &mut amps {
        *a *= 1.0 + gap * centered(rng);
    }
    Voice {
        freqs,
        amps,
        syllable_rate: base.syllable_rate * (1.0 + gap * centered(rng)),
        duration: base.duration * (1.0 + gap * centered(rng)),
    }
}

/// Writes `2 * n_pairs` subjects (three WAVs and two PPMs each) plus
/// `manifest.csv` into `out_dir`. Output is a pure function of the config.
pub fn generate_synthetic_cohort(
    cfg: &SynthConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest, SynthError> {
    if cfg.n_pairs == 0 {
        return Err(SynthError::NoPairs);
    }
    if !(cfg.twin_gap >= 0.0 && cfg.twin_gap.is_finite()) {
        return Err(SynthError::BadParameter(format!(
            "twin_gap {}",
            cfg.twin_gap
        )));
    }
    if cfg.sample_rate == 0 || cfg.image_width == 0 || cfg.image_height == 0 {
        return Err(SynthError::BadParameter(
            "sample rate and image size must be positive".into(),
        ));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("audio"))?;
    fs::create_dir_all(out_dir.join("ears"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.image_width, cfg.image_height);
    let mut subjects = Vec::with_capacity(2 * cfg.n_pairs);
    for pair in 0..cfg.n_pairs {
        let mut freqs = [0.0; PARTIALS];
        for f in &mut freqs {
            *f = rng.random_range(F_LO..F_HI);
        }
        freqs.sort_by(f64::total_cmp);
        let base_voice = Voice {
            freqs,
            amps: [0.0; PARTIALS].map(|_| rng.random_range(0.5..1.0)),
            syllable_rate: rng.random_range(3.0..6.0),
            duration: rng.random_range(0.8..1.2),
        };
        let base_ear: [Texture; 3] = std::array::from_fn(|_| Texture::random(&mut rng, w, h));
        let ids = [format!("s{pair:03}a"), format!("s{pair:03}b")];
        for (k, id) in ids.iter().enumerate() {
            let voice = perturbed_voice(&mut rng, &base_voice, cfg.twin_gap);
            let ear: [Texture; 3] = std::array::from_fn(|c| {
                let own = Texture::random(&mut rng, w, h);
                base_ear[c].blend(&own, cfg.twin_gap)
            });
            let rel = |name: String| PathBuf::from(name);
            let speech_train = vec![
                rel(format!("audio/{id}_train1.wav")),
                rel(format!("audio/{id}_train2.wav")),
            ];
            let speech_test = vec![rel(format!("audio/{id}_test.wav"))];
            for p in speech_train.iter().chain(&speech_test) {
                write_wav(
                    out_dir.join(p),
                    &utterance(&mut rng, &voice, cfg.sample_rate),
                )?;
            }
            let ear_train = rel(format!("ears/{id}_left.ppm"));
            let ear_test = rel(format!("ears/{id}_right.ppm"));
            write_ppm(
                out_dir.join(&ear_train),
                &ear_photo(&mut rng, &ear, w, h, true),
            )?;
            write_ppm(
                out_dir.join(&ear_test),
                &ear_photo(&mut rng, &ear, w, h, false),
            )?;
            subjects.push(SubjectRecord {
                subject_id: id.clone(),
                twin_id: ids[1 - k].clone(),
                speech_train: speech_train.into_iter().map(|p| out_dir.join(p)).collect(),
                speech_test: speech_test.into_iter().map(|p| out_dir.join(p)).collect(),
                ear_train: out_dir.join(ear_train),
                ear_test: out_dir.join(ear_test),
            });
        }
    }
    let manifest = Manifest {
        cohort_name: format!("synthetic-seed{}-pairs{}", cfg.seed, cfg.n_pairs),
        subjects,
    };
    fs::write(out_dir.join("manifest.csv"), manifest.to_text(out_dir))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_image, load_wav, parse_manifest};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_pairs: 2,
            image_width: 20,
            image_height: 24,
            ..SynthConfig::default()
        }
    }

    fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        for sub in ["", "audio", "ears"] {
            let mut entries: Vec<_> = fs::read_dir(dir.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                let bytes = fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic_cohort(&small(7), a.path()).unwrap();
        generate_synthetic_cohort(&small(7), b.path()).unwrap();
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        assert_eq!(ta.len(), 1 + 4 * 3 + 4 * 2);
        assert_eq!(ta, tb);
    }

    #[test]
    fn different_seed_different_audio() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic_cohort(&small(7), a.path()).unwrap();
        generate_synthetic_cohort(&small(8), b.path()).unwrap();
        let p = "audio/s000a_train1.wav";
        assert_ne!(
            fs::read(a.path().join(p)).unwrap(),
            fs::read(b.path().join(p)).unwrap()
        );
    }

    #[test]
    fn written_cohort_parses() {
        let dir = tempfile::tempdir().unwrap();
        let made = generate_synthetic_cohort(&small(3), dir.path()).unwrap();
        let parsed = parse_manifest(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(parsed.subjects.len(), 4);
        assert_eq!(parsed.subject_ids(), made.subject_ids());
        assert_eq!(parsed.twin_map()["s001a"], "s001b");
        let clip = load_wav(&parsed.subjects[0].speech_test[0]).unwrap();
        assert_eq!(clip.sample_rate(), 8000);
        let img = load_image(&parsed.subjects[0].ear_train).unwrap();
        assert_eq!((img.width(), img.height()), (20, 24));
    }

    #[test]
    fn zero_pairs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_pairs: 0,
            ..small(1)
        };
        assert!(matches!(
            generate_synthetic_cohort(&cfg, dir.path()),
            Err(SynthError::NoPairs)
        ));
    }

    #[test]
    fn subject_perturbation_bounded_by_twin_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = Voice {
            freqs: [800.0, 1600.0, 2400.0],
            amps: [1.0; 3],
            syllable_rate: 4.0,
            duration: 1.0,
        };
        let a = perturbed_voice(&mut rng, &base, 0.2);
        let b = perturbed_voice(&mut rng, &base, 0.2);
        let max_gap = a
            .freqs
            .iter()
            .zip(&b.freqs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_gap <= 0.2 * (F_HI - F_LO));
    }
}
