//! Flat `key=value` pipeline configuration with section prefixes
//! (`speech.frame_ms=30`). `#` starts a comment line.

use std::path::{Path, PathBuf};

use crate::dtw::DtwConfig;
use crate::ear::GaborBankConfig;
use crate::fusion::{Normalization, EAR_WEIGHT, SPEECH_WEIGHT};
use crate::speech::FrameConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: line {line}: expected key=value")]
    Syntax { origin: String, line: usize },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for {key}: '{value}' ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarSettings {
    pub bank: GaborBankConfig,
    pub width: usize,
    pub height: usize,
    pub mirror: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSettings {
    pub w_speech: f64,
    pub w_ear: f64,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub store: PathBuf,
    /// Defaults to `<store>/reports`.
    pub reports: Option<PathBuf>,
    pub seed: u64,
    pub synth_out: PathBuf,
    pub twin_gap: f64,
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub dtw: DtwConfig,
    pub ear: EarSettings,
    pub fusion: FusionSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("cohort/manifest.csv"),
            store: PathBuf::from("store"),
            reports: None,
            seed: 7,
            synth_out: PathBuf::from("cohort"),
            twin_gap: 0.2,
            sample_rate: 8000,
            frame: FrameConfig::default(),
            dtw: DtwConfig::default(),
            ear: EarSettings {
                bank: GaborBankConfig::default(),
                width: 70,
                height: 90,
                mirror: true,
            },
            fusion: FusionSettings {
                w_speech: SPEECH_WEIGHT,
                w_ear: EAR_WEIGHT,
                normalization: Normalization::Row,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl PipelineConfig {
    pub fn reports_dir(&self) -> PathBuf {
        self.reports
            .clone()
            .unwrap_or_else(|| self.store.join("reports"))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "manifest" => self.manifest = PathBuf::from(v),
            "store" => self.store = PathBuf::from(v),
            "reports" => self.reports = Some(PathBuf::from(v)),
            "seed" => self.seed = parse(key, v)?,
            "synth.out_dir" => self.synth_out = PathBuf::from(v),
            "synth.twin_gap" => self.twin_gap = parse(key, v)?,
            "synth.sample_rate" => self.sample_rate = parse(key, v)?,
            "speech.frame_ms" => self.frame.frame_ms = parse(key, v)?,
            "speech.step_ms" => self.frame.step_ms = parse(key, v)?,
            "speech.n_fft" => self.frame.n_fft = parse(key, v)?,
            "speech.n_filters" => self.frame.n_filters = parse(key, v)?,
            "speech.f_lo" => self.frame.f_lo = parse(key, v)?,
            "speech.f_hi" => self.frame.f_hi = parse(key, v)?,
            "speech.n_ceps" => self.frame.n_ceps = parse(key, v)?,
            "speech.coeff_subset" => {
                self.dtw.coeff_subset = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "speech.equalize" => self.dtw.equalize = parse(key, v)?,
            "ear.n_orientations" => self.ear.bank.n_orientations = parse(key, v)?,
            "ear.n_scales" => self.ear.bank.n_scales = parse(key, v)?,
            "ear.f_max" => self.ear.bank.f_max = parse(key, v)?,
            "ear.sigma_k" => self.ear.bank.sigma_k = parse(key, v)?,
            "ear.gamma" => self.ear.bank.gamma = parse(key, v)?,
            "ear.eta" => self.ear.bank.eta = parse(key, v)?,
            "ear.psi" => self.ear.bank.psi = parse(key, v)?,
            "ear.kernel_size" => {
                self.ear.bank.kernel_size = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "ear.downsample" => self.ear.bank.downsample = parse(key, v)?,
            "ear.width" => self.ear.width = parse(key, v)?,
            "ear.height" => self.ear.height = parse(key, v)?,
            "ear.mirror" => self.ear.mirror = parse(key, v)?,
            "fusion.w_speech" => self.fusion.w_speech = parse(key, v)?,
            "fusion.w_ear" => self.fusion.w_ear = parse(key, v)?,
            "fusion.normalization" => self.fusion.normalization = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults overlaid with a config file. Relative paths in the file
    /// resolve against the current directory, like paths given on the command line.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.frame
            .validate(self.sample_rate)
            .map_err(|e| invalid(&e))?;
        self.dtw
            .validate(self.frame.n_ceps)
            .map_err(|e| invalid(&e))?;
        let f = &self.fusion;
        if !(f.w_speech >= 0.0 && f.w_ear >= 0.0 && (f.w_speech + f.w_ear - 1.0).abs() <= 1e-9) {
            return Err(ConfigError::Invalid(format!(
                "fusion weights must be non-negative and sum to 1, got {} + {}",
                f.w_speech, f.w_ear
            )));
        }
        let b = &self.ear.bank;
        if b.n_orientations == 0 || b.n_scales == 0 || b.downsample == 0 {
            return Err(ConfigError::Invalid(
                "ear bank counts and downsample factor must be >= 1".into(),
            ));
        }
        if self.ear.width < b.downsample || self.ear.height < b.downsample {
            return Err(ConfigError::Invalid(format!(
                "ear images {}x{} are smaller than the downsampling cell",
                self.ear.width, self.ear.height
            )));
        }
        if let Some(k) = b.kernel_size {
            if k < 3 || k % 2 == 0 {
                return Err(ConfigError::Invalid(format!(
                    "ear.kernel_size {k} must be odd and >= 3"
                )));
            }
        }
        if !(self.twin_gap >= 0.0 && self.twin_gap.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "synth.twin_gap {}",
                self.twin_gap
            )));
        }
        Ok(())
    }
}
