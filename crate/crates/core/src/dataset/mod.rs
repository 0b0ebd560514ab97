//! Media ingestion, cohort manifests and the synthetic cohort generator.

mod manifest;
mod pnm;
mod synth;
mod wav;

pub use manifest::{parse_manifest, parse_manifest_str, Manifest, ManifestError, SubjectRecord};
pub use pnm::{decode_pnm, encode_ppm, load_image, write_ppm, PnmError, RgbImage};
pub use synth::{generate_synthetic_cohort, SynthConfig, SynthError};
pub use wav::{decode_wav, encode_wav, load_wav, write_wav, AudioClip, WavError};
