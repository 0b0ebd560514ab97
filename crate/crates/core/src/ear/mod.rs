//! Ear frontend: per-channel Gabor magnitude responses, decimated and z-normalized.

mod gabor;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::RgbImage;

pub use gabor::{
    auto_kernel_size, convolve_at, gabor_kernel, GaborBank, GaborBankConfig, GaborKernel,
    GaborParams,
};

#[derive(Debug, Error, PartialEq)]
pub enum EarError {
    #[error("kernel size {0} must be odd and at least 3")]
    BadSize(usize),
    #[error("invalid Gabor parameters: {0}")]
    BadParams(String),
    #[error("image {width}x{height} is smaller than the {factor}x{factor} downsampling cell")]
    ImageTooSmall {
        width: usize,
        height: usize,
        factor: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarFeatureVector {
    pub subject_id: String,
    pub values: Vec<f64>,
    /// False when the raw responses had zero variance and `values` is all zeros.
    pub normalized: bool,
}

/// `3 * ceil(W/f) * ceil(H/f) * n_kernels`.
pub fn feature_len(width: usize, height: usize, bank: &GaborBank) -> usize {
    let f = bank.downsample();
    3 * width.div_ceil(f) * height.div_ceil(f) * bank.len()
}

/// Standardizes in place to zero mean and unit (population) variance.
/// Returns false, zeroing the vector, when the variance is zero.
pub fn z_normalize(values: &mut [f64]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0 && var.is_finite()) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    let inv = 1.0 / var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    true
}

/// Layout: channel-major, then kernel, then decimated row, then column.
pub fn extract_ear_features(
    img: &RgbImage,
    bank: &GaborBank,
    mirror: bool,
) -> Result<EarFeatureVector, EarError> {
    let factor = bank.downsample();
    let (w, h) = (img.width(), img.height());
    if w < factor || h < factor {
        return Err(EarError::ImageTooSmall {
            width: w,
            height: h,
            factor,
        });
    }
    let flipped;
    let img = if mirror {
        flipped = img.flip_horizontal();
        &flipped
    } else {
        img
    };
    let rows: Vec<usize> = (0..h).step_by(factor).collect();
    let cols: Vec<usize> = (0..w).step_by(factor).collect();
    let cell = rows.len() * cols.len();

    // one block per (kernel, channel)
    let per_kernel: Vec<[Vec<f64>; 3]> = bank
        .kernels()
        .par_iter()
        .map(|k| {
            std::array::from_fn(|c| {
                let plane = img.plane(c);
                let mut out = Vec::with_capacity(cell);
                for &r in &rows {
                    for &col in &cols {
                        out.push(convolve_at(plane, w, h, k, r, col).norm());
                    }
                }
                out
            })
        })
        .collect();

    let mut values = Vec::with_capacity(feature_len(w, h, bank));
    for c in 0..3 {
        for blocks in &per_kernel {
            values.extend_from_slice(&blocks[c]);
        }
    }
    let normalized = z_normalize(&mut values);
    Ok(EarFeatureVector {
        subject_id: String::new(),
        values,
        normalized,
    })
}
