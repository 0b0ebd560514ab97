//! Binary PGM (P5) and PPM (P6) decoding, maxval 255 only.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("not a binary PNM file")]
    NotPnm,
    #[error("bad PNM header: {0}")]
    BadHeader(String),
    #[error("truncated PNM pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Planar RGB image, row-major planes with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self, PnmError> {
        if width == 0 || height == 0 {
            return Err(PnmError::InvalidImage("zero dimension".into()));
        }
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(PnmError::InvalidImage(
                "plane size does not match dimensions".into(),
            ));
        }
        if planes.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PnmError::InvalidImage("intensity outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    /// Mirror about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        let planes = self.planes.clone().map(|p| {
            p.chunks_exact(w)
                .flat_map(|row| row.iter().rev().copied())
                .collect()
        });
        Self {
            width: w,
            height: self.height,
            planes,
        }
    }
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if is_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::BadHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PnmError::BadHeader(format!("{what} out of range")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<RgbImage, PnmError> {
    let channels = match bytes.get(0..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(PnmError::NotPnm),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::BadHeader("zero dimension".into()));
    }
    if maxval != 255 {
        return Err(PnmError::BadHeader(format!(
            "maxval {maxval} (only 255 supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(&b) if is_space(b) => cur.pos += 1,
        _ => return Err(PnmError::BadHeader("missing separator after maxval".into())),
    }
    let n = width * height;
    let raster = &bytes[cur.pos..];
    let expected = n * channels;
    if raster.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    let scale = |b: u8| f64::from(b) / 255.0;
    let planes = if channels == 1 {
        let gray: Vec<f64> = raster[..n].iter().map(|&b| scale(b)).collect();
        [gray.clone(), gray.clone(), gray]
    } else {
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for px in raster[..expected].chunks_exact(3) {
            for (plane, &b) in planes.iter_mut().zip(px) {
                plane.push(scale(b));
            }
        }
        planes
    };
    RgbImage::new(width, height, planes)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, PnmError> {
    decode_pnm(&fs::read(path)?)
}

/// Encodes as binary P6.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    let quantize = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    for i in 0..img.width * img.height {
        for plane in &img.planes {
            out.push(quantize(plane[i]));
        }
    }
    out
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), PnmError> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}
