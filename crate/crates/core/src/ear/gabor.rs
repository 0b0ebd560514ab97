use std::f64::consts::PI;

use num_complex::Complex64;

use super::EarError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    /// Cycles per pixel.
    pub frequency: f64,
    pub theta: f64,
    pub psi: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl GaborParams {
    pub fn validate(&self) -> Result<(), EarError> {
        let positive = [self.frequency, self.sigma, self.gamma, self.eta];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite())
            && self.theta.is_finite()
            && self.psi.is_finite()
        {
            Ok(())
        } else {
            Err(EarError::BadParams(format!("{self:?}")))
        }
    }
}

/// Square complex kernel sampled on a centered odd grid, stored row-major
/// (row = y offset, column = x offset).
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub params: GaborParams,
    size: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl GaborKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// Value at offset `(x, y)` from the center.
    pub fn at(&self, x: isize, y: isize) -> Complex64 {
        let h = self.half() as isize;
        let idx = ((y + h) as usize) * self.size + (x + h) as usize;
        Complex64::new(self.re[idx], self.im[idx])
    }
}

/// `G(x, y) = f^2 / (pi gamma eta) * exp(-(a^2 + gamma^2 b^2) / (2 sigma^2)) * exp(i (2 pi f a + psi))`
/// with `a = x cos(theta) + y sin(theta)`, `b = -x sin(theta) + y cos(theta)`.
pub fn gabor_kernel(p: &GaborParams, size: usize) -> Result<GaborKernel, EarError> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(EarError::BadSize(size));
    }
    p.validate()?;
    let h = (size / 2) as isize;
    let amp = p.frequency * p.frequency / (PI * p.gamma * p.eta);
    let (s, c) = p.theta.sin_cos();
    let mut re = Vec::with_capacity(size * size);
    let mut im = Vec::with_capacity(size * size);
    for y in -h..=h {
        for x in -h..=h {
            let (x, y) = (x as f64, y as f64);
            let a = x * c + y * s;
            let b = -x * s + y * c;
            let env =
                amp * (-(a * a + p.gamma * p.gamma * b * b) / (2.0 * p.sigma * p.sigma)).exp();
            let (ps, pc) = (2.0 * PI * p.frequency * a + p.psi).sin_cos();
            re.push(env * pc);
            im.push(env * ps);
        }
    }
    Ok(GaborKernel {
        params: *p,
        size,
        re,
        im,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborBankConfig {
    pub n_orientations: usize,
    pub n_scales: usize,
    /// Frequency of the finest scale, cycles per pixel.
    pub f_max: f64,
    /// `sigma = sigma_k / f`.
    pub sigma_k: f64,
    pub gamma: f64,
    pub eta: f64,
    pub psi: f64,
    /// Fixed kernel size; `None` sizes each kernel to cover +-3 sigma.
    pub kernel_size: Option<usize>,
    pub downsample: usize,
}

impl Default for GaborBankConfig {
    fn default() -> Self {
        Self {
            n_orientations: 32,
            n_scales: 10,
            f_max: 0.25,
            sigma_k: 0.56,
            gamma: 0.5,
            eta: 0.5,
            psi: 0.0,
            kernel_size: None,
            downsample: 8,
        }
    }
}

/// Smallest odd size >= `6 sigma + 1`, capped at the largest odd size <= `cap`.
pub fn auto_kernel_size(sigma: f64, cap: usize) -> usize {
    let mut size = (6.0 * sigma + 1.0).ceil() as usize;
    if size.is_multiple_of(2) {
        size += 1;
    }
    let cap_odd = if cap.is_multiple_of(2) {
        cap.saturating_sub(1)
    } else {
        cap
    };
    size.min(cap_odd).max(3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    kernels: Vec<GaborKernel>,
    n_orientations: usize,
    n_scales: usize,
    downsample: usize,
}

impl GaborBank {
    /// Kernels are ordered scale-major: index `v * n_orientations + u`.
    /// `max_size` caps automatically sized kernels, normally `min(width, height)`.
    pub fn build(cfg: &GaborBankConfig, max_size: usize) -> Result<Self, EarError> {
        if cfg.n_orientations == 0 || cfg.n_scales == 0 || cfg.downsample == 0 {
            return Err(EarError::BadParams(
                "bank counts and downsample factor must be >= 1".into(),
            ));
        }
        if !(cfg.f_max > 0.0 && cfg.sigma_k > 0.0) {
            return Err(EarError::BadParams(
                "f_max and sigma_k must be positive".into(),
            ));
        }
        let mut kernels = Vec::with_capacity(cfg.n_orientations * cfg.n_scales);
        for v in 0..cfg.n_scales {
            let frequency = cfg.f_max / 2f64.sqrt().powi(v as i32);
            let sigma = cfg.sigma_k / frequency;
            let size = cfg
                .kernel_size
                .unwrap_or_else(|| auto_kernel_size(sigma, max_size));
            for u in 0..cfg.n_orientations {
                let params = GaborParams {
                    frequency,
                    theta: u as f64 * PI / cfg.n_orientations as f64,
                    psi: cfg.psi,
                    sigma,
                    gamma: cfg.gamma,
                    eta: cfg.eta,
                };
                kernels.push(gabor_kernel(&params, size)?);
            }
        }
        Ok(Self {
            kernels,
            n_orientations: cfg.n_orientations,
            n_scales: cfg.n_scales,
            downsample: cfg.downsample,
        })
    }

    pub fn kernels(&self) -> &[GaborKernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn n_orientations(&self) -> usize {
        self.n_orientations
    }

    pub fn n_scales(&self) -> usize {
        self.n_scales
    }

    pub fn downsample(&self) -> usize {
        self.downsample
    }
}

/// Zero-padded convolution `sum_{i,j} img(row - i, col - j) K(j, i)` at one pixel.
pub fn convolve_at(
    plane: &[f64],
    width: usize,
    height: usize,
    k: &GaborKernel,
    row: usize,
    col: usize,
) -> Complex64 {
    let h = k.half() as isize;
    let (r, c) = (row as isize, col as isize);
    // kernel offsets whose source pixel lies inside the image
    let i_lo = (-h).max(r - height as isize + 1);
    let i_hi = h.min(r);
    let j_lo = (-h).max(c - width as isize + 1);
    let j_hi = h.min(c);
    let (mut re, mut im) = (0.0, 0.0);
    let size = k.size();
    for i in i_lo..=i_hi {
        let src_row = &plane[((r - i) as usize) * width..][..width];
        let k_row = ((i + h) as usize) * size;
        for j in j_lo..=j_hi {
            let px = src_row[(c - j) as usize];
            let kidx = k_row + (j + h) as usize;
            re += px * k.re()[kidx];
            im += px * k.im()[kidx];
        }
    }
    Complex64::new(re, im)
}
