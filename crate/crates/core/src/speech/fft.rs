//! In-place iterative radix-2 FFT.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::SpeechError;

/// Forward DFT, `X[k] = sum_n x[n] e^{-2 pi i k n / N}`. `N` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<(), SpeechError> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(SpeechError::BadFftSize(n));
    }
    let bits = n.trailing_zeros();
    if bits == 0 {
        return Ok(());
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // direct twiddles: recurrence drift would exceed the 1e-9 budget on long transforms
                let w = Complex64::from_polar(1.0, step * k as f64);
                let t = w * buf[start + k + half];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// `|X[k]|^2` for `k = 0..=n_fft/2` of the zero-padded real frame.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>, SpeechError> {
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(SpeechError::BadFftSize(n_fft));
    }
    if frame.len() > n_fft {
        return Err(SpeechError::FrameTooLong {
            frame: frame.len(),
            n_fft,
        });
    }
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    fft_in_place(&mut buf)?;
    Ok(buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect())
}
