//! FFT helpers on circular grids.
//!
//! DFT bins of a length-`n` sequence are addressed by signed frequency
//! index in `[-n/2, n/2 - 1]`; the Nyquist bin of an even-length sequence
//! is always taken as `-n/2`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward DFT: `X[k] = sum_l x[l] exp(-j 2 pi k l / n)`.
pub fn fft(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        forward_plan(buf.len()).process(buf);
    }
}

/// Unnormalized inverse DFT (no `1/n` factor).
pub fn ifft(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        inverse_plan(buf.len()).process(buf);
    }
}

/// Inverse DFT including the `1/n` factor.
pub fn ifft_normalized(buf: &mut [Complex64]) {
    ifft(buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Storage index of signed bin `k` in a length-`n` DFT.
#[inline]
pub fn bin_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Signed frequency of storage index `i` (Nyquist bin mapped to `-n/2`).
#[inline]
pub fn signed_bin(i: usize, n: usize) -> i64 {
    let i = i as i64;
    let n = n as i64;
    if i >= (n + 1) / 2 { i - n } else { i }
}

/// Periodic bandlimited interpolation of `x` onto a grid `factor` times
/// finer, keeping the DFT bins `[-n/2, n/2 - 1]` of the input.
pub fn bandlimited_interpolate(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = x.len();
    if factor <= 1 || n == 0 {
        return x.to_vec();
    }
    let mut spec = x.to_vec();
    fft(&mut spec);
    let fine = n * factor;
    let mut out = vec![Complex64::new(0.0, 0.0); fine];
    for (i, v) in spec.iter().enumerate() {
        out[bin_index(signed_bin(i, n), fine)] = *v;
    }
    ifft(&mut out);
    let s = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm2_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm1(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm()).sum()
}

pub fn norm_inf(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `sum conj(a) b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `||a - b|| / ||b||`, or `||a - b||` when `b` is zero.
pub fn relative_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let r = norm2(b);
    if r > 0.0 { d / r } else { d }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_bins_round_trip() {
        for n in [1usize, 2, 7, 8] {
            for i in 0..n {
                assert_eq!(bin_index(signed_bin(i, n), n), i);
            }
        }
        assert_eq!(signed_bin(4, 8), -4);
        assert_eq!(signed_bin(3, 8), 3);
    }

    #[test]
    fn interpolation_passes_through_samples() {
        let x: Vec<Complex64> = (0..16)
            .map(|l| Complex64::new((l as f64 * 0.3).sin(), (l as f64 * 0.11).cos()))
            .collect();
        let y = bandlimited_interpolate(&x, 4);
        for (l, v) in x.iter().enumerate() {
            assert!((y[4 * l] - v).norm() < 1e-12);
        }
    }
}
