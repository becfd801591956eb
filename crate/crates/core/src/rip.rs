//! Restricted isometry: σ_ṽ through circulant diagonalization, Monte-Carlo
//! concentration-of-measure checks over chipping seeds, and the sample
//! complexity / bandwidth bounds with their empirical LS fits.
//!
//! `σ_ṽ` is the spectral norm of `N^{-1/2} C̃(Ŷṽ)`, where `C̃(u)` is the
//! circulant with rows `u` rotated left. Its singular values are the DFT
//! magnitudes of `u`, so `σ_ṽ = N^{-1/2} ‖F̃ᴴŶṽ‖_∞` with `F̃` unnormalized.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::fourier::{ifft, norm2, norm2_sqr, norm_inf};
use crate::operator::{build_fd_operator, chipping_sequence, FrequencyDictionary};
use crate::rng;
use crate::waveforms::{NyquistGrid, WaveformSpec};

/// Parameters of the RIP sample bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipParams {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Restricted isometry constant δ_K.
    pub delta: f64,
    /// Failure probability η.
    pub eta: f64,
    /// Concentration tolerance.
    pub epsilon: f64,
}

impl RipParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(invalid(format!("need 1 <= K <= N, got K={} N={}", self.k, self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("δ_K must lie in (0,1), got {}", self.delta)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid(format!("η must lie in (0,1), got {}", self.eta)));
        }
        Ok(())
    }
}

/// `N^{-1/2} max |F̃ᴴu|` for a length-N vector `u`.
pub fn sigma_from_vector(u: &[Complex64]) -> f64 {
    let mut buf = u.to_vec();
    ifft(&mut buf);
    norm_inf(&buf) / (u.len() as f64).sqrt()
}

/// `σ_ṽ` of `Ŷṽ`. Homogeneous: scaling `ṽ` by `α` scales the result by
/// `|α|`; see [`sigma_v_unit`] for the normalized value.
pub fn sigma_v(dict: &FrequencyDictionary, v: &[Complex64]) -> Result<f64> {
    Ok(sigma_from_vector(&dict.apply(v)?))
}

/// `σ_ṽ` of `ṽ/‖ṽ‖₂`.
pub fn sigma_v_unit(dict: &FrequencyDictionary, v: &[Complex64]) -> Result<f64> {
    check_len(dict.n_atoms(), v.len())?;
    let n = norm2(v);
    if n == 0.0 {
        return Err(Error::Undefined("σ of a zero vector".into()));
    }
    Ok(sigma_v(dict, v)? / n)
}

/// The circulant `C̃(u)`: row `i` is `u` rotated left by `i`.
pub fn circulant(u: &[Complex64]) -> DMatrix<Complex64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |i, j| u[(i + j) % n])
}

/// Dense oracle for [`sigma_from_vector`]: largest singular value of
/// `N^{-1/2} C̃(u)`.
pub fn sigma_dense(u: &[Complex64]) -> f64 {
    let s = circulant(u).singular_values();
    s.max() / (u.len() as f64).sqrt()
}

/// Outcome of a concentration check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComReport {
    pub m: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub trials: usize,
    /// Seeds with `‖M̂ṽ‖²/‖ṽ‖²` outside `[1-ε, 1+ε]`.
    pub failures: usize,
    pub empirical: f64,
    /// `4e⁴ exp(-Mε/(16σ²))`.
    pub bound: f64,
    /// `ε >= 64σ²/M` and `M >= 64σ²`.
    pub valid: bool,
    /// Empirical failure rate at or below the bound. `None` when the check
    /// is skipped: outside the validity range or a vacuous bound (>= 1).
    pub bound_holds: Option<bool>,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// `4e⁴ exp(-Mε/(16σ²))`.
pub fn com_bound(m: usize, epsilon: f64, sigma: f64) -> f64 {
    4.0 * 4f64.exp() * (-(m as f64) * epsilon / (16.0 * sigma * sigma)).exp()
}

/// Energy ratios `‖M̂ṽ‖²/‖ṽ‖²` over chipping seeds `base_seed + i`.
pub fn energy_ratios(
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    m: usize,
    v: &[Complex64],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    check_len(grid.n_atoms, v.len())?;
    let e = norm2_sqr(v);
    if e == 0.0 {
        return Err(Error::Undefined("energy ratio of a zero vector".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(base_seed, &[i as u64]);
            let op = build_fd_operator(spec, grid, &chipping_sequence(seed, grid.n_period)?, m)?;
            Ok(norm2_sqr(&op.apply(v)?) / e)
        })
        .collect()
}

/// Monte-Carlo concentration check for a fixed `ṽ` over chipping seeds.
pub fn com_check(
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    m: usize,
    v: &[Complex64],
    epsilon: f64,
    trials: usize,
    base_seed: u64,
) -> Result<ComReport> {
    if trials == 0 {
        return Err(invalid("concentration check needs at least one trial"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("ε must be positive"));
    }
    let dict = FrequencyDictionary::from_waveform(spec, grid)?;
    let sigma = sigma_v_unit(&dict, v)?;
    let ratios = energy_ratios(spec, grid, m, v, trials, base_seed)?;
    let failures = ratios.iter().filter(|&&r| r < 1.0 - epsilon || r > 1.0 + epsilon).count();
    let empirical = failures as f64 / trials as f64;
    let bound = com_bound(m, epsilon, sigma);
    let floor = 64.0 * sigma * sigma;
    let valid = m as f64 >= floor && epsilon >= floor / m as f64;
    let bound_holds = (valid && bound < 1.0).then_some(empirical <= bound);
    Ok(ComReport {
        m,
        sigma,
        epsilon,
        trials,
        failures,
        empirical,
        bound,
        valid,
        bound_holds,
        mean_ratio: ratios.iter().sum::<f64>() / trials as f64,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn bound_core(k: usize, log_term: f64, delta: f64, eta: f64) -> f64 {
    let k = k as f64;
    32.0 / delta * k * (k * log_term + 2.0 * k.ln() + (1.0 / eta).ln() + 6.08)
}

/// `M_min = ⌈32 δ⁻¹ K (K ln(eN/K) + 2 ln K + ln η⁻¹ + 6.08)⌉`.
pub fn rip_sample_bound(p: &RipParams) -> Result<usize> {
    p.validate()?;
    let log_term = (std::f64::consts::E * p.n as f64 / p.k as f64).ln();
    Ok(bound_core(p.k, log_term, p.delta, p.eta).ceil() as usize)
}

/// `B_cs_min = 32 δ⁻¹ (K/T)(K ln(eBT/K) + 2 ln K + ln η⁻¹ + 6.08)` in Hz.
pub fn bcs_bound(k: usize, t_obs: f64, bandwidth: f64, delta: f64, eta: f64) -> Result<f64> {
    let n = bandwidth * t_obs;
    if !(t_obs > 0.0 && bandwidth > 0.0) {
        return Err(invalid("T and B must be positive"));
    }
    RipParams { k, n: n.round() as usize, m: 0, delta, eta, epsilon: 1.0 }.validate()?;
    let log_term = (std::f64::consts::E * n / k as f64).ln();
    Ok(bound_core(k, log_term, delta, eta) / t_obs)
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_len(x.len(), y.len())?;
    if x.len() < 3 {
        return Err(invalid("a line fit needs at least 3 points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx <= 1e-24 * mx.abs().max(1.0).powi(2) * n {
        return Err(invalid("degenerate abscissa: all x equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept: my - slope * mx, r_squared, points: x.len() })
}

/// One frontier sample: sparsity, observation interval, bandwidth and the
/// smallest sufficient compressive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub k: usize,
    pub t_obs: f64,
    pub bandwidth: f64,
    pub b_cs: f64,
}

impl FrontierSample {
    /// `(K/T) log(BT/K)` with the given logarithm.
    pub fn abscissa(&self, log: fn(f64) -> f64) -> f64 {
        self.k as f64 / self.t_obs * log(self.bandwidth * self.t_obs / self.k as f64)
    }
}

/// LS fits of `B_cs` against `(K/T) log(BT/K)` in both log bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcsLaw {
    pub natural: LinearFit,
    pub log10: LinearFit,
}

pub fn empirical_bcs_law(samples: &[FrontierSample]) -> Result<BcsLaw> {
    let y: Vec<f64> = samples.iter().map(|s| s.b_cs).collect();
    let xn: Vec<f64> = samples.iter().map(|s| s.abscissa(f64::ln)).collect();
    let x10: Vec<f64> = samples.iter().map(|s| s.abscissa(f64::log10)).collect();
    Ok(BcsLaw { natural: fit_line(&xn, &y)?, log10: fit_line(&x10, &y)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_vector() {
        let c = Complex64::new(0.3, -0.4);
        let u = vec![c; 64];
        assert!((sigma_from_vector(&u) - 0.5 * 8.0).abs() < 1e-12);
    }

    #[test]
    fn sample_bound_arithmetic() {
        let p = RipParams { k: 1, n: 1024, m: 0, delta: 0.5, eta: 0.01, epsilon: 1.0 };
        assert_eq!(rip_sample_bound(&p).unwrap(), 1192);
        assert!(rip_sample_bound(&RipParams { k: 2000, ..p }).is_err());
    }

    #[test]
    fn exact_line() {
        let x = [1e6, 2e6, 3.5e6, 7e6];
        let y: Vec<f64> = x.iter().map(|v| 1.78 * v + 0.85e6).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 1.78).abs() < 1e-9);
        assert!((f.intercept - 0.85e6).abs() < 1e-9 * 0.85e6);
        assert!(fit_line(&[2.0; 4], &y).is_err());
        assert!(fit_line(&x[..2], &y[..2]).is_err());
    }
}
