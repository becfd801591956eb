//! Simulation of the QuadCS acquisition chain: chipping, compressive
//! bandpass filtering, bandpass sampling at the minimum rate and digital
//! quadrature demodulation, plus a baseband-equivalent fast path and
//! bandlimited noise injection.
//!
//! All signals live on a circular grid of `L` samples per Nyquist interval
//! (`L·B·T` samples per period). Filters are ideal brick walls applied by
//! FFT masking. The compressive band holds the `M` Fourier-series bins
//! `k ∈ [-M/2, M/2 - 1]` around the carrier, the same band the row
//! selector of the frequency-domain operator keeps.
//!
//! The chipping waveform of the IF path is the chip impulse train passed
//! through an ideal lowpass of cutoff `B`. Under this model the IF path
//! and the baseband path produce identical compressive envelopes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{self, bin_index, signed_bin};
use crate::operator::ChippingSequence;
use crate::rng::Rng;
use crate::waveforms::NyquistGrid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `f_IF^cs = (4 f_L + 2 B_cs)/(4l + 1)`, valid for `1 <= l <= ⌊f_L/(2B_cs)⌋`.
pub fn bandpass_sampling_freq(f_l: f64, b_cs: f64, l: u32) -> Result<f64> {
    if !(f_l > 0.0 && b_cs > 0.0) {
        return Err(invalid("f_L and B_cs must be positive"));
    }
    let ratio = f_l / (2.0 * b_cs);
    let l_max = (ratio + 1e-9).floor();
    if l < 1 || l as f64 > l_max {
        return Err(invalid(format!("bandpass sampling index l = {l} outside [1, {l_max}]")));
    }
    if (ratio - l as f64).abs() <= 1e-12 * ratio {
        return Ok(2.0 * b_cs);
    }
    Ok((4.0 * f_l + 2.0 * b_cs) / (4.0 * l as f64 + 1.0))
}

/// Front-end configuration in minimum-rate mode (`f_IF^cs = 2B_cs`,
/// `f0 = (2l + 1/2) B_cs`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    /// Signal bandwidth `B`.
    pub bandwidth: f64,
    /// Nyquist samples per period, `B·T`.
    pub n_period: usize,
    /// Compressive samples per period.
    pub m: usize,
    /// Bandpass sampling index `l`.
    pub l_index: u32,
    /// Simulation samples per Nyquist interval.
    pub oversample: usize,
}

impl FrontendConfig {
    pub fn new(grid: &NyquistGrid, m: usize, l_index: u32, oversample: usize) -> Result<Self> {
        let cfg = FrontendConfig { bandwidth: grid.bandwidth, n_period: grid.n_period, m, l_index, oversample };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Picks the sampling index that puts `f0` closest to 450 MHz.
    pub fn with_default_carrier(grid: &NyquistGrid, m: usize, oversample: usize) -> Result<Self> {
        let b_cs = m as f64 / grid.period();
        let l = ((450e6 / b_cs - 0.5) / 2.0).round().max(1.0) as u32;
        Self::new(grid, m, l, oversample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.m > self.n_period || (self.n_period - self.m) % 2 != 0 {
            return Err(Error::Configuration(format!(
                "M = {} must be even and at most B·T = {}",
                self.m, self.n_period
            )));
        }
        if self.l_index < 1 {
            return Err(invalid("bandpass sampling index must be at least 1"));
        }
        if self.oversample < 1 {
            return Err(invalid("oversampling factor must be at least 1"));
        }
        if !(self.f0() > self.bandwidth / 2.0) {
            return Err(invalid(format!("f0 = {} must exceed B/2", self.f0())));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.n_period as f64 / self.bandwidth
    }

    /// Effective compressive bandwidth `M/T`.
    pub fn b_cs(&self) -> f64 {
        self.m as f64 / self.period()
    }

    pub fn f0(&self) -> f64 {
        (2.0 * self.l_index as f64 + 0.5) * self.b_cs()
    }

    /// `f0` in Fourier-series bins of the period.
    fn f0_bin(&self) -> usize {
        2 * self.l_index as usize * self.m + self.m / 2
    }

    pub fn f_low(&self) -> f64 {
        self.f0() - self.b_cs() / 2.0
    }

    /// Bandpass sampling rate `2B_cs`.
    pub fn f_if_cs(&self) -> f64 {
        bandpass_sampling_freq(self.f_low(), self.b_cs(), self.l_index).unwrap_or(2.0 * self.b_cs())
    }

    /// Compressive sample spacing `T_cs = 2/f_IF^cs`.
    pub fn t_cs(&self) -> f64 {
        2.0 / self.f_if_cs()
    }

    /// Filter gain `B/B_cs`.
    pub fn gain(&self) -> f64 {
        self.n_period as f64 / self.m as f64
    }

    pub fn grid_len(&self) -> usize {
        self.n_period * self.oversample
    }

    pub fn grid_rate(&self) -> f64 {
        self.oversample as f64 * self.bandwidth
    }

    /// Checks that the oversampled grid can carry the IF signal and the
    /// chipped IF signal without aliasing into the compressive band.
    pub fn check_if_grid(&self) -> Result<()> {
        let rate = self.grid_rate();
        let need = (2.0 * (self.f0() + self.bandwidth / 2.0))
            .max(2.0 * self.f0() + 1.5 * self.bandwidth + self.b_cs() / 2.0);
        if rate <= need {
            return Err(invalid(format!(
                "grid rate {rate:.6e} Hz too low for f0 = {:.6e} Hz (needs > {need:.6e} Hz)",
                self.f0()
            )));
        }
        Ok(())
    }
}

/// Compressive samples of one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// `s̃_cs[m] = I_cs[m] + j Q_cs[m]`.
    pub s_cs: Vec<Complex64>,
    pub i_cs: Vec<f64>,
    pub q_cs: Vec<f64>,
    /// Noise component of `s_cs`, when noise was injected.
    pub noise: Option<Vec<Complex64>>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl Measurements {
    pub fn from_complex(s_cs: Vec<Complex64>) -> Self {
        let i_cs = s_cs.iter().map(|v| v.re).collect();
        let q_cs = s_cs.iter().map(|v| v.im).collect();
        Measurements { s_cs, i_cs, q_cs, noise: None, seed: None, config_hash: None }
    }

    pub fn from_iq(i_cs: Vec<f64>, q_cs: Vec<f64>) -> Self {
        let s_cs = i_cs.iter().zip(&q_cs).map(|(&i, &q)| Complex64::new(i, q)).collect();
        Measurements { s_cs, i_cs, q_cs, noise: None, seed: None, config_hash: None }
    }

    /// Sum of a clean and a noise-only acquisition.
    pub fn with_noise(clean: &Measurements, noise: &Measurements) -> Result<Self> {
        crate::error::check_len(clean.s_cs.len(), noise.s_cs.len())?;
        let s: Vec<Complex64> = clean.s_cs.iter().zip(&noise.s_cs).map(|(a, b)| a + b).collect();
        let mut out = Self::from_complex(s);
        out.noise = Some(noise.s_cs.clone());
        Ok(out)
    }
}

/// Oversampling factor of a circular-grid signal of length `len`.
fn grid_factor(len: usize, n_period: usize) -> Result<usize> {
    if len == 0 || len % n_period != 0 {
        return Err(invalid(format!("signal length {len} is not a multiple of B·T = {n_period}")));
    }
    Ok(len / n_period)
}

/// Chipping waveform `p(t)` on a grid of `oversample` samples per chip:
/// the chip impulse train `τ0 sum_l ε_l δ(t - lτ0)` through an ideal
/// lowpass passing `|f| < B`. A constant sequence gives `p ≡ 1`.
pub fn chip_waveform(chips: &ChippingSequence, oversample: usize) -> Result<Vec<f64>> {
    let n = chips.len();
    let nf = n * oversample;
    if oversample < 3 {
        return Err(invalid("chip waveform needs at least 3 samples per chip"));
    }
    let c = crate::operator::dfs_spectrum(chips);
    let mut p = vec![ZERO; nf];
    let inv_n = 1.0 / n as f64;
    for a in 1 - n as i64..n as i64 {
        p[bin_index(a, nf)] += c[bin_index(a, n)] * inv_n;
    }
    fourier::ifft(&mut p);
    Ok(p.iter().map(|v| v.re).collect())
}

/// Mixes the IF samples with the chipping waveform, applies the
/// compressive bandpass filter (gain `B/B_cs`) and samples at `2B_cs`.
/// Returns the `2M` samples `y[k] = y(kT/(2M))` of one period.
pub fn mix_filter_sample(r: &[f64], chips: &ChippingSequence, cfg: &FrontendConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let l = grid_factor(r.len(), cfg.n_period)?;
    if l != cfg.oversample {
        return Err(invalid(format!("IF grid has {l} samples per Nyquist interval, config says {}", cfg.oversample)));
    }
    crate::error::check_len(cfg.n_period, chips.len())?;
    cfg.check_if_grid()?;
    let nf = r.len();
    let p = chip_waveform(chips, l)?;
    let mut buf: Vec<Complex64> = r.iter().zip(&p).map(|(a, b)| Complex64::new(a * b, 0.0)).collect();
    fourier::fft(&mut buf);
    // Fourier-series coefficients of the filtered signal folded onto the
    // 2M-point sampling grid
    let two_m = 2 * cfg.m;
    let scale = cfg.gain() / nf as f64;
    let mut folded = vec![ZERO; two_m];
    let f0 = cfg.f0_bin() as i64;
    let half = cfg.m as i64 / 2;
    for k in -half..half {
        for b in [f0 + k, -(f0 + k)] {
            folded[bin_index(b, two_m)] += buf[bin_index(b, nf)] * scale;
        }
    }
    fourier::ifft(&mut folded);
    Ok(folded.iter().map(|v| v.re).collect())
}

/// Digital quadrature demodulation of minimum-rate samples.
///
/// I path: `I[m] = (-1)^m y[2m]`. Q path: multiply by `-2 sin(kπ/2)`,
/// ideal halfband lowpass (FFT mask, half weight on the band-edge bins),
/// decimate by 2. An odd trailing sample is dropped.
pub fn quadrature_demodulate(y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let len = y.len() - y.len() % 2;
    let y = &y[..len];
    let m = len / 2;
    let i_cs = (0..m).map(|k| if k % 2 == 0 { y[2 * k] } else { -y[2 * k] }).collect();
    let mut z: Vec<Complex64> = y
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let s = match k % 4 {
                1 => 1.0,
                3 => -1.0,
                _ => 0.0,
            };
            Complex64::new(-2.0 * s * v, 0.0)
        })
        .collect();
    fourier::fft(&mut z);
    let quarter = (m / 2) as i64;
    for (i, v) in z.iter_mut().enumerate() {
        let b = signed_bin(i, len).abs();
        if b > quarter {
            *v = ZERO;
        } else if b == quarter && m % 2 == 0 {
            *v *= 0.5;
        }
    }
    fourier::ifft_normalized(&mut z);
    let q_cs = (0..m).map(|k| z[2 * k].re).collect();
    (i_cs, q_cs)
}

/// IF path: `mix_filter_sample` followed by `quadrature_demodulate`.
pub fn if_measure(r: &[f64], chips: &ChippingSequence, cfg: &FrontendConfig) -> Result<Measurements> {
    let y = mix_filter_sample(r, chips, cfg)?;
    let (i, q) = quadrature_demodulate(&y);
    Ok(Measurements::from_iq(i, q))
}

/// Baseband-equivalent path: lowpass (bins `[-M/2, M/2 - 1]`, gain
/// `B/B_cs`) of `p(t)s̃(t)`, sampled at `T/M`.
///
/// At Nyquist rate the chips multiply the samples directly; on finer
/// grids the bandlimited chipping waveform is used.
pub fn baseband_measure(s: &[Complex64], chips: &ChippingSequence, cfg: &FrontendConfig) -> Result<Measurements> {
    Ok(Measurements::from_complex(baseband_samples(s, chips, cfg)?))
}

pub(crate) fn baseband_samples(s: &[Complex64], chips: &ChippingSequence, cfg: &FrontendConfig) -> Result<Vec<Complex64>> {
    let l = grid_factor(s.len(), cfg.n_period)?;
    crate::error::check_len(cfg.n_period, chips.len())?;
    let nf = s.len();
    let mut buf: Vec<Complex64> = if l == 1 {
        s.iter().zip(&chips.chips).map(|(v, c)| v * c).collect()
    } else {
        let p = chip_waveform(chips, l)?;
        s.iter().zip(&p).map(|(v, c)| v * c).collect()
    };
    fourier::fft(&mut buf);
    let m = cfg.m;
    let scale = cfg.gain() / nf as f64;
    let mut out = vec![ZERO; m];
    let half = m as i64 / 2;
    for k in -half..half {
        out[bin_index(k, m)] = buf[bin_index(k, nf)] * scale;
    }
    fourier::ifft(&mut out);
    Ok(out)
}

/// Noise spectral level `N0·B` that gives the requested ISNR for an
/// envelope, with `ISNR = mean|r|² / (N0 B)` and `mean|r|² = mean|s̃|²/2`.
pub fn n0b_for_isnr(envelope: &[Complex64], isnr_db: f64) -> f64 {
    mean_if_power(envelope) / 10f64.powf(isnr_db / 10.0)
}

/// Mean power of the IF signal whose complex envelope is given.
pub fn mean_if_power(envelope: &[Complex64]) -> f64 {
    if envelope.is_empty() {
        return 0.0;
    }
    0.5 * fourier::norm2_sqr(envelope) / envelope.len() as f64
}

pub fn isnr_db(envelope: &[Complex64], n0b: f64) -> f64 {
    10.0 * (mean_if_power(envelope) / n0b).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisySignal {
    pub noisy: Vec<Complex64>,
    pub clean: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

/// Complex envelope of IF noise with two-sided PSD `N0/2` over the band
/// `f0 ± B/2`: circular Gaussian, bandlimited to `B`, `E|ñ(t)|² = 2 N0 B`.
pub fn bandlimited_noise(n_period: usize, oversample: usize, n0b: f64, rng: &mut Rng) -> Result<Vec<Complex64>> {
    if !(n0b >= 0.0) || !n0b.is_finite() {
        return Err(invalid(format!("N0·B must be non-negative, got {n0b}")));
    }
    let sd = n0b.sqrt(); // per real dimension: variance N0 B
    let nyq: Vec<Complex64> = (0..n_period)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sd, im * sd)
        })
        .collect();
    Ok(fourier::bandlimited_interpolate(&nyq, oversample))
}

/// Adds bandlimited noise of level `N0·B` to an envelope on a grid of
/// `len / n_period` samples per Nyquist interval.
pub fn add_bandlimited_noise(signal: &[Complex64], n_period: usize, n0b: f64, rng: &mut Rng) -> Result<NoisySignal> {
    let l = grid_factor(signal.len(), n_period)?;
    let noise = if n0b == 0.0 {
        vec![ZERO; signal.len()]
    } else {
        bandlimited_noise(n_period, l, n0b, rng)?
    };
    let noisy = signal.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(NoisySignal { noisy, clean: signal.to_vec(), noise })
}

/// Real IF noise realization matching a complex envelope noise:
/// `Re{ñ(t) exp(j2πf0 t)}` on the same grid.
pub fn noise_to_if(noise: &[Complex64], cfg: &FrontendConfig) -> Vec<f64> {
    let dt = 1.0 / cfg.grid_rate();
    let f0 = cfg.f0();
    noise
        .iter()
        .enumerate()
        .map(|(i, v)| (v * Complex64::from_polar(1.0, 2.0 * PI * (f0 * i as f64 * dt).fract())).re)
        .collect()
}
