//! Evaluation quantities: reconstruction error and success, ISNR/OSNR/RSNR,
//! amplitude and phase errors of the reconstructed envelope, hit rate.
//!
//! Ensemble SNRs are ratios of sample means, e.g.
//! `OSNR = mean‖s̃_cs‖² / mean‖ñ_cs‖²`. An infinite ratio is reported as
//! `SNR_CAP_DB`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::fourier::{norm2, norm2_sqr};
use crate::waveforms::{synthesize, NyquistGrid, TargetScene, WaveformSpec};

/// Sentinel for an infinite SNR.
pub const SNR_CAP_DB: f64 = 300.0;

/// Default success threshold on `E_r`.
pub const SUCCESS_THRESHOLD: f64 = 1e-6;

/// `E_r = ‖v* - v‖₂ / ‖v‖₂`.
pub fn relative_error(truth: &[Complex64], estimate: &[Complex64]) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    let n = norm2(truth);
    if n == 0.0 {
        return Err(Error::Undefined("relative error of a zero true vector".into()));
    }
    let d: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(d / n)
}

/// Fraction of successful trials.
pub fn psr(successes: &[bool]) -> Result<f64> {
    if successes.is_empty() {
        return Err(invalid("PSR needs at least one trial"));
    }
    Ok(successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64)
}

/// `10 log10(num/den)`, capped for a zero denominator.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return SNR_CAP_DB;
    }
    if num <= 0.0 {
        return -SNR_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

fn mean<T>(items: &[T], f: impl Fn(&T) -> f64) -> f64 {
    items.iter().map(f).sum::<f64>() / items.len() as f64
}

/// `ISNR = mean|r|² / (N0 B)` in dB.
pub fn isnr_db(mean_if_power: f64, n0b: f64) -> f64 {
    ratio_db(mean_if_power, n0b)
}

/// `OSNR = mean‖s̃_cs‖² / mean‖ñ_cs‖²` over an ensemble of clean
/// measurements and noise-only measurements.
pub fn osnr_db(clean: &[Vec<Complex64>], noise: &[Vec<Complex64>]) -> Result<f64> {
    if clean.is_empty() || noise.is_empty() {
        return Err(invalid("OSNR needs a non-empty ensemble"));
    }
    Ok(ratio_db(mean(clean, |v| norm2_sqr(v)), mean(noise, |v| norm2_sqr(v))))
}

/// `RSNR = mean‖Ψv‖² / mean‖Ψ(v - v*)‖²`.
pub fn rsnr_db(
    truth: &[Vec<Complex64>],
    estimates: &[Vec<Complex64>],
    spec: &WaveformSpec,
    grid: &NyquistGrid,
) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(invalid("RSNR needs paired, non-empty ensembles"));
    }
    let mut sig = 0.0;
    let mut err = 0.0;
    for (v, e) in truth.iter().zip(estimates) {
        let (s, d) = synthesis_energies(v, e, spec, grid)?;
        sig += s;
        err += d;
    }
    Ok(ratio_db(sig, err))
}

/// RSNR computed on coefficients, `mean‖v‖² / mean‖v - v*‖²`.
pub fn rsnr_coefficient_db(truth: &[Vec<Complex64>], estimates: &[Vec<Complex64>]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(invalid("RSNR needs paired, non-empty ensembles"));
    }
    let mut sig = 0.0;
    let mut err = 0.0;
    for (v, e) in truth.iter().zip(estimates) {
        check_len(v.len(), e.len())?;
        sig += norm2_sqr(v);
        err += v.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    }
    Ok(ratio_db(sig, err))
}

/// `(‖Ψv‖², ‖Ψ(v - v*)‖²)`.
pub fn synthesis_energies(
    truth: &[Complex64],
    estimate: &[Complex64],
    spec: &WaveformSpec,
    grid: &NyquistGrid,
) -> Result<(f64, f64)> {
    check_len(truth.len(), estimate.len())?;
    let diff: Vec<Complex64> = truth.iter().zip(estimate).map(|(a, b)| a - b).collect();
    Ok((norm2_sqr(&synthesize(truth, spec, grid)?), norm2_sqr(&synthesize(&diff, spec, grid)?)))
}

fn wrap(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Which envelope samples enter the phase error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSamples {
    /// Every sample of the period.
    #[default]
    All,
    /// Samples where `|Ψv|` exceeds 1% of its peak.
    AboveOnePercent,
}

/// `ErrAmp = ‖Ψv - Ψv*‖₂/‖Ψv‖₂` and
/// `ErrPhase = (1/N)‖Arg(Ψv) - Arg(Ψv*)‖₂`, phase differences wrapped to
/// `(-π, π]`, `N` the number of envelope samples. The normalization is
/// `1/N`, not the RMS `1/√N`.
pub fn amp_phase_errors(
    truth: &[Complex64],
    estimate: &[Complex64],
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    samples: PhaseSamples,
) -> Result<(f64, f64)> {
    check_len(truth.len(), estimate.len())?;
    let s = synthesize(truth, spec, grid)?;
    let e = synthesize(estimate, spec, grid)?;
    amp_phase_from_envelopes(&s, &e, samples)
}

pub fn amp_phase_from_envelopes(s: &[Complex64], e: &[Complex64], samples: PhaseSamples) -> Result<(f64, f64)> {
    check_len(s.len(), e.len())?;
    let ns = norm2(s);
    if ns == 0.0 {
        return Err(Error::Undefined("amplitude error of a zero envelope".into()));
    }
    let amp = s.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / ns;
    let peak = s.iter().map(|v| v.norm()).fold(0.0, f64::max);
    // roundoff-level samples are exact zeros with Arg 0
    let zero = 1e-12 * peak;
    let arg = |v: &Complex64| if v.norm() <= zero { 0.0 } else { v.arg() };
    let floor = match samples {
        PhaseSamples::All => -1.0,
        PhaseSamples::AboveOnePercent => 0.01 * peak,
    };
    let ph: f64 = s
        .iter()
        .zip(e)
        .filter(|(a, _)| a.norm() > floor)
        .map(|(a, b)| wrap(arg(a) - arg(b)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((amp, ph / s.len() as f64))
}

/// Hit count and rate: the `K` largest coefficients of `v*` are matched
/// greedily, largest first, to the nearest unmatched true delay within
/// `Δ`.
pub fn hit_rate(estimate: &[Complex64], scene: &TargetScene, delta: f64, grid: &NyquistGrid) -> Result<(usize, f64)> {
    let k = scene.sparsity();
    if k == 0 {
        return Err(invalid("hit rate needs at least one target"));
    }
    if !(delta >= 0.0) {
        return Err(invalid("Δ must be non-negative"));
    }
    let mut idx: Vec<usize> = (0..estimate.len()).collect();
    idx.sort_by(|&a, &b| estimate[b].norm().total_cmp(&estimate[a].norm()).then(a.cmp(&b)));
    let tol = 1e-9 * grid.tau0();
    let mut used = vec![false; k];
    let mut hits = 0;
    for &j in idx.iter().take(k) {
        let t = grid.atom_delay(j);
        let best = scene
            .targets
            .iter()
            .enumerate()
            .filter(|(i, tg)| !used[*i] && (tg.delay - t).abs() <= delta + tol)
            .min_by(|a, b| (a.1.delay - t).abs().total_cmp(&(b.1.delay - t).abs()));
        if let Some((i, _)) = best {
            used[i] = true;
            hits += 1;
        }
    }
    Ok((hits, hits as f64 / k as f64))
}

/// Per-trial metrics. Energies are kept so that ensemble SNRs can be formed
/// as ratios of means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub e_r: f64,
    pub success: bool,
    pub isnr_db: f64,
    pub osnr_db: f64,
    pub rsnr_db: f64,
    pub err_amp: f64,
    pub err_phase: f64,
    pub hits: usize,
    pub hit_rate: f64,
    /// `‖s̃_cs‖²` of the clean measurements.
    pub clean_energy: f64,
    /// `‖ñ_cs‖²`.
    pub noise_energy: f64,
    /// `‖Ψv‖²`.
    pub synth_energy: f64,
    /// `‖Ψ(v - v*)‖²`.
    pub synth_error_energy: f64,
}

/// Per-point aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub psr: f64,
    pub mean_e_r: f64,
    pub isnr_db: f64,
    pub osnr_db: f64,
    pub rsnr_db: f64,
    /// Standard error of the per-trial RSNR in dB.
    pub rsnr_stderr_db: f64,
    pub err_amp: f64,
    pub err_phase: f64,
    pub hit_rate: f64,
}

impl Aggregate {
    pub fn from_trials(t: &[TrialMetrics]) -> Option<Self> {
        if t.is_empty() {
            return None;
        }
        let n = t.len() as f64;
        let rs: Vec<f64> = t.iter().map(|m| m.rsnr_db).collect();
        let rs_mean = rs.iter().sum::<f64>() / n;
        let var = if t.len() > 1 { rs.iter().map(|v| (v - rs_mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Some(Aggregate {
            trials: t.len(),
            psr: t.iter().filter(|m| m.success).count() as f64 / n,
            mean_e_r: mean(t, |m| m.e_r),
            isnr_db: mean(t, |m| m.isnr_db),
            osnr_db: ratio_db(mean(t, |m| m.clean_energy), mean(t, |m| m.noise_energy)),
            rsnr_db: ratio_db(mean(t, |m| m.synth_energy), mean(t, |m| m.synth_error_energy)),
            rsnr_stderr_db: (var / n).sqrt(),
            err_amp: mean(t, |m| m.err_amp),
            err_phase: mean(t, |m| m.err_phase),
            hit_rate: mean(t, |m| m.hit_rate),
        })
    }
}
