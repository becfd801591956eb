//! Radar baseband waveforms, target scenes and the waveform-matched
//! dictionary.
//!
//! Conventions used throughout the crate:
//!
//! * The pulse occupies the half-open interval `[0, Tp)`, so it has exactly
//!   `M_b = B·Tp` Nyquist samples. Bit `m` (0-based) of a phase-coded pulse
//!   occupies `[m·T_b, (m+1)·T_b)`.
//! * Dictionary atom `j` (0-based storage) is the pulse delayed by
//!   `(j + 1)·τ0`, i.e. delay index `n = j + 1` runs over `1..=N`.
//! * Atoms are scaled to unit energy on the Nyquist grid (`atom_scale`), so
//!   the frequency-domain dictionary has unit-norm columns. Target
//!   amplitudes `v_k` are coefficients of these unit-energy atoms.
//! * Time is circular with period `T = n_period·τ0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier;

const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    Lfm,
    PhaseCoded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    /// Pulse width `Tp` in seconds.
    pub pulse_width: f64,
    /// Bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Phase code in radians, one entry per bit. Empty for LFM.
    #[serde(default)]
    pub phase_code: Vec<f64>,
    /// Zadoff-Chu root the code was generated from, if any.
    #[serde(default)]
    pub zc_root: Option<u64>,
}

impl WaveformSpec {
    pub fn lfm(pulse_width: f64, bandwidth: f64) -> Result<Self> {
        let spec = WaveformSpec {
            kind: WaveformKind::Lfm,
            pulse_width,
            bandwidth,
            phase_code: Vec::new(),
            zc_root: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn phase_coded(pulse_width: f64, bandwidth: f64, phase_code: Vec<f64>) -> Result<Self> {
        let spec = WaveformSpec {
            kind: WaveformKind::PhaseCoded,
            pulse_width,
            bandwidth,
            phase_code,
            zc_root: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Phase-coded pulse carrying a Zadoff-Chu code of length `B·Tp`.
    pub fn zadoff_chu(pulse_width: f64, bandwidth: f64, root: u64) -> Result<Self> {
        check_positive(pulse_width, bandwidth)?;
        let mb = bits_for(pulse_width, bandwidth);
        let mut spec = Self::phase_coded(pulse_width, bandwidth, zadoff_chu_code(mb, root)?)?;
        spec.zc_root = Some(root);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(self.pulse_width, self.bandwidth)?;
        match self.kind {
            WaveformKind::Lfm => Ok(()),
            WaveformKind::PhaseCoded => {
                let mb = bits_for(self.pulse_width, self.bandwidth);
                if self.phase_code.len() != mb {
                    return Err(invalid(format!(
                        "phase code has {} elements, pulse needs M_b = {mb}",
                        self.phase_code.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Chirp rate `μ = B/Tp` (meaningful for LFM only).
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth / self.pulse_width
    }

    /// Number of bits `M_b = round(Tp·B)`; also the number of Nyquist
    /// samples inside the pulse.
    pub fn num_bits(&self) -> usize {
        bits_for(self.pulse_width, self.bandwidth)
    }

    pub fn bit_width(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// Unit-modulus complex baseband pulse at time `t`, zero outside `[0, Tp)`.
    pub fn sample(&self, t: f64) -> Complex64 {
        let tol = TIME_TOL / self.bandwidth;
        if t < -tol || t >= self.pulse_width - tol {
            return Complex64::new(0.0, 0.0);
        }
        let t = t.max(0.0);
        match self.kind {
            WaveformKind::Lfm => {
                let d = t - self.pulse_width / 2.0;
                Complex64::from_polar(1.0, PI * self.chirp_rate() * d * d)
            }
            WaveformKind::PhaseCoded => {
                let m = ((t + tol) * self.bandwidth).floor() as usize;
                let m = m.min(self.phase_code.len() - 1);
                Complex64::from_polar(1.0, self.phase_code[m])
            }
        }
    }

    /// Pulse sampled at Nyquist index `l` (time `l·τ0`). For LFM the
    /// phase is evaluated in sample units to avoid accumulating rounding.
    pub fn nyquist_sample(&self, l: i64) -> Complex64 {
        let mb = self.num_bits() as i64;
        if l < 0 || l >= mb {
            return Complex64::new(0.0, 0.0);
        }
        match self.kind {
            WaveformKind::Lfm => {
                // π μ (l/B - Tp/2)^2 = π (l - M_b/2)^2 / M_b for μ = B/Tp
                let d = l as f64 - self.pulse_width * self.bandwidth / 2.0;
                Complex64::from_polar(1.0, PI * d * d / (self.pulse_width * self.bandwidth))
            }
            WaveformKind::PhaseCoded => Complex64::from_polar(1.0, self.phase_code[l as usize]),
        }
    }

    /// Energy of the pulse on the Nyquist grid, `sum_l |s0(l τ0)|^2`.
    pub fn nyquist_energy(&self) -> f64 {
        (0..self.num_bits() as i64).map(|l| self.nyquist_sample(l).norm_sqr()).sum()
    }

    /// Scale that turns the unit-modulus pulse into a unit-energy atom.
    pub fn atom_scale(&self) -> f64 {
        1.0 / self.nyquist_energy().sqrt()
    }
}

fn check_positive(tp: f64, b: f64) -> Result<()> {
    if !(tp > 0.0 && tp.is_finite()) {
        return Err(invalid(format!("pulse width must be positive, got {tp}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid(format!("bandwidth must be positive, got {b}")));
    }
    Ok(())
}

fn bits_for(tp: f64, b: f64) -> usize {
    ((tp * b).round() as usize).max(1)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu phases `φ_m`, `m = 0..M_b-1`, reduced to `[0, 2π)`:
/// `π·root·m²/M_b` for even `M_b` and `π·root·m(m+1)/M_b` for odd `M_b`.
pub fn zadoff_chu_code(mb: usize, root: u64) -> Result<Vec<f64>> {
    if mb == 0 {
        return Err(invalid("Zadoff-Chu length must be at least 1"));
    }
    if root == 0 || gcd(root, mb as u64) != 1 {
        return Err(invalid(format!("root {root} is not coprime with length {mb}")));
    }
    let modulus = 2 * mb as u128;
    Ok((0..mb as u128)
        .map(|m| {
            let q = if mb % 2 == 0 { m * m } else { m * (m + 1) };
            let num = (root as u128 % modulus) * (q % modulus) % modulus;
            PI * num as f64 / mb as f64
        })
        .collect())
}

/// Uniform time grid `start + i·step`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        TimeGrid { start, step, len }
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

/// Samples the baseband pulse `s0(t)` on a grid of step at most `1/B`
/// covering the pulse.
pub fn baseband_waveform(spec: &WaveformSpec, grid: &TimeGrid) -> Result<Vec<Complex64>> {
    spec.validate()?;
    if !(grid.step > 0.0) || grid.step > (1.0 + TIME_TOL) / spec.bandwidth {
        return Err(invalid(format!(
            "grid step {} must be positive and at most 1/B = {}",
            grid.step,
            1.0 / spec.bandwidth
        )));
    }
    let end = grid.time(grid.len.saturating_sub(1));
    if grid.len == 0 || grid.start > TIME_TOL / spec.bandwidth || end < spec.pulse_width - grid.step * (1.0 + TIME_TOL) {
        return Err(invalid("time grid does not cover [0, Tp]"));
    }
    Ok((0..grid.len).map(|i| spec.sample(grid.time(i))).collect())
}

/// The Nyquist grid of the waveform-matched dictionary on a circular
/// observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistGrid {
    /// Signal bandwidth `B` in Hz; `τ0 = 1/B`.
    pub bandwidth: f64,
    /// Dictionary size `N`.
    pub n_atoms: usize,
    /// Nyquist samples per observation interval, `B·T`.
    pub n_period: usize,
}

impl NyquistGrid {
    /// Grid for observation interval `t_obs` and pulse width `tp`, with
    /// `N = floor(B (T - Tp))` atoms and `B·T` samples per period.
    pub fn new(bandwidth: f64, t_obs: f64, tp: f64) -> Result<Self> {
        check_positive(tp, bandwidth)?;
        let bt = bandwidth * t_obs;
        let n_period = bt.round();
        if (bt - n_period).abs() > 1e-6 * bt.max(1.0) {
            return Err(invalid(format!("B·T = {bt} is not an integer")));
        }
        let n_atoms = (bandwidth * (t_obs - tp) + 1e-9).floor();
        if n_atoms < 1.0 {
            return Err(invalid("observation interval leaves no room for targets (T <= Tp)"));
        }
        Self::with_sizes(bandwidth, n_atoms as usize, n_period as usize)
    }

    pub fn with_sizes(bandwidth: f64, n_atoms: usize, n_period: usize) -> Result<Self> {
        if n_atoms < 1 || n_atoms > n_period {
            return Err(invalid(format!("need 1 <= N ({n_atoms}) <= B·T ({n_period})")));
        }
        if n_period % 2 != 0 {
            return Err(invalid(format!("B·T = {n_period} must be even")));
        }
        Ok(NyquistGrid { bandwidth, n_atoms, n_period })
    }

    pub fn tau0(&self) -> f64 {
        1.0 / self.bandwidth
    }

    pub fn period(&self) -> f64 {
        self.n_period as f64 / self.bandwidth
    }

    /// `N` computed as `floor(B·T)` (the whole window), recorded next to
    /// the dictionary size actually used.
    pub fn full_window_size(&self) -> usize {
        self.n_period
    }

    /// Delay of storage column `j`.
    pub fn atom_delay(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.tau0()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Delay `t_k` in seconds.
    pub delay: f64,
    /// Gain `v_k` in `(0, 1]`.
    pub gain: f64,
    /// Phase offset `φ_k` in radians.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScene {
    pub targets: Vec<Target>,
    pub on_grid: bool,
}

impl TargetScene {
    pub fn empty() -> Self {
        TargetScene { targets: Vec::new(), on_grid: true }
    }

    pub fn sparsity(&self) -> usize {
        self.targets.len()
    }

    /// `K` targets at distinct random Nyquist delays `{τ0, ..., N τ0}` with
    /// gains uniform in `(0, 1]` and phases uniform in `(0, 2π]`.
    pub fn random_on_grid(k: usize, grid: &NyquistGrid, rng: &mut crate::rng::Rng) -> Result<Self> {
        if k > grid.n_atoms {
            return Err(invalid(format!("K = {k} exceeds dictionary size {}", grid.n_atoms)));
        }
        let mut idx = rand::seq::index::sample(rng, grid.n_atoms, k).into_vec();
        idx.sort_unstable();
        let targets = idx
            .into_iter()
            .map(|j| Target {
                delay: grid.atom_delay(j),
                gain: 1.0 - rng.random::<f64>(),
                phase: 2.0 * PI * (1.0 - rng.random::<f64>()),
            })
            .collect();
        Ok(TargetScene { targets, on_grid: true })
    }

    /// `K` targets with delays uniform over `[lo, hi]`.
    pub fn random_off_grid(k: usize, lo: f64, hi: f64, rng: &mut crate::rng::Rng) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("off-grid delay interval is empty"));
        }
        let mut targets: Vec<Target> = (0..k)
            .map(|_| Target {
                delay: lo + (hi - lo) * rng.random::<f64>(),
                gain: 1.0 - rng.random::<f64>(),
                phase: 2.0 * PI * (1.0 - rng.random::<f64>()),
            })
            .collect();
        targets.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        Ok(TargetScene { targets, on_grid: false })
    }

    /// Checks `t_k ∈ (0, N τ0]` and, for on-grid scenes, integrality.
    pub fn validate(&self, grid: &NyquistGrid) -> Result<()> {
        let tau0 = grid.tau0();
        let hi = grid.n_atoms as f64 * tau0 * (1.0 + TIME_TOL);
        for t in &self.targets {
            if !(t.delay > 0.0 && t.delay <= hi) {
                return Err(invalid(format!(
                    "target delay {} outside (0, T - Tp] = (0, {}]",
                    t.delay,
                    grid.n_atoms as f64 * tau0
                )));
            }
            if self.on_grid && delay_index(t.delay, tau0).is_none() {
                return Err(invalid(format!("scene marked on-grid but delay {} is not a multiple of τ0", t.delay)));
            }
        }
        Ok(())
    }

    /// Complex coefficients `v_k exp(j(φ_k - 2π f0 t_k))`.
    pub fn complex_gains(&self, f0: f64) -> Vec<Complex64> {
        self.targets
            .iter()
            .map(|t| Complex64::from_polar(t.gain, t.phase - 2.0 * PI * (f0 * t.delay).fract()))
            .collect()
    }
}

fn delay_index(delay: f64, tau0: f64) -> Option<usize> {
    let x = delay / tau0;
    let n = x.round();
    ((x - n).abs() <= 1e-6 && n >= 1.0).then_some(n as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    /// `ṽ`, length `N`; entry `j` multiplies the atom delayed by `(j+1) τ0`.
    pub values: Vec<Complex64>,
    /// Storage indices of the nonzeros, ascending.
    pub support: Vec<usize>,
}

impl SparseCoefficients {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Coefficient vector of an on-grid scene in the waveform-matched
/// dictionary.
pub fn scene_to_coefficients(scene: &TargetScene, grid: &NyquistGrid, f0: f64) -> Result<SparseCoefficients> {
    if !scene.on_grid {
        return Err(Error::OffGrid("scene flagged off-grid".into()));
    }
    scene.validate(grid)?;
    let mut values = vec![Complex64::new(0.0, 0.0); grid.n_atoms];
    let mut support = Vec::with_capacity(scene.sparsity());
    for (t, g) in scene.targets.iter().zip(scene.complex_gains(f0)) {
        let n = delay_index(t.delay, grid.tau0()).ok_or_else(|| Error::OffGrid(format!("delay {}", t.delay)))?;
        let j = n - 1;
        if values[j] != Complex64::new(0.0, 0.0) {
            return Err(invalid(format!("two targets share delay index {n}")));
        }
        values[j] = g;
        support.push(j);
    }
    support.sort_unstable();
    Ok(SparseCoefficients { values, support })
}

/// Unit-energy atom with zero delay on the circular Nyquist grid.
pub fn nyquist_atom(spec: &WaveformSpec, n_period: usize) -> Vec<Complex64> {
    let scale = spec.atom_scale();
    let mut atom = vec![Complex64::new(0.0, 0.0); n_period];
    for l in 0..spec.num_bits() as i64 {
        atom[fourier::bin_index(l, n_period)] += spec.nyquist_sample(l) * scale;
    }
    atom
}

/// Nyquist-rate synthesis `Ψ ṽ` over one period: circular convolution of
/// the unit-energy atom with the coefficients placed at their delays.
pub fn synthesize(values: &[Complex64], spec: &WaveformSpec, grid: &NyquistGrid) -> Result<Vec<Complex64>> {
    crate::error::check_len(grid.n_atoms, values.len())?;
    let n = grid.n_period;
    let mut atom = nyquist_atom(spec, n);
    let mut placed = vec![Complex64::new(0.0, 0.0); n];
    for (j, v) in values.iter().enumerate() {
        placed[(j + 1) % n] += v;
    }
    fourier::fft(&mut atom);
    fourier::fft(&mut placed);
    for (p, a) in placed.iter_mut().zip(&atom) {
        *p *= a;
    }
    fourier::ifft_normalized(&mut placed);
    Ok(placed)
}

/// Complex envelope `s(t) = sum_k ṽ_k ψ(t - t_k)` of a scene on the
/// circular grid with `oversample` samples per Nyquist interval.
///
/// Nyquist samples are evaluated directly from the pulse (any delay,
/// on- or off-grid); finer grids are the periodic bandlimited
/// interpolation of those samples, which is the analog signal model of the
/// front-end simulation.
pub fn complex_envelope(
    scene: &TargetScene,
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    f0: f64,
    oversample: usize,
) -> Result<Vec<Complex64>> {
    spec.validate()?;
    scene.validate(grid)?;
    if oversample == 0 {
        return Err(invalid("oversampling factor must be at least 1"));
    }
    let n = grid.n_period;
    let tau0 = grid.tau0();
    let period = grid.period();
    let scale = spec.atom_scale();
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    for (t, g) in scene.targets.iter().zip(scene.complex_gains(f0)) {
        if let Some(d) = delay_index(t.delay, tau0) {
            for l in 0..spec.num_bits() {
                s[(l + d) % n] += g * scale * spec.nyquist_sample(l as i64);
            }
        } else {
            for (l, v) in s.iter_mut().enumerate() {
                let tau = (l as f64 * tau0 - t.delay).rem_euclid(period);
                *v += g * scale * spec.sample(tau);
            }
        }
    }
    Ok(fourier::bandlimited_interpolate(&s, oversample))
}

/// Real IF signal `r(t) = Re{s(t) exp(j 2π f0 t)}` on the oversampled
/// circular grid.
pub fn if_signal(
    scene: &TargetScene,
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    f0: f64,
    oversample: usize,
) -> Result<Vec<f64>> {
    let rate = oversample as f64 * spec.bandwidth;
    if !(f0 > spec.bandwidth / 2.0) {
        return Err(invalid(format!("IF f0 = {f0} must exceed B/2")));
    }
    if rate <= 2.0 * (f0 + spec.bandwidth / 2.0) {
        return Err(invalid(format!(
            "grid rate {rate} Hz violates the IF Nyquist condition > {}",
            2.0 * (f0 + spec.bandwidth / 2.0)
        )));
    }
    let s = complex_envelope(scene, spec, grid, f0, oversample)?;
    let dt = 1.0 / rate;
    Ok(s.iter()
        .enumerate()
        .map(|(i, v)| {
            let ph = 2.0 * PI * (f0 * i as f64 * dt).fract();
            (v * Complex64::from_polar(1.0, ph)).re
        })
        .collect())
}
