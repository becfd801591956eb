//! The frequency-domain measurement operator `M̂ = R·P̂·Ŷ` and related
//! objects: chipping sequences, their DFS spectrum, the frequency
//! dictionary `Ŷ` and Gram diagnostics.
//!
//! Index conventions (0-based storage):
//!
//! * Frequency rows of `P̂` and `Ŷ` are `l = 0..N_T`, at `ω_l = -π + 2πl/N_T`.
//! * Column `j` of `Ŷ` is the atom with delay index `n = j + 1`.
//! * Row `m` of `R` selects `l = (N_T - M)/2 + m` with weight `M^{-1/2}`.
//!
//! `N_T = B·T` is the period length; the dictionary may hold fewer atoms
//! (`N = ⌊B(T - Tp)⌋`). For the square case both coincide.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::fourier::{self, bin_index};
use crate::rng;
use crate::waveforms::{nyquist_atom, NyquistGrid, WaveformSpec};

/// Largest dimension for which dense matrices are built.
pub const DENSE_LIMIT: usize = 4096;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Pseudo-random ±1 sequence, one chip per Nyquist interval, periodic with
/// the observation interval.
///
/// Chips are drawn from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
/// one `bool` per chip, `true` mapping to `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChippingSequence {
    pub chips: Vec<f64>,
    /// `None` for explicitly supplied sequences.
    pub seed: Option<u64>,
}

impl ChippingSequence {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Constant `+1` sequence (disables the spreading; test hook).
    pub fn all_ones(n: usize) -> Self {
        ChippingSequence { chips: vec![1.0; n], seed: None }
    }

    pub fn from_chips(chips: Vec<f64>) -> Result<Self> {
        if chips.is_empty() {
            return Err(invalid("chipping sequence must not be empty"));
        }
        if chips.iter().any(|&c| c != 1.0 && c != -1.0) {
            return Err(invalid("chips must be +1 or -1"));
        }
        Ok(ChippingSequence { chips, seed: None })
    }
}

pub fn chipping_sequence(seed: u64, n: usize) -> Result<ChippingSequence> {
    if n < 1 {
        return Err(invalid("chipping sequence length must be at least 1"));
    }
    let mut r = rng::stream(seed);
    let chips = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    Ok(ChippingSequence { chips, seed: Some(seed) })
}

/// DFS coefficients `ĉ_p[k] = sum_l p[l] exp(-j2πkl/N)`.
pub fn dfs_spectrum(p: &ChippingSequence) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = p.chips.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fourier::fft(&mut c);
    c
}

/// Number of compressive samples per observation interval:
/// `M = ⌊B_cs·T⌋`, decremented when `N_T - M` is odd.
pub fn measurement_count(n_period: usize, b_cs: f64, t_obs: f64) -> Result<usize> {
    if !(b_cs > 0.0) || !(t_obs > 0.0) {
        return Err(invalid("B_cs and T must be positive"));
    }
    let mut m = (b_cs * t_obs + 1e-9).floor() as usize;
    if (n_period - m.min(n_period)) % 2 == 1 {
        m -= 1;
    }
    if m < 2 || m > n_period {
        return Err(invalid(format!("M = {m} out of range for B·T = {n_period}")));
    }
    Ok(m)
}

/// `Ŷ = Ŝ0·T̂`: `ŷ_{l,j} = N_T^{-1/2} ŝ0(ω_l) exp(-j (j+1) ω_l)`.
#[derive(Clone)]
pub struct FrequencyDictionary {
    /// `ŝ0` sampled at the DFT frequencies, natural FFT order
    /// (index `k` is frequency `2πk/N_T`).
    spectrum: Vec<Complex64>,
    n_atoms: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FrequencyDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyDictionary")
            .field("n_period", &self.spectrum.len())
            .field("n_atoms", &self.n_atoms)
            .finish()
    }
}

impl FrequencyDictionary {
    /// Dictionary of unit-energy delayed pulses.
    pub fn from_waveform(spec: &WaveformSpec, grid: &NyquistGrid) -> Result<Self> {
        spec.validate()?;
        let mut s = nyquist_atom(spec, grid.n_period);
        fourier::fft(&mut s);
        Self::from_spectrum(s, grid.n_atoms)
    }

    /// Dictionary from an arbitrary spectrum given in natural FFT order.
    pub fn from_spectrum(spectrum: Vec<Complex64>, n_atoms: usize) -> Result<Self> {
        let n = spectrum.len();
        if n == 0 || n_atoms == 0 || n_atoms > n {
            return Err(invalid(format!("need 1 <= N ({n_atoms}) <= N_T ({n})")));
        }
        Ok(FrequencyDictionary { fwd: fourier::forward_plan(n), inv: fourier::inverse_plan(n), spectrum, n_atoms })
    }

    pub fn n_period(&self) -> usize {
        self.spectrum.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// `ŝ0(ω_l)` for `l = 0..N_T` (centered order).
    pub fn centered_spectrum(&self) -> Vec<Complex64> {
        let n = self.n_period();
        (0..n).map(|l| self.spectrum[bin_index(l as i64 - n as i64 / 2, n)]).collect()
    }

    /// Unnormalized DFT of the Nyquist-rate synthesis `Ψx`, natural order.
    fn synth_spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_period();
        let mut buf = vec![ZERO; n];
        for (j, v) in x.iter().enumerate() {
            buf[(j + 1) % n] += v;
        }
        self.fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        buf
    }

    /// Adjoint of `synth_spectrum`.
    fn synth_spectrum_adjoint(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        let n = self.n_period();
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s.conj();
        }
        self.inv.process(&mut buf);
        (0..self.n_atoms).map(|j| buf[(j + 1) % n]).collect()
    }

    /// `Ŷx`, centered frequency order.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n_atoms, x.len())?;
        let n = self.n_period();
        let d = self.synth_spectrum(x);
        let s = 1.0 / (n as f64).sqrt();
        Ok((0..n).map(|l| d[bin_index(l as i64 - n as i64 / 2, n)] * s).collect())
    }

    /// `Ŷᴴy` for `y` in centered frequency order.
    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n_period();
        check_len(n, y.len())?;
        let s = 1.0 / (n as f64).sqrt();
        let mut buf = vec![ZERO; n];
        for (l, v) in y.iter().enumerate() {
            buf[bin_index(l as i64 - n as i64 / 2, n)] = v * s;
        }
        Ok(self.synth_spectrum_adjoint(buf))
    }

    /// Dense `Ŷ` built entrywise.
    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        let n = self.n_period();
        guard(n)?;
        let s0 = self.centered_spectrum();
        let scale = 1.0 / (n as f64).sqrt();
        Ok(DMatrix::from_fn(n, self.n_atoms, |l, j| {
            // exp(-j n ω_l) = exp(jπn) exp(-j2π n l / N_T), n = j + 1
            let nd = j + 1;
            let ph = PI * (nd % 2) as f64 - 2.0 * PI * ((nd * l) % n) as f64 / n as f64;
            s0[l] * Complex64::from_polar(scale, ph)
        }))
    }

    /// Gram diagnostics of `ŶᴴŶ`. The Gram matrix is Toeplitz,
    /// `G[i, j] = g[j - i]`, with `g` the circular autocorrelation of the
    /// synthesized atom.
    pub fn gram(&self) -> GramSummary {
        let n = self.n_period();
        let mut g: Vec<Complex64> = self.spectrum.iter().map(|s| Complex64::new(s.norm_sqr(), 0.0)).collect();
        self.inv.process(&mut g);
        let inv_n = 1.0 / n as f64;
        g.iter_mut().for_each(|v| *v *= inv_n);
        let mut max_off = 0.0f64;
        let mut lag = 0i64;
        for d in 1..self.n_atoms {
            for (k, v) in [(d as i64, g[d]), (-(d as i64), g[n - d])] {
                if v.norm() > max_off {
                    max_off = v.norm();
                    lag = k;
                }
            }
        }
        GramSummary {
            diagonal: g[0].re,
            max_off_diagonal: max_off,
            argmax_lag: lag,
            n_atoms: self.n_atoms,
        }
    }

    /// Dense `ŶᴴŶ`.
    pub fn gram_matrix(&self) -> Result<DMatrix<Complex64>> {
        let y = self.dense()?;
        Ok(y.adjoint() * y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    /// Common diagonal value (1 for unit-energy atoms).
    pub diagonal: f64,
    pub max_off_diagonal: f64,
    /// Column offset `j - i` at which the maximum occurs.
    pub argmax_lag: i64,
    pub n_atoms: usize,
}

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::GuardExceeded { size: n, limit: DENSE_LIMIT })
    } else {
        Ok(())
    }
}

/// Provenance record from which an operator can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub waveform: WaveformSpec,
    pub grid: NyquistGrid,
    pub m: usize,
    pub chip_seed: Option<u64>,
    /// Explicit chips, only stored when there is no seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chips: Option<Vec<f64>>,
}

/// Fast matrix-free `M̂ = R·P̂·Ŷ`.
#[derive(Clone)]
pub struct MeasurementOperator {
    spec: WaveformSpec,
    grid: NyquistGrid,
    dict: FrequencyDictionary,
    chips: ChippingSequence,
    m: usize,
}

impl fmt::Debug for MeasurementOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementOperator")
            .field("m", &self.m)
            .field("n", &self.dict.n_atoms)
            .field("n_period", &self.dict.n_period())
            .field("chip_seed", &self.chips.seed)
            .finish()
    }
}

pub fn build_fd_operator(
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    chip: &ChippingSequence,
    m: usize,
) -> Result<MeasurementOperator> {
    let n = grid.n_period;
    check_len(n, chip.len())?;
    if m < 1 || m > n {
        return Err(Error::Configuration(format!("need 1 <= M ({m}) <= N ({n})")));
    }
    if (n - m) % 2 != 0 {
        return Err(Error::Configuration(format!("N - M = {} must be even", n - m)));
    }
    Ok(MeasurementOperator {
        spec: spec.clone(),
        grid: *grid,
        dict: FrequencyDictionary::from_waveform(spec, grid)?,
        chips: chip.clone(),
        m,
    })
}

impl MeasurementOperator {
    pub fn from_descriptor(d: &OperatorDescriptor) -> Result<Self> {
        let chips = match (&d.chips, d.chip_seed) {
            (Some(c), _) => ChippingSequence::from_chips(c.clone())?,
            (None, Some(seed)) => chipping_sequence(seed, d.grid.n_period)?,
            (None, None) => return Err(invalid("descriptor has neither chip seed nor chips")),
        };
        build_fd_operator(&d.waveform, &d.grid, &chips, d.m)
    }

    pub fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            waveform: self.spec.clone(),
            grid: self.grid,
            m: self.m,
            chip_seed: self.chips.seed,
            chips: self.chips.seed.is_none().then(|| self.chips.chips.clone()),
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.dict.n_atoms
    }

    pub fn n_period(&self) -> usize {
        self.dict.n_period()
    }

    pub fn waveform(&self) -> &WaveformSpec {
        &self.spec
    }

    pub fn grid(&self) -> &NyquistGrid {
        &self.grid
    }

    pub fn chips(&self) -> &ChippingSequence {
        &self.chips
    }

    pub fn dictionary(&self) -> &FrequencyDictionary {
        &self.dict
    }

    /// Storage index (natural FFT order) of selected row `m`.
    fn row_bin(&self, m: usize) -> usize {
        bin_index(m as i64 - self.m as i64 / 2, self.n_period())
    }

    /// `M̂x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.cols(), x.len())?;
        let n = self.n_period();
        let mut buf = self.dict.synth_spectrum(x);
        // back to time, chip, forward again: circular convolution with ĉ_p
        self.dict.inv.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        for (b, c) in buf.iter_mut().zip(&self.chips.chips) {
            *b *= c * inv_n;
        }
        self.dict.fwd.process(&mut buf);
        let s = 1.0 / (self.m as f64).sqrt();
        Ok((0..self.m).map(|m| buf[self.row_bin(m)] * s).collect())
    }

    /// `M̂ᴴy`.
    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.m, y.len())?;
        let n = self.n_period();
        let s = 1.0 / (self.m as f64).sqrt();
        let mut buf = vec![ZERO; n];
        for (m, v) in y.iter().enumerate() {
            buf[self.row_bin(m)] = v * s;
        }
        self.dict.inv.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        for (b, c) in buf.iter_mut().zip(&self.chips.chips) {
            *b *= c * inv_n;
        }
        self.dict.fwd.process(&mut buf);
        Ok(self.dict.synth_spectrum_adjoint(buf))
    }

    /// Dense `R`, `P̂` and `Ŷ` built entrywise from their definitions.
    pub fn dense_factors(&self) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>)> {
        let n = self.n_period();
        guard(n)?;
        let m = self.m;
        let off = (n - m) / 2;
        let r = DMatrix::from_fn(m, n, |i, l| {
            if l == off + i {
                Complex64::new(1.0 / (m as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        let c = dfs_spectrum(&self.chips);
        let sn = 1.0 / (n as f64).sqrt();
        let p = DMatrix::from_fn(n, n, |l, i| c[(l + n - i) % n] * sn);
        Ok((r, p, self.dict.dense()?))
    }

    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        let (r, p, y) = self.dense_factors()?;
        Ok(r * (p * y))
    }

    /// Column `j` of `M̂`.
    pub fn column(&self, j: usize) -> Result<Vec<Complex64>> {
        if j >= self.cols() {
            return Err(invalid(format!("column {j} out of range")));
        }
        let mut e = vec![ZERO; self.cols()];
        e[j] = Complex64::new(1.0, 0.0);
        self.apply(&e)
    }
}

/// Shifted DFT `M^{-1/2} sum_m x[m] exp(-j ω_k m)`, `ω_k = -π + 2πk/M`.
pub fn shifted_dft(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    if m == 0 {
        return Vec::new();
    }
    // exp(jπm) = (-1)^m moves the spectrum by half a period
    let mut buf: Vec<Complex64> = x.iter().enumerate().map(|(i, v)| if i % 2 == 1 { -v } else { *v }).collect();
    fourier::fft(&mut buf);
    let s = 1.0 / (m as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Inverse of `shifted_dft`.
pub fn inverse_shifted_dft(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    if m == 0 {
        return Vec::new();
    }
    let s = 1.0 / (m as f64).sqrt();
    let mut buf = x.to_vec();
    fourier::ifft(&mut buf);
    buf.iter().enumerate().map(|(i, v)| if i % 2 == 1 { -v * s } else { v * s }).collect()
}

/// Dense time-domain measurement matrix `M̃`: column `j` is the baseband
/// front-end chain applied to atom `j` on the oversampled grid.
#[derive(Debug, Clone)]
pub struct TimeDomainOperator {
    pub matrix: DMatrix<Complex64>,
}

impl TimeDomainOperator {
    /// `M̃x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.matrix.ncols(), x.len())?;
        let v = nalgebra::DVector::from_column_slice(x);
        Ok((&self.matrix * v).iter().copied().collect())
    }
}

pub fn td_operator(
    spec: &WaveformSpec,
    grid: &NyquistGrid,
    chip: &ChippingSequence,
    cfg: &crate::frontend::FrontendConfig,
) -> Result<TimeDomainOperator> {
    guard(grid.n_period)?;
    let n = grid.n_period;
    let atom = nyquist_atom(spec, n);
    let mut matrix = DMatrix::from_element(cfg.m, grid.n_atoms, ZERO);
    for j in 0..grid.n_atoms {
        let shifted: Vec<Complex64> = (0..n).map(|l| atom[(l + n - (j + 1) % n) % n]).collect();
        let fine = fourier::bandlimited_interpolate(&shifted, cfg.oversample);
        let col = crate::frontend::baseband_samples(&fine, chip, cfg)?;
        matrix.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    Ok(TimeDomainOperator { matrix })
}
