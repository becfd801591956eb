//! Quadrature compressive sampling (QuadCS) for pulsed radar.
//!
//! The crate simulates the full acquisition and reconstruction chain:
//!
//! * [`waveforms`]: LFM and phase-coded baseband pulses, target scenes and
//!   their sparse coefficients in the waveform-matched dictionary.
//! * [`frontend`]: chipping, ideal bandpass filtering, bandpass sampling and
//!   digital quadrature demodulation, plus bandlimited noise.
//! * [`operator`]: the frequency-domain measurement operator `R·P·Y` with
//!   FFT-based apply/adjoint, a dense oracle and the time-domain matrix.
//! * [`recovery`]: basis pursuit (denoise) by Pareto root finding over
//!   spectral projected gradient LASSO solves, and OMP.
//! * [`metrics`], [`rip`] and [`harness`]: evaluation quantities, RIP bound
//!   evaluators and a reproducible Monte-Carlo runner.
//!
//! Time is circular with the observation interval as period. All random
//! draws come from ChaCha20 streams keyed by explicit 64-bit seeds.

pub mod error;
pub mod fourier;
pub mod frontend;
pub mod harness;
pub mod metrics;
pub mod operator;
pub mod recovery;
pub mod rip;
pub mod rng;
pub mod waveforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
