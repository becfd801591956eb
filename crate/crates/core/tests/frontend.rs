use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use quadcs::fourier;
use quadcs::frontend::*;
use quadcs::operator::{build_fd_operator, chipping_sequence, shifted_dft, td_operator, ChippingSequence};
use quadcs::rng;
use quadcs::waveforms::{complex_envelope, if_signal, scene_to_coefficients, NyquistGrid, TargetScene, WaveformSpec};
use rand::Rng;

fn radar_grid() -> (WaveformSpec, NyquistGrid) {
    let spec = WaveformSpec::lfm(10.24e-6, 100e6).unwrap();
    let grid = NyquistGrid::new(100e6, 20.48e-6, spec.pulse_width).unwrap();
    (spec, grid)
}

/// Random envelope whose Fourier-series support is the bins `lo..=hi`,
/// on a grid of `l` samples per Nyquist interval.
fn band_envelope(n_period: usize, l: usize, lo: i64, hi: i64, seed: u64) -> Vec<Complex64> {
    let nf = n_period * l;
    let mut r = rng::stream(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); nf];
    for k in lo..=hi {
        spec[fourier::bin_index(k, nf)] = Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5);
    }
    fourier::ifft(&mut spec);
    spec
}

/// Evaluates a circular-grid signal between samples through its Fourier
/// series; `frac` is the time as a fraction of the period.
fn eval_at(s: &[Complex64], frac: f64) -> Complex64 {
    let n = s.len();
    let mut c = s.to_vec();
    fourier::fft(&mut c);
    c.iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, 2.0 * PI * fourier::signed_bin(i, n) as f64 * frac))
        .sum::<Complex64>()
        / n as f64
}

fn modulate(s: &[Complex64], cfg: &FrontendConfig) -> Vec<f64> {
    let dt = 1.0 / cfg.grid_rate();
    s.iter()
        .enumerate()
        .map(|(i, v)| (v * Complex64::from_polar(1.0, 2.0 * PI * (cfg.f0() * i as f64 * dt).fract())).re)
        .collect()
}

#[test]
fn bandpass_sampling_examples() {
    let f = bandpass_sampling_freq(440e6, 10e6, 22).unwrap();
    assert_eq!(f, 20e6);
    assert!(bandpass_sampling_freq(440e6, 10e6, 23).is_err());
    assert!(bandpass_sampling_freq(440e6, 10e6, 0).is_err());
    let g = bandpass_sampling_freq(445e6, 10e6, 20).unwrap();
    assert!((g - (4.0 * 445e6 + 20e6) / 81.0).abs() < 1e-3);
    // 450 MHz is (2*22 + 1/2) * 10 MHz: minimum-rate condition holds
    let f_l: f64 = 450e6 - 5e6;
    assert!(((f_l / 20e6) - 22.25).abs() < 1e-12);
}

#[test]
fn config_derived_quantities() {
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 16).unwrap();
    assert_eq!(cfg.l_index, 22);
    assert!((cfg.b_cs() - 204.0 / 20.48e-6).abs() < 1e-3);
    assert!((cfg.f_if_cs() - 2.0 * cfg.b_cs()).abs() < 1e-3);
    assert!((cfg.t_cs() - 20.48e-6 / 204.0).abs() < 1e-18);
    assert!((400e6..=500e6).contains(&cfg.f0()));
    assert!((cfg.gain() - 2048.0 / 204.0).abs() < 1e-12);
    cfg.check_if_grid().unwrap();
    let low = FrontendConfig::new(&grid, 204, 22, 8).unwrap();
    assert!(low.check_if_grid().is_err());
    assert!(FrontendConfig::new(&grid, 203, 22, 16).is_err());
}

#[test]
fn chip_waveform_at_nyquist_instants() {
    // each DFS residue except DC is passed twice: p(lτ0) = 2ε_l - mean(ε)
    let chips = chipping_sequence(4, 64).unwrap();
    let mean = chips.chips.iter().sum::<f64>() / 64.0;
    let p = chip_waveform(&chips, 8).unwrap();
    for (l, c) in chips.chips.iter().enumerate() {
        assert!((p[8 * l] - (2.0 * c - mean)).abs() < 1e-12);
    }
    let ones = chip_waveform(&ChippingSequence::all_ones(64), 4).unwrap();
    assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn zero_input_gives_zero_samples() {
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 16).unwrap();
    let chips = chipping_sequence(1, grid.n_period).unwrap();
    let y = mix_filter_sample(&vec![0.0; cfg.grid_len()], &chips, &cfg).unwrap();
    assert_eq!(y.len(), 408);
    assert!(y.iter().all(|v| *v == 0.0));
    let m = baseband_measure(&vec![Complex64::new(0.0, 0.0); grid.n_period], &chips, &cfg).unwrap();
    assert!(m.s_cs.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn rejects_mismatched_grids() {
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 16).unwrap();
    let chips = chipping_sequence(1, grid.n_period).unwrap();
    assert!(mix_filter_sample(&vec![0.0; 8 * grid.n_period], &chips, &cfg).is_err());
    assert!(mix_filter_sample(&vec![0.0; 1000], &chips, &cfg).is_err());
    assert!(baseband_measure(&vec![Complex64::new(0.0, 0.0); 2 * grid.n_period], &chips, &cfg).is_err());
}

#[test]
fn sign_pattern_of_minimum_rate_sampling() {
    // p = 1 and an envelope inside the compressive band: y[k] = Re{g s(t_k) j^k}
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 16).unwrap();
    let s = band_envelope(grid.n_period, 16, -101, 101, 3);
    let r = modulate(&s, &cfg);
    let y = mix_filter_sample(&r, &ChippingSequence::all_ones(grid.n_period), &cfg).unwrap();
    let g = cfg.gain();
    let at: Vec<Complex64> = (0..408).map(|k| eval_at(&s, k as f64 / 408.0)).collect();
    for (k, v) in y.iter().enumerate() {
        let jk = Complex64::new(0.0, 1.0).powu(k as u32);
        let expect = (at[k] * g * jk).re;
        assert!((v - expect).abs() < 1e-9 * g, "k={k}");
    }
    let (i, q) = quadrature_demodulate(&y);
    for m in 0..204 {
        let want = at[2 * m] * g;
        assert!((i[m] - want.re).abs() < 1e-9 * g);
        assert!((q[m] - want.im).abs() < 1e-9 * g);
    }
}

#[test]
fn i_path_undoes_the_sign_pattern_exactly() {
    let a: Vec<f64> = (0..10).map(|m| m as f64 * 0.37 - 1.0).collect();
    let mut y = vec![0.0; 20];
    for (m, v) in a.iter().enumerate() {
        y[2 * m] = if m % 2 == 0 { *v } else { -v };
        y[2 * m + 1] = 0.25;
    }
    let (i, _) = quadrature_demodulate(&y);
    assert_eq!(i, a);
    // odd trailing sample dropped
    y.push(9.0);
    assert_eq!(quadrature_demodulate(&y).0.len(), 10);
}

#[test]
fn in_phase_tone_has_no_quadrature_output() {
    let m = 64;
    let y: Vec<f64> = (0..2 * m)
        .map(|k| {
            let t = k as f64 / (2 * m) as f64;
            let env = (2.0 * PI * 5.0 * t).cos();
            env * Complex64::new(0.0, 1.0).powu(k as u32).re
        })
        .collect();
    let (i, q) = quadrature_demodulate(&y);
    let imax = i.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(q.iter().all(|v| v.abs() <= 1e-3 * imax));
}

#[test]
fn baseband_path_matches_operator() {
    let (spec, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 16).unwrap();
    for seed in 0..5u64 {
        let chips = chipping_sequence(seed, grid.n_period).unwrap();
        let op = build_fd_operator(&spec, &grid, &chips, 204).unwrap();
        let mut r = rng::stream(100 + seed);
        let scene = TargetScene::random_on_grid(10, &grid, &mut r).unwrap();
        let v = scene_to_coefficients(&scene, &grid, cfg.f0()).unwrap();
        let want = op.apply(&v.values).unwrap();
        for l in [1usize, 4] {
            let s = complex_envelope(&scene, &spec, &grid, cfg.f0(), l).unwrap();
            let meas = baseband_measure(&s, &chips, &cfg).unwrap();
            assert!(fourier::relative_diff(&shifted_dft(&meas.s_cs), &want) <= 1e-10);
        }
    }
}

#[test]
fn passthrough_with_gain_when_unchipped() {
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 1).unwrap();
    let s = band_envelope(grid.n_period, 1, -102, 101, 9);
    let meas = baseband_measure(&s, &ChippingSequence::all_ones(grid.n_period), &cfg).unwrap();
    let step = grid.n_period as f64 / 204.0;
    // s is bandlimited to the compressive band; evaluate it at m T/M through
    // its Fourier series
    let mut coef = s.clone();
    fourier::fft(&mut coef);
    for m in 0..204 {
        let t = m as f64 * step;
        let direct: Complex64 = (-102i64..102)
            .map(|k| coef[fourier::bin_index(k, grid.n_period)] * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * t / grid.n_period as f64))
            .sum::<Complex64>()
            / grid.n_period as f64;
        assert!((meas.s_cs[m] - direct * cfg.gain()).norm() < 1e-9);
    }
}

fn path_gap(l: usize, l_index: u32, seeds: std::ops::Range<u64>) -> (f64, f64) {
    let (spec, grid) = radar_grid();
    let cfg = FrontendConfig::new(&grid, 204, l_index, l).unwrap();
    let mut worst_i = 0.0f64;
    let mut worst_bins = 0.0f64;
    for seed in seeds {
        let chips = chipping_sequence(seed, grid.n_period).unwrap();
        let mut r = rng::stream(seed + 50);
        let scene = TargetScene::random_on_grid(8, &grid, &mut r).unwrap();
        let s = complex_envelope(&scene, &spec, &grid, cfg.f0(), l).unwrap();
        let rif = if_signal(&scene, &spec, &grid, cfg.f0(), l).unwrap();
        let fast = baseband_measure(&s, &chips, &cfg).unwrap();
        let slow = if_measure(&rif, &chips, &cfg).unwrap();
        let di: f64 = fast.i_cs.iter().zip(&slow.i_cs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ni: f64 = fast.i_cs.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_i = worst_i.max(di / ni);
        // compare every frequency bin except the band edge, whose
        // imaginary part does not survive minimum-rate sampling
        let a = shifted_dft(&fast.s_cs);
        let b = shifted_dft(&slow.s_cs);
        worst_bins = worst_bins.max(fourier::relative_diff(&b[1..], &a[1..]));
    }
    (worst_i, worst_bins)
}

#[test]
fn if_path_matches_baseband_path_at_l16() {
    let (i, bins) = path_gap(16, 22, 0..3);
    assert!(i <= 1e-3, "{i:e}");
    assert!(bins <= 1e-3, "{bins:e}");
}

#[test]
fn if_path_matches_baseband_path_at_l8_lower_carrier() {
    let (i, bins) = path_gap(8, 10, 3..5);
    assert!(i <= 1e-2, "{i:e}");
    assert!(bins <= 1e-2, "{bins:e}");
}

#[test]
fn time_domain_operator_matches_fd_operator() {
    let spec = WaveformSpec::lfm(1.28e-6, 100e6).unwrap();
    let grid = NyquistGrid::new(100e6, 2.56e-6, spec.pulse_width).unwrap();
    let cfg = FrontendConfig::with_default_carrier(&grid, 26, 4).unwrap();
    let chips = chipping_sequence(2, grid.n_period).unwrap();
    let td = td_operator(&spec, &grid, &chips, &cfg).unwrap();
    let fd = build_fd_operator(&spec, &grid, &chips, 26).unwrap();
    let mut r = rng::stream(1);
    for _ in 0..5 {
        let scene = TargetScene::random_on_grid(4, &grid, &mut r).unwrap();
        let v = scene_to_coefficients(&scene, &grid, cfg.f0()).unwrap();
        let a = shifted_dft(&td.apply(&v.values).unwrap());
        let b = fd.apply(&v.values).unwrap();
        assert!(fourier::relative_diff(&a, &b) <= 1e-3);
    }
}

#[test]
fn isnr_calibration() {
    let s = vec![Complex64::new(2f64.sqrt(), 0.0); 10_000]; // unit IF power
    let n0b = n0b_for_isnr(&s, 10.0);
    assert!((n0b - 0.1).abs() < 1e-12);
    let mut r = rng::stream(5);
    let noise = bandlimited_noise(10_000, 1, n0b, &mut r).unwrap();
    let p = mean_if_power(&noise);
    assert!((10.0 * (p / n0b).log10()).abs() <= 0.2);
    assert!((isnr_db(&s, n0b) - 10.0).abs() < 1e-9);
}

#[test]
fn zero_noise_leaves_signal_unchanged() {
    let s = band_envelope(64, 4, -5, 5, 1);
    let mut r = rng::stream(1);
    let out = add_bandlimited_noise(&s, 64, 0.0, &mut r).unwrap();
    assert_eq!(out.noisy, s);
    assert!(add_bandlimited_noise(&s, 64, -1.0, &mut r).is_err());
}

#[test]
fn noise_measurement_energy_matches_theory() {
    let (_, grid) = radar_grid();
    let cfg = FrontendConfig::with_default_carrier(&grid, 204, 1).unwrap();
    let n0b = 0.01;
    let mut total = 0.0;
    for seed in 0..200u64 {
        let chips = chipping_sequence(seed, grid.n_period).unwrap();
        let mut r = rng::stream(seed + 1000);
        let n = bandlimited_noise(grid.n_period, 1, n0b, &mut r).unwrap();
        let m = baseband_measure(&n, &chips, &cfg).unwrap();
        total += fourier::norm2_sqr(&shifted_dft(&m.s_cs));
    }
    let mean = total / 200.0;
    let theory = 2.0 * grid.n_period as f64 * n0b;
    assert!((mean / theory - 1.0).abs() <= 0.05, "{mean} vs {theory}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chain_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grid = NyquistGrid::with_sizes(100e6, 100, 128).unwrap();
        let cfg = FrontendConfig::new(&grid, 26, 10, 1).unwrap();
        let chips = chipping_sequence(seed, 128).unwrap();
        let s1 = band_envelope(128, 1, -64, 63, seed);
        let s2 = band_envelope(128, 1, -64, 63, seed ^ 1);
        let comb: Vec<Complex64> = s1.iter().zip(&s2).map(|(x, y)| x * a + y * b).collect();
        let m1 = baseband_measure(&s1, &chips, &cfg).unwrap().s_cs;
        let m2 = baseband_measure(&s2, &chips, &cfg).unwrap().s_cs;
        let mc = baseband_measure(&comb, &chips, &cfg).unwrap().s_cs;
        let lin: Vec<Complex64> = m1.iter().zip(&m2).map(|(x, y)| x * a + y * b).collect();
        prop_assert!(fourier::relative_diff(&mc, &lin) <= 1e-10 || fourier::norm2(&lin) < 1e-12);
    }

    #[test]
    fn sign_pattern_identity(vals in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let mut y = Vec::new();
        for (m, v) in vals.iter().enumerate() {
            y.push(if m % 2 == 0 { *v } else { -v });
            y.push(0.0);
        }
        let (i, _) = quadrature_demodulate(&y);
        prop_assert_eq!(i, vals);
    }
}
