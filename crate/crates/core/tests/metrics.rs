use num_complex::Complex64;
use proptest::prelude::*;
use quadcs::metrics::*;
use quadcs::waveforms::{synthesize, NyquistGrid, Target, TargetScene, WaveformSpec};

const Z: Complex64 = Complex64::new(0.0, 0.0);

fn setup() -> (WaveformSpec, NyquistGrid) {
    (WaveformSpec::lfm(10.24e-6, 100e6).unwrap(), NyquistGrid::new(100e6, 20.48e-6, 10.24e-6).unwrap())
}

fn coeffs(n: usize, entries: &[(usize, Complex64)]) -> Vec<Complex64> {
    let mut v = vec![Z; n];
    for &(j, c) in entries {
        v[j] = c;
    }
    v
}

fn scene(delays: &[f64]) -> TargetScene {
    TargetScene {
        targets: delays.iter().map(|&d| Target { delay: d, gain: 1.0, phase: 0.0 }).collect(),
        on_grid: false,
    }
}

#[test]
fn relative_error_examples() {
    let v = coeffs(16, &[(3, Complex64::new(1.0, -2.0)), (9, Complex64::new(0.5, 0.0))]);
    assert_eq!(relative_error(&v, &v).unwrap(), 0.0);
    assert!((relative_error(&v, &vec![Z; 16]).unwrap() - 1.0).abs() < 1e-15);
    let s: Vec<Complex64> = v.iter().map(|c| c * (1.0 + 1e-7)).collect();
    let e = relative_error(&v, &s).unwrap();
    assert!((e - 1e-7).abs() < 1e-15);
    assert!(e <= SUCCESS_THRESHOLD);
    assert!(relative_error(&vec![Z; 4], &vec![Z; 4]).is_err());
    assert!(relative_error(&v, &v[..3]).is_err());
}

#[test]
fn psr_counts() {
    assert_eq!(psr(&[true, false, true, true]).unwrap(), 0.75);
    assert!(psr(&[]).is_err());
}

#[test]
fn infinite_snrs_hit_the_sentinel() {
    let clean = vec![vec![Complex64::new(1.0, 1.0); 8]; 3];
    let silent = vec![vec![Z; 8]; 3];
    assert_eq!(osnr_db(&clean, &silent).unwrap(), SNR_CAP_DB);
    assert_eq!(rsnr_coefficient_db(&clean, &clean).unwrap(), SNR_CAP_DB);
    assert!(osnr_db(&[], &silent).is_err());
    let (spec, grid) = setup();
    let v = vec![coeffs(grid.n_atoms, &[(10, Complex64::new(1.0, 0.0))])];
    assert_eq!(rsnr_db(&v, &v, &spec, &grid).unwrap(), SNR_CAP_DB);
}

#[test]
fn snr_ratio_of_means() {
    let clean = vec![vec![Complex64::new(1.0, 0.0); 10], vec![Complex64::new(3.0, 0.0); 10]];
    let noise = vec![vec![Complex64::new(1.0, 0.0); 10], vec![Complex64::new(0.0, 0.0); 10]];
    // mean clean energy 50, mean noise energy 5
    assert!((osnr_db(&clean, &noise).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn coefficient_and_synthesis_rsnr_agree() {
    // near-orthonormal dictionary: both spaces give the same RSNR
    let (spec, grid) = setup();
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for t in 0..20 {
        let a = coeffs(grid.n_atoms, &[(37 * t + 5, Complex64::new(1.0, 0.3)), (11 * t + 400, Complex64::new(-0.4, 0.9))]);
        let mut b = a.clone();
        b[(53 * t + 17) % grid.n_atoms] += Complex64::new(0.05, -0.02);
        b[37 * t + 5] *= 0.97;
        truth.push(a);
        est.push(b);
    }
    let r1 = rsnr_db(&truth, &est, &spec, &grid).unwrap();
    let r2 = rsnr_coefficient_db(&truth, &est).unwrap();
    assert!((r1 - r2).abs() <= 0.2, "{r1} {r2}");
}

#[test]
fn amp_phase_closed_forms() {
    let (spec, grid) = setup();
    let v = coeffs(grid.n_atoms, &[(100, Complex64::new(0.8, 0.1)), (612, Complex64::new(-0.2, 0.7))]);
    assert_eq!(amp_phase_errors(&v, &v, &spec, &grid, PhaseSamples::All).unwrap(), (0.0, 0.0));
    let doubled: Vec<Complex64> = v.iter().map(|c| c * 2.0).collect();
    let (a, p) = amp_phase_errors(&v, &doubled, &spec, &grid, PhaseSamples::All).unwrap();
    assert!((a - 1.0).abs() < 1e-12 && p.abs() < 1e-12);

    let theta = 0.4f64;
    let rot = Complex64::from_polar(1.0, theta);
    let turned: Vec<Complex64> = v.iter().map(|c| c * rot).collect();
    let (a, p) = amp_phase_errors(&v, &turned, &spec, &grid, PhaseSamples::All).unwrap();
    assert!((a - (rot - 1.0).norm()).abs() < 1e-12);
    // direct evaluation: count the envelope samples that carry a phase
    let env = synthesize(&v, &spec, &grid).unwrap();
    let peak = env.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let nonzero = env.iter().filter(|s| s.norm() > 1e-12 * peak).count();
    let n = env.len() as f64;
    assert!((p - theta * (nonzero as f64).sqrt() / n).abs() < 1e-9, "{p}");
}

#[test]
fn phase_variant_ignores_weak_samples() {
    let s = vec![Complex64::new(1.0, 0.0), Complex64::new(1e-4, 0.0)];
    let e = vec![Complex64::new(1.0, 0.0), Complex64::new(-1e-4, 0.0)];
    let (_, all) = amp_phase_from_envelopes(&s, &e, PhaseSamples::All).unwrap();
    let (_, strong) = amp_phase_from_envelopes(&s, &e, PhaseSamples::AboveOnePercent).unwrap();
    assert!((all - std::f64::consts::PI / 2.0).abs() < 1e-12);
    assert_eq!(strong, 0.0);
    assert!(amp_phase_from_envelopes(&[Z; 2], &e, PhaseSamples::All).is_err());
}

#[test]
fn hit_rate_examples() {
    let (_, grid) = setup();
    // support exactly on the true on-grid delays
    let delays: Vec<f64> = [20usize, 300, 700].iter().map(|&j| grid.atom_delay(j)).collect();
    let est = coeffs(grid.n_atoms, &[(20, Complex64::new(1.0, 0.0)), (300, Complex64::new(0.0, 2.0)), (700, Complex64::new(-0.5, 0.0))]);
    assert_eq!(hit_rate(&est, &scene(&delays), 0.0, &grid).unwrap(), (3, 1.0));

    // single target at 5.005 µs, largest coefficient at 5.00 µs
    let est = coeffs(grid.n_atoms, &[(499, Complex64::new(1.0, 0.0)), (900, Complex64::new(0.1, 0.0))]);
    assert!((grid.atom_delay(499) - 5.0e-6).abs() < 1e-15);
    assert_eq!(hit_rate(&est, &scene(&[5.005e-6]), 30e-9, &grid).unwrap(), (1, 1.0));

    // four cells away with a three-cell window
    let est = coeffs(grid.n_atoms, &[(104, Complex64::new(1.0, 0.0))]);
    let t = grid.atom_delay(100);
    assert_eq!(hit_rate(&est, &scene(&[t]), 3.0 * grid.tau0(), &grid).unwrap(), (0, 0.0));
    assert_eq!(hit_rate(&est, &scene(&[t]), 4.0 * grid.tau0(), &grid).unwrap(), (1, 1.0));

    assert!(hit_rate(&est, &TargetScene::empty(), 1e-8, &grid).is_err());
}

#[test]
fn hit_matching_is_one_to_one() {
    let (_, grid) = setup();
    // two strong estimates next to one target: only one can claim it
    let est = coeffs(grid.n_atoms, &[(50, Complex64::new(1.0, 0.0)), (51, Complex64::new(0.9, 0.0))]);
    let sc = scene(&[grid.atom_delay(50), grid.atom_delay(600)]);
    assert_eq!(hit_rate(&est, &sc, 3.0 * grid.tau0(), &grid).unwrap(), (1, 0.5));
}

#[test]
fn aggregate_uses_ratio_of_means() {
    let m = |clean: f64, noise: f64, s: f64, d: f64, ok: bool| TrialMetrics {
        e_r: if ok { 0.0 } else { 1.0 },
        success: ok,
        isnr_db: 10.0,
        osnr_db: ratio_db(clean, noise),
        rsnr_db: ratio_db(s, d),
        err_amp: 0.1,
        err_phase: 0.01,
        hits: 1,
        hit_rate: 1.0,
        clean_energy: clean,
        noise_energy: noise,
        synth_energy: s,
        synth_error_energy: d,
    };
    let a = Aggregate::from_trials(&[m(1.0, 1.0, 10.0, 1.0, true), m(19.0, 1.0, 10.0, 0.0, false)]).unwrap();
    assert_eq!(a.trials, 2);
    assert_eq!(a.psr, 0.5);
    assert!((a.osnr_db - 10.0).abs() < 1e-12);
    assert!((a.rsnr_db - ratio_db(10.0, 0.5)).abs() < 1e-12);
    assert!(Aggregate::from_trials(&[]).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_error_is_scale_invariant(
        re in proptest::collection::vec(-5.0f64..5.0, 8),
        im in proptest::collection::vec(-5.0f64..5.0, 8),
        pert in proptest::collection::vec(-1.0f64..1.0, 8),
        alpha in 0.001f64..1000.0,
    ) {
        let v: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        prop_assume!(v.iter().any(|c| c.norm() > 1e-3));
        let e: Vec<Complex64> = v.iter().zip(&pert).map(|(c, p)| c + p).collect();
        let vs: Vec<Complex64> = v.iter().map(|c| c * alpha).collect();
        let es: Vec<Complex64> = e.iter().map(|c| c * alpha).collect();
        let a = relative_error(&v, &e).unwrap();
        let b = relative_error(&vs, &es).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn hit_rate_monotone_in_delta(
        est_idx in proptest::collection::vec(0usize..1024, 1..8),
        tgt in proptest::collection::vec(0.01e-6f64..10.24e-6, 1..6),
        d1 in 0.0f64..200e-9,
        d2 in 0.0f64..200e-9,
    ) {
        let (_, grid) = setup();
        let mut est = vec![Z; grid.n_atoms];
        for (r, &j) in est_idx.iter().enumerate() {
            est[j] = Complex64::new(1.0 + r as f64, 0.0);
        }
        let sc = scene(&tgt);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (h_lo, r_lo) = hit_rate(&est, &sc, lo, &grid).unwrap();
        let (h_hi, r_hi) = hit_rate(&est, &sc, hi, &grid).unwrap();
        prop_assert!(h_lo <= h_hi);
        prop_assert!((0.0..=1.0).contains(&r_lo) && (0.0..=1.0).contains(&r_hi));
    }
}
