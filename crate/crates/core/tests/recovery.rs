use num_complex::Complex64;
use proptest::prelude::*;
use quadcs::fourier::{norm1, norm2, relative_diff};
use quadcs::operator::{build_fd_operator, chipping_sequence, MeasurementOperator};
use quadcs::recovery::*;
use quadcs::rng;
use quadcs::waveforms::{scene_to_coefficients, NyquistGrid, TargetScene, WaveformSpec};
use rand_distr::{Distribution, StandardNormal};

fn op_for(n_period: usize, n_atoms: usize, m: usize, seed: u64) -> MeasurementOperator {
    let tp = (n_period - n_atoms).max(4) as f64 / 100e6;
    let spec = WaveformSpec::lfm(tp, 100e6).unwrap();
    let grid = NyquistGrid::with_sizes(100e6, n_atoms, n_period).unwrap();
    build_fd_operator(&spec, &grid, &chipping_sequence(seed, n_period).unwrap(), m).unwrap()
}

fn radar_op(m: usize, seed: u64) -> (MeasurementOperator, NyquistGrid) {
    let spec = WaveformSpec::lfm(10.24e-6, 100e6).unwrap();
    let grid = NyquistGrid::new(100e6, 20.48e-6, 10.24e-6).unwrap();
    (build_fd_operator(&spec, &grid, &chipping_sequence(seed, grid.n_period).unwrap(), m).unwrap(), grid)
}

fn sparse(n: usize, k: usize, r: &mut rng::Rng) -> Vec<Complex64> {
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for j in rand::seq::index::sample(r, n, k).into_iter() {
        x[j] = Complex64::new(StandardNormal.sample(r), StandardNormal.sample(r));
    }
    x
}

fn noise(m: usize, level: f64, r: &mut rng::Rng) -> Vec<Complex64> {
    (0..m)
        .map(|_| {
            let re: f64 = StandardNormal.sample(r);
            let im: f64 = StandardNormal.sample(r);
            Complex64::new(re, im) * level
        })
        .collect()
}

#[test]
fn l1_ball_projection() {
    let x = vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)];
    let p = project_l1_ball(&x, 3.0);
    assert!((norm1(&p) - 3.0).abs() < 1e-12);
    // phases preserved
    assert!((p[0].arg() - x[0].arg()).abs() < 1e-12);
    assert_eq!(project_l1_ball(&x, 10.0), x);
    assert!(project_l1_ball(&x, 0.0).iter().all(|v| v.norm() == 0.0));
    // magnitudes shrink by a common threshold: 5 - θ + 1 - θ + 1 - θ = 3 → θ = 4/3 > 1
    assert!((p[0].norm() - 3.0).abs() < 1e-12 && p[1].norm() == 0.0);
}

#[test]
fn zero_measurements_give_zero() {
    let op = op_for(256, 200, 52, 1);
    let b = vec![Complex64::new(0.0, 0.0); 52];
    let res = solve_bp(&op, &b, &SolverSettings::default()).unwrap();
    assert!(res.x.iter().all(|v| v.norm() == 0.0));
    assert!(res.converged);
}

#[test]
fn single_atom_recovered_by_bp() {
    let op = op_for(256, 200, 52, 2);
    let mut x = vec![Complex64::new(0.0, 0.0); 200];
    x[77] = Complex64::new(0.3, -0.8);
    let b = op.apply(&x).unwrap();
    let res = solve_bp(&op, &b, &SolverSettings::default()).unwrap();
    // exact-support least squares oracle
    let ls = support_least_squares(&op, &b, &[77]).unwrap();
    assert!(relative_diff(&ls, &x) < 1e-12);
    assert!(relative_diff(&res.x, &x) <= 1e-6, "{}", relative_diff(&res.x, &x));
    assert!(res.converged);
    assert!(res.residual_norm <= 1e-8 * norm2(&b) * (1.0 + 1e-4));
}

#[test]
fn radar_regime_bp_recovers_k10() {
    let (_, grid) = radar_op(204, 0);
    let mut ok = 0;
    for seed in 0..20u64 {
        let (op, _) = radar_op(204, seed);
        let mut r = rng::stream(seed + 500);
        let scene = TargetScene::random_on_grid(10, &grid, &mut r).unwrap();
        let v = scene_to_coefficients(&scene, &grid, 443e6).unwrap();
        let b = op.apply(&v.values).unwrap();
        let res = solve_bp(&op, &b, &SolverSettings::default()).unwrap();
        if relative_diff(&res.x, &v.values) <= 1e-6 {
            ok += 1;
        }
    }
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn large_epsilon_gives_zero() {
    let op = op_for(256, 200, 52, 3);
    let mut r = rng::stream(3);
    let x = sparse(200, 3, &mut r);
    let b = op.apply(&x).unwrap();
    let res = solve_bpdn(&op, &b, norm2(&b) * 1.01, &SolverSettings::default()).unwrap();
    assert!(res.x.iter().all(|v| v.norm() == 0.0));
    assert!(res.converged);
}

#[test]
fn tiny_epsilon_matches_bp() {
    let op = op_for(256, 200, 60, 4);
    let mut r = rng::stream(4);
    let x = sparse(200, 4, &mut r);
    let b = op.apply(&x).unwrap();
    let s = SolverSettings::default();
    let bp = solve_bp(&op, &b, &s).unwrap();
    let dn = solve_bpdn(&op, &b, 1e-8 * norm2(&b), &s).unwrap();
    assert!(relative_diff(&dn.x, &bp.x) <= 1e-3, "{} {:?} {} {} {}", relative_diff(&dn.x, &bp.x), dn.status, dn.iterations, relative_diff(&bp.x, &x), dn.residual_norm / norm2(&b));
    assert!(relative_diff(&bp.x, &x) <= 1e-6);
}

#[test]
fn bpdn_is_feasible_with_small_gap() {
    let op = op_for(512, 400, 100, 5);
    let mut r = rng::stream(5);
    let x = sparse(400, 6, &mut r);
    let clean = op.apply(&x).unwrap();
    let n = noise(100, 0.02, &mut r);
    let b: Vec<Complex64> = clean.iter().zip(&n).map(|(a, c)| a + c).collect();
    let eps = norm2(&n);
    let res = solve_bpdn(&op, &b, eps, &SolverSettings::default()).unwrap();
    assert!(res.converged, "{:?}", res.status);
    assert!(res.residual_norm <= eps * (1.0 + 1e-4));
    assert!((res.residual_norm - eps).abs() <= 1e-3 * eps);
    // ℓ1 of the solution does not exceed that of the truth (truth is feasible)
    assert!(res.l1_norm <= norm1(&x) * (1.0 + 1e-4));
}

#[test]
fn trace_is_recorded_when_requested() {
    let op = op_for(256, 200, 52, 6);
    let mut r = rng::stream(6);
    let x = sparse(200, 2, &mut r);
    let b = op.apply(&x).unwrap();
    let s = SolverSettings { trace: true, ..Default::default() };
    let res = solve_bpdn(&op, &b, 0.01 * norm2(&b), &s).unwrap();
    assert!(!res.trace.is_empty());
    let mut buf = Vec::new();
    res.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iteration,residual_norm,l1_norm,tau\n"));
    assert_eq!(text.lines().count(), res.trace.len() + 1);
}

#[test]
fn iteration_cap_is_flagged() {
    let op = op_for(256, 200, 52, 7);
    let mut r = rng::stream(7);
    let x = sparse(200, 8, &mut r);
    let b = op.apply(&x).unwrap();
    let s = SolverSettings { max_iter: 3, ..Default::default() };
    let res = solve_bpdn(&op, &b, 1e-3 * norm2(&b), &s).unwrap();
    assert!(!res.converged);
    assert_eq!(res.status, SolverStatus::IterationLimit);
}

#[test]
fn epsilon_formula() {
    assert_eq!(epsilon_from_noise(1024, 0.0, 100e6), 0.0);
    assert!((epsilon_from_noise(1024, 0.1, 1.0) - 102.4f64.sqrt()).abs() < 1e-12);
    assert!((102.4f64.sqrt() - 10.119).abs() < 1e-3);
}

#[test]
fn omp_picks_column_first() {
    let op = op_for(128, 100, 40, 8);
    let dense = DenseOperator(op.dense().unwrap());
    let b = dense.column(37);
    let res = solve_omp(&dense, &b, 3, 1e-12).unwrap();
    assert!(res.x[37].norm() > 0.99);
    assert!(res.residual_norm < 1e-10);
    assert_eq!(res.iterations, 1);
    assert!(solve_omp(&dense, &b, 41, 0.0).is_err());
}

#[test]
fn omp_exact_support_well_separated() {
    let op = op_for(128, 100, 40, 9);
    let dense = DenseOperator(op.dense().unwrap());
    let mut x = vec![Complex64::new(0.0, 0.0); 100];
    x[10] = Complex64::new(1.0, 0.2);
    x[60] = Complex64::new(-0.7, 0.5);
    x[90] = Complex64::new(0.1, 0.9);
    let b = dense.apply(&x);
    let res = solve_omp(&dense, &b, 3, 1e-12).unwrap();
    let sup: Vec<usize> = (0..100).filter(|&j| res.x[j].norm() > 1e-9).collect();
    assert_eq!(sup, vec![10, 60, 90]);
    // residual orthogonal to the selected atoms
    let r: Vec<Complex64> = b.iter().zip(dense.apply(&res.x)).map(|(a, c)| a - c).collect();
    let c = dense.adjoint(&r);
    for j in sup {
        assert!(c[j].norm() <= 1e-10);
    }
}

#[test]
fn omp_support_recovery_rate() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let op = op_for(128, 100, 40, seed);
        let dense = DenseOperator(op.dense().unwrap());
        let mut r = rng::stream(seed + 77);
        let x = sparse(100, 4, &mut r);
        let b = dense.apply(&x);
        let res = solve_omp(&dense, &b, 4, 1e-12).unwrap();
        let truth: Vec<usize> = (0..100).filter(|&j| x[j].norm() > 0.0).collect();
        let got: Vec<usize> = (0..100).filter(|&j| res.x[j].norm() > 1e-9).collect();
        if truth == got {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn l1_norm_decreases_with_epsilon() {
    let op = op_for(256, 200, 60, 10);
    let mut r = rng::stream(10);
    let x = sparse(200, 5, &mut r);
    let b: Vec<Complex64> = op.apply(&x).unwrap().iter().zip(noise(60, 0.01, &mut r)).map(|(a, c)| a + c).collect();
    let s = SolverSettings::default();
    let mut prev = f64::INFINITY;
    for eps in [0.05, 0.1, 0.2, 0.4] {
        let res = solve_bpdn(&op, &b, eps * norm2(&b), &s).unwrap();
        assert!(res.l1_norm <= prev * (1.0 + 1e-3));
        prev = res.l1_norm;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_equivariance(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let op = op_for(256, 200, 60, seed);
        let mut r = rng::stream(seed);
        let x = sparse(200, 4, &mut r);
        let b: Vec<Complex64> = op.apply(&x).unwrap().iter().zip(noise(60, 0.01, &mut r)).map(|(a, c)| a + c).collect();
        let eps = 0.1 * norm2(&b);
        let s = SolverSettings::default();
        let base = solve_bpdn(&op, &b, eps, &s).unwrap();
        let scaled_b: Vec<Complex64> = b.iter().map(|v| v * alpha).collect();
        let scaled = solve_bpdn(&op, &scaled_b, alpha * eps, &s).unwrap();
        let want: Vec<Complex64> = base.x.iter().map(|v| v * alpha).collect();
        prop_assert!(relative_diff(&scaled.x, &want) <= 1e-6);
        prop_assert!(scaled.residual_norm <= alpha * eps * (1.0 + 1e-4));
    }

    #[test]
    fn phase_equivariance(seed in 0u64..1000, theta in -3.14f64..3.14) {
        let op = op_for(256, 200, 60, seed);
        let mut r = rng::stream(seed + 1);
        let x = sparse(200, 4, &mut r);
        let b: Vec<Complex64> = op.apply(&x).unwrap().iter().zip(noise(60, 0.01, &mut r)).map(|(a, c)| a + c).collect();
        let eps = 0.1 * norm2(&b);
        let s = SolverSettings::default();
        let base = solve_bpdn(&op, &b, eps, &s).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        let rb: Vec<Complex64> = b.iter().map(|v| v * rot).collect();
        let rotated = solve_bpdn(&op, &rb, eps, &s).unwrap();
        let want: Vec<Complex64> = base.x.iter().map(|v| v * rot).collect();
        prop_assert!(relative_diff(&rotated.x, &want) <= 1e-6);
    }

    #[test]
    fn feasibility_holds(seed in 0u64..1000, frac in 0.02f64..0.5) {
        let op = op_for(256, 200, 60, seed);
        let mut r = rng::stream(seed + 2);
        let x = sparse(200, 5, &mut r);
        let b: Vec<Complex64> = op.apply(&x).unwrap().iter().zip(noise(60, 0.02, &mut r)).map(|(a, c)| a + c).collect();
        let eps = frac * norm2(&b);
        let res = solve_bpdn(&op, &b, eps, &SolverSettings::default()).unwrap();
        prop_assert!(res.residual_norm <= eps * (1.0 + 1e-4));
        prop_assert!(res.converged);
    }
}
