//! Sparse recovery: basis pursuit, basis pursuit denoise and orthogonal
//! matching pursuit over complex coefficients.
//!
//! BPDN is solved by root finding on the Pareto curve
//! `φ(τ) = min{‖b - Ax‖₂ : ‖x‖₁ <= τ}` with Newton updates
//! `τ += ‖r‖(‖r‖ - σ)/‖Aᴴr‖∞`; each LASSO subproblem is solved by spectral
//! projected gradient with a nonmonotone line search. Projection onto the
//! complex ℓ1 ball shrinks magnitudes and keeps phases.
//!
//! BP is BPDN with `σ = 1e-8‖b‖`, followed by a least-squares refit on the
//! recovered support that is kept only if it lowers the residual.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::fourier::{inner, norm1, norm2, norm2_sqr, norm_inf};
use crate::operator::{MeasurementOperator, TimeDomainOperator};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A linear map with an exact adjoint.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64>;

    fn column(&self, j: usize) -> Vec<Complex64> {
        let mut e = vec![ZERO; self.cols()];
        e[j] = Complex64::new(1.0, 0.0);
        self.apply(&e)
    }
}

impl LinearOperator for MeasurementOperator {
    fn rows(&self) -> usize {
        MeasurementOperator::rows(self)
    }
    fn cols(&self) -> usize {
        MeasurementOperator::cols(self)
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        MeasurementOperator::apply(self, x).expect("dimension checked by caller")
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        MeasurementOperator::adjoint(self, y).expect("dimension checked by caller")
    }
}

/// Explicit matrix operator.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<Complex64>);

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.0.nrows()
    }
    fn cols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (&self.0 * DVector::from_column_slice(x)).iter().copied().collect()
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (self.0.adjoint() * DVector::from_column_slice(y)).iter().copied().collect()
    }
    fn column(&self, j: usize) -> Vec<Complex64> {
        self.0.column(j).iter().copied().collect()
    }
}

impl LinearOperator for TimeDomainOperator {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (&self.matrix * DVector::from_column_slice(x)).iter().copied().collect()
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (self.matrix.adjoint() * DVector::from_column_slice(y)).iter().copied().collect()
    }
    fn column(&self, j: usize) -> Vec<Complex64> {
        self.matrix.column(j).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bp,
    Bpdn,
    Omp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Relative slack on the residual constraint.
    pub feas_tol: f64,
    /// Relative duality gap of the LASSO subproblems.
    pub opt_tol: f64,
    /// `σ/‖b‖` used in BP mode.
    pub bp_sigma: f64,
    /// Record per-iteration residual and ℓ1 norm.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { max_iter: 10_000, feas_tol: 1e-4, opt_tol: 1e-4, bp_sigma: 1e-8, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    IterationLimit,
    /// `σ` is below the smallest achievable residual.
    Infeasible,
    LineSearchFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual_norm: f64,
    pub l1_norm: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub x: Vec<Complex64>,
    /// `‖b - Ax‖₂`, recomputed from `x`.
    pub residual_norm: f64,
    /// `sum |x_n|`, recomputed from `x`.
    pub l1_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolverStatus,
    pub wall_time: f64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl SolverResult {
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "residual_norm", "l1_norm", "tau"])?;
        for t in &self.trace {
            out.write_record([
                t.iteration.to_string(),
                format!("{:.9e}", t.residual_norm),
                format!("{:.9e}", t.l1_norm),
                format!("{:.9e}", t.tau),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `ε = sqrt(N N0 B)`.
pub fn epsilon_from_noise(n: usize, n0: f64, bandwidth: f64) -> f64 {
    (n as f64 * n0 * bandwidth).sqrt()
}

fn residual(op: &dyn LinearOperator, b: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let ax = op.apply(x);
    b.iter().zip(&ax).map(|(u, v)| u - v).collect()
}

/// Projection onto `{x : sum |x_n| <= tau}`.
pub fn project_l1_ball(x: &[Complex64], tau: f64) -> Vec<Complex64> {
    if norm1(x) <= tau {
        return x.to_vec();
    }
    if tau <= 0.0 {
        return vec![ZERO; x.len()];
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.norm()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - tau) / (i + 1) as f64;
        if i + 1 == mags.len() || mags[i + 1] <= t {
            theta = t;
            break;
        }
    }
    x.iter()
        .map(|v| {
            let m = v.norm();
            if m > theta {
                v * ((m - theta) / m)
            } else {
                ZERO
            }
        })
        .collect()
}

struct Spgl1Outcome {
    x: Vec<Complex64>,
    iterations: usize,
    status: SolverStatus,
    trace: Vec<TraceRow>,
}

/// Pareto root finding for `min ‖x‖₁ s.t. ‖b - Ax‖₂ <= σ` on a problem
/// normalized to `‖b‖ = 1`.
/// `strict` demands `‖r‖ <= σ(1 + feas_tol)` on exit; otherwise the
/// absolute test `|‖r‖ - σ| <= feas_tol` is enough (used for BP, where a
/// least-squares refit follows).
fn spgl1(op: &dyn LinearOperator, b: &[Complex64], sigma: f64, s: &SolverSettings, strict: bool) -> Spgl1Outcome {
    const MEMORY: usize = 10;
    const GAMMA: f64 = 1e-4;
    const STEP_MIN: f64 = 1e-16;
    const STEP_MAX: f64 = 1e5;

    let n = op.cols();
    let mut trace = Vec::new();
    let mut x = vec![ZERO; n];
    if norm2(b) <= sigma {
        return Spgl1Outcome { x, iterations: 0, status: SolverStatus::Converged, trace };
    }
    let mut tau = 0.0f64;
    let mut r = b.to_vec();
    let mut f = 0.5 * norm2_sqr(&r);
    let mut g: Vec<Complex64> = op.adjoint(&r).iter().map(|v| -v).collect();
    let mut step = 1.0;
    let mut last_f = vec![f; MEMORY];
    let mut force_update = true;
    let mut status = SolverStatus::IterationLimit;
    let mut iter = 0;

    loop {
        let r_norm = f64::sqrt(2.0 * f);
        let g_norm = norm_inf(&g);
        let gap = 2.0 * f - inner(b, &r).re + tau * g_norm;
        let r_gap = gap.abs() / f.max(1.0);
        let a_err1 = r_norm - sigma;
        let r_err1 = a_err1.abs() / r_norm.max(1.0);
        let r_err2 = (f - 0.5 * sigma * sigma).abs() / f.max(1.0);

        if s.trace {
            trace.push(TraceRow { iteration: iter, residual_norm: r_norm, l1_norm: norm1(&x), tau });
        }
        let feasible = if strict { r_norm <= sigma * (1.0 + s.feas_tol) } else { r_err1 <= s.feas_tol || r_norm <= sigma };
        if r_gap <= s.opt_tol && feasible {
            status = SolverStatus::Converged;
            break;
        }
        if g_norm <= 1e-14 * r_norm && r_norm > sigma * (1.0 + s.feas_tol) && iter > 0 {
            status = SolverStatus::Infeasible;
            break;
        }
        if iter >= s.max_iter {
            break;
        }

        if force_update || r_gap <= s.opt_tol.max(r_err2) {
            force_update = false;
            let tau_old = tau;
            tau = (tau + r_norm * a_err1 / g_norm).max(0.0);
            if tau < tau_old {
                x = project_l1_ball(&x, tau);
                r = residual(op, b, &x);
                f = 0.5 * norm2_sqr(&r);
                g = op.adjoint(&r).iter().map(|v| -v).collect();
            }
            last_f.iter_mut().for_each(|v| *v = f);
        }

        // projected spectral gradient step with nonmonotone backtracking
        let trial: Vec<Complex64> = x.iter().zip(&g).map(|(a, b)| a - b * step).collect();
        let d: Vec<Complex64> = project_l1_ball(&trial, tau).iter().zip(&x).map(|(p, a)| p - a).collect();
        let dtg = inner(&g, &d).re;
        let f_ref = last_f.iter().copied().fold(f64::MIN, f64::max);
        let mut lambda = 1.0;
        let (x_new, r_new, f_new) = loop {
            let xn: Vec<Complex64> = x.iter().zip(&d).map(|(a, b)| a + b * lambda).collect();
            let rn = residual(op, b, &xn);
            let fn_ = 0.5 * norm2_sqr(&rn);
            if fn_ <= f_ref + GAMMA * lambda * dtg || dtg >= 0.0 {
                break (xn, rn, fn_);
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break (xn, rn, fn_);
            }
        };
        if lambda < 1e-12 {
            status = SolverStatus::LineSearchFailure;
            x = x_new;
            break;
        }
        let g_new: Vec<Complex64> = op.adjoint(&r_new).iter().map(|v| -v).collect();
        let mut sts = 0.0;
        let mut sty = 0.0;
        for i in 0..n {
            let si = x_new[i] - x[i];
            let yi = g_new[i] - g[i];
            sts += si.norm_sqr();
            sty += (si.conj() * yi).re;
        }
        step = if sty <= 0.0 { STEP_MAX } else { (sts / sty).clamp(STEP_MIN, STEP_MAX) };
        if sts == 0.0 {
            // stationary for this τ: move τ on the next pass
            force_update = true;
        }
        x = x_new;
        r = r_new;
        f = f_new;
        g = g_new;
        last_f[iter % MEMORY] = f;
        iter += 1;
    }
    Spgl1Outcome { x, iterations: iter, status, trace }
}

fn finish(
    op: &dyn LinearOperator,
    b: &[Complex64],
    x: Vec<Complex64>,
    iterations: usize,
    status: SolverStatus,
    converged: bool,
    mode: Mode,
    start: Instant,
    trace: Vec<TraceRow>,
) -> SolverResult {
    let r = residual(op, b, &x);
    SolverResult {
        residual_norm: norm2(&r),
        l1_norm: norm1(&x),
        x,
        iterations,
        converged,
        status,
        wall_time: start.elapsed().as_secs_f64(),
        mode,
        trace,
    }
}

fn bpdn_core(op: &dyn LinearOperator, b: &[Complex64], sigma: f64, s: &SolverSettings, strict: bool) -> Result<(Spgl1Outcome, f64)> {
    check_len(op.rows(), b.len())?;
    if !(sigma >= 0.0) {
        return Err(invalid("ε must be non-negative"));
    }
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok((Spgl1Outcome { x: vec![ZERO; op.cols()], iterations: 0, status: SolverStatus::Converged, trace: Vec::new() }, 0.0));
    }
    let bs: Vec<Complex64> = b.iter().map(|v| v / bn).collect();
    let mut out = spgl1(op, &bs, sigma / bn, s, strict);
    out.x.iter_mut().for_each(|v| *v *= bn);
    for t in &mut out.trace {
        t.residual_norm *= bn;
        t.l1_norm *= bn;
        t.tau *= bn;
    }
    Ok((out, bn))
}

/// `min ‖x‖₁ s.t. ‖b - Ax‖₂ <= ε`.
pub fn solve_bpdn(op: &dyn LinearOperator, b: &[Complex64], epsilon: f64, s: &SolverSettings) -> Result<SolverResult> {
    let start = Instant::now();
    let (out, _) = bpdn_core(op, b, epsilon, s, true)?;
    let mut x = out.x;
    // A feasible support refit with a smaller ℓ1 norm is a better point.
    let support = significant_support(&x, op.rows());
    if !support.is_empty() && support.len() < op.rows() {
        if let Ok(refit) = support_least_squares(op, b, &support) {
            if norm2(&residual(op, b, &refit)) <= epsilon && norm1(&refit) < norm1(&x) {
                x = refit;
            }
        }
    }
    let mut res = finish(op, b, x, out.iterations, out.status, false, Mode::Bpdn, start, out.trace);
    let feasible = res.residual_norm <= epsilon * (1.0 + s.feas_tol) + 1e-14 * norm2(b);
    res.converged = out.status == SolverStatus::Converged && feasible;
    Ok(res)
}

/// `min ‖x‖₁ s.t. Ax = b`, solved as BPDN with a tiny `ε`.
pub fn solve_bp(op: &dyn LinearOperator, b: &[Complex64], s: &SolverSettings) -> Result<SolverResult> {
    let start = Instant::now();
    check_len(op.rows(), b.len())?;
    let bn = norm2(b);
    let target = s.bp_sigma * bn;
    let (out, _) = bpdn_core(op, b, target, s, false)?;
    let mut x = out.x;
    let mut r_norm = norm2(&residual(op, b, &x));
    if r_norm > target && bn > 0.0 {
        let support = significant_support(&x, op.rows());
        if !support.is_empty() {
            let refit = support_least_squares(op, b, &support)?;
            let rn = norm2(&residual(op, b, &refit));
            if rn < r_norm {
                x = refit;
                r_norm = rn;
            }
        }
    }
    let converged = r_norm <= target * (1.0 + s.feas_tol) + 1e-14 * bn;
    let status = if converged { SolverStatus::Converged } else { out.status };
    Ok(finish(op, b, x, out.iterations, status, converged, Mode::Bp, start, out.trace))
}

/// Indices of entries above `1e-6` of the peak magnitude, largest first,
/// at most `3/4` of the measurement count.
fn significant_support(x: &[Complex64], m: usize) -> Vec<usize> {
    let peak = norm_inf(x);
    if peak == 0.0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 1e-6 * peak).collect();
    idx.sort_by(|&a, &b| x[b].norm().total_cmp(&x[a].norm()).then(a.cmp(&b)));
    idx.truncate((3 * m / 4).max(1));
    idx.sort_unstable();
    idx
}

fn columns(op: &dyn LinearOperator, support: &[usize]) -> DMatrix<Complex64> {
    let mut a = DMatrix::from_element(op.rows(), support.len(), ZERO);
    for (c, &j) in support.iter().enumerate() {
        a.set_column(c, &DVector::from_vec(op.column(j)));
    }
    a
}

fn least_squares(a: &DMatrix<Complex64>, b: &[Complex64]) -> Result<DVector<Complex64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(&DVector::from_column_slice(b), 1e-12)
        .map_err(|e| invalid(format!("least squares failed: {e}")))
}

/// Least-squares fit of `b` on the given columns, embedded in a length-`N`
/// vector.
pub fn support_least_squares(op: &dyn LinearOperator, b: &[Complex64], support: &[usize]) -> Result<Vec<Complex64>> {
    check_len(op.rows(), b.len())?;
    let coef = least_squares(&columns(op, support), b)?;
    let mut x = vec![ZERO; op.cols()];
    for (c, &j) in support.iter().enumerate() {
        x[j] = coef[c];
    }
    Ok(x)
}

/// Column norms of an operator.
pub fn column_norms(op: &dyn LinearOperator) -> Vec<f64> {
    (0..op.cols()).map(|j| norm2(&op.column(j))).collect()
}

/// Orthogonal matching pursuit with at most `k_max` atoms. Atoms are
/// ranked by `|aⱼᴴr|/‖aⱼ‖`; ties go to the lowest index. Stops early when
/// the residual falls below `tol·‖b‖`.
pub fn solve_omp(op: &dyn LinearOperator, b: &[Complex64], k_max: usize, tol: f64) -> Result<SolverResult> {
    solve_omp_with_norms(op, b, k_max, tol, &column_norms(op))
}

pub fn solve_omp_with_norms(
    op: &dyn LinearOperator,
    b: &[Complex64],
    k_max: usize,
    tol: f64,
    norms: &[f64],
) -> Result<SolverResult> {
    let start = Instant::now();
    check_len(op.rows(), b.len())?;
    check_len(op.cols(), norms.len())?;
    if k_max < 1 {
        return Err(invalid("K_max must be at least 1"));
    }
    if k_max > op.rows() {
        return Err(invalid(format!("K_max = {k_max} exceeds M = {}", op.rows())));
    }
    let bn = norm2(b);
    let mut support: Vec<usize> = Vec::new();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut r = b.to_vec();
    let mut x = vec![ZERO; op.cols()];
    let mut iters = 0;
    while support.len() < k_max && norm2(&r) > tol * bn {
        let c = op.adjoint(&r);
        let mut best = None;
        let mut best_val = 0.0;
        for (j, v) in c.iter().enumerate() {
            if norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let score = v.norm() / norms[j];
            if score > best_val {
                best_val = score;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        support.push(j);
        cols.push(op.column(j));
        let a = DMatrix::from_fn(op.rows(), cols.len(), |i, k| cols[k][i]);
        let coef = least_squares(&a, b)?;
        let fit = &a * &coef;
        r = b.iter().zip(fit.iter()).map(|(u, v)| u - v).collect();
        x.iter_mut().for_each(|v| *v = ZERO);
        for (k, &jj) in support.iter().enumerate() {
            x[jj] = coef[k];
        }
        iters += 1;
    }
    Ok(finish(op, b, x, iters, SolverStatus::Converged, true, Mode::Omp, start, Vec::new()))
}
