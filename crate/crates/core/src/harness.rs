//! Declarative Monte-Carlo experiments: sweep points, seeded trials,
//! per-point aggregates, bandwidth frontiers and file output.
//!
//! Every trial seed is a function of the base seed, the parameters of its
//! sweep point and the trial index only, so adding a point to a sweep
//! leaves the other points' streams alone, and serial and parallel runs
//! agree bit for bit.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fourier::{norm2_sqr, relative_diff};
use crate::frontend::{self, baseband_measure, bandlimited_noise, n0b_for_isnr, FrontendConfig};
use crate::metrics::{self, amp_phase_from_envelopes, hit_rate, Aggregate, PhaseSamples, TrialMetrics, SNR_CAP_DB};
use crate::operator::{build_fd_operator, chipping_sequence, measurement_count, shifted_dft, MeasurementOperator};
use crate::recovery::{epsilon_from_noise, solve_bp, solve_bpdn, solve_omp, Mode, SolverResult, SolverSettings, SolverStatus};
use crate::rip::{empirical_bcs_law, BcsLaw, FrontierSample};
use crate::rng;
use crate::waveforms::{
    complex_envelope, scene_to_coefficients, synthesize, NyquistGrid, Target, TargetScene, WaveformSpec,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QUADCS_OUTPUT_DIR";

/// Maximum relative FD/TD measurement gap accepted by the cross check.
pub const CROSS_CHECK_TOL: f64 = 1e-3;

/// One experiment. Sweep axes are combined as a Cartesian product in the
/// order `t_obs`, `k`, `b_cs`, `isnr_db`. An empty `isnr_db` list means
/// noise-free trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Figure this experiment mirrors, e.g. `"fig3"`.
    pub figure: Option<String>,
    /// Transmitted pulse; its width is `Tp`.
    pub waveform: WaveformSpec,
    /// Signal bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Observation intervals `T` in seconds.
    pub t_obs: Vec<f64>,
    /// Compressive bandwidths in Hz.
    pub b_cs: Vec<f64>,
    pub k: Vec<usize>,
    pub isnr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub mode: Mode,
    pub solver: SolverSettings,
    pub on_grid: bool,
    /// Fixed target delays in seconds; overrides random placement and must
    /// have length `K`.
    pub fixed_delays: Vec<f64>,
    /// Delay range of random off-grid targets in seconds.
    pub off_grid_range: [f64; 2],
    /// BPDN uses `ε = epsilon_factor · sqrt(N N0 B)`.
    pub epsilon_factor: f64,
    pub success_threshold: f64,
    /// Hit window `Δ` in Nyquist cells.
    pub hit_window: f64,
    pub phase_samples: PhaseSamples,
    /// Check every on-grid trial's FD measurements against the time-domain
    /// chain on an oversampled grid before recovery.
    pub cross_check: bool,
    pub cross_check_oversample: usize,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            figure: None,
            waveform: WaveformSpec::lfm(10.24e-6, 100e6).expect("valid default pulse"),
            bandwidth: 100e6,
            t_obs: vec![20.48e-6],
            b_cs: vec![10e6],
            k: vec![10],
            isnr_db: Vec::new(),
            trials: 100,
            seed: 0,
            mode: Mode::Bp,
            solver: SolverSettings::default(),
            on_grid: true,
            fixed_delays: Vec::new(),
            off_grid_range: [0.01e-6, 10.24e-6],
            epsilon_factor: 1.0,
            success_threshold: metrics::SUCCESS_THRESHOLD,
            hit_window: 3.0,
            phase_samples: PhaseSamples::All,
            cross_check: false,
            cross_check_oversample: 16,
            output_dir: None,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        if !(self.bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        if self.t_obs.is_empty() || self.b_cs.is_empty() || self.k.is_empty() {
            return Err(Error::Configuration("t_obs, b_cs and k need at least one value each".into()));
        }
        for &t in &self.t_obs {
            NyquistGrid::new(self.bandwidth, t, self.waveform.pulse_width)?;
        }
        if self.b_cs.iter().any(|&b| !(b > 0.0)) {
            return Err(invalid("compressive bandwidths must be positive"));
        }
        if self.k.contains(&0) {
            return Err(invalid("K must be at least 1"));
        }
        if !self.fixed_delays.is_empty() && self.k.iter().any(|&k| k != self.fixed_delays.len()) {
            return Err(Error::Configuration("fixed_delays needs every K equal to its length".into()));
        }
        let [lo, hi] = self.off_grid_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(invalid("off-grid range must satisfy 0 <= lo < hi"));
        }
        if !(self.epsilon_factor >= 0.0) || !(self.hit_window >= 0.0) || !(self.success_threshold >= 0.0) {
            return Err(invalid("epsilon_factor, hit_window and success_threshold must be non-negative"));
        }
        if self.cross_check_oversample < 1 {
            return Err(invalid("cross-check oversampling must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out fields that do not
    /// change results (output directory, thread count).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Output directory: the configured one, else `$QUADCS_OUTPUT_DIR`,
    /// else `./quadcs-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("quadcs-out"))
    }

    /// All sweep points in canonical order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let isnr: Vec<Option<f64>> =
            if self.isnr_db.is_empty() { vec![None] } else { self.isnr_db.iter().map(|&v| Some(v)).collect() };
        let mut out = Vec::new();
        for &t in &self.t_obs {
            let grid = NyquistGrid::new(self.bandwidth, t, self.waveform.pulse_width)?;
            for &k in &self.k {
                for &b in &self.b_cs {
                    let m = measurement_count(grid.n_period, b, t)?;
                    for &s in &isnr {
                        out.push(SweepPoint::new(out.len(), self.seed, t, k, b, m, s));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One combination of sweep values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub id: usize,
    pub t_obs: f64,
    pub k: usize,
    /// Requested compressive bandwidth.
    pub b_cs: f64,
    /// Measurement count; `M/T` is the effective compressive bandwidth.
    pub m: usize,
    pub isnr_db: Option<f64>,
    pub seed: u64,
}

impl SweepPoint {
    pub fn new(id: usize, base_seed: u64, t_obs: f64, k: usize, b_cs: f64, m: usize, isnr_db: Option<f64>) -> Self {
        let labels = [t_obs.to_bits(), k as u64, b_cs.to_bits(), isnr_db.map_or(u64::MAX, f64::to_bits)];
        SweepPoint { id, t_obs, k, b_cs, m, isnr_db, seed: rng::derive_seed(base_seed, &labels) }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        rng::derive_seed(self.seed, &[trial as u64])
    }
}

/// One trial's outcome. `metrics` is `None` when the trial failed; the
/// reason is kept in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub t_obs: f64,
    pub b_cs: f64,
    pub m: usize,
    pub isnr_db: Option<f64>,
    pub metrics: Option<TrialMetrics>,
    pub iterations: usize,
    pub converged: bool,
    pub status: Option<SolverStatus>,
    pub residual_norm: f64,
    /// Solver wall time; never written to CSV.
    #[serde(skip)]
    pub wall_time: f64,
    pub error: Option<String>,
}

/// Everything a single trial produces, for callers that want the vectors.
#[derive(Debug, Clone)]
pub struct TrialArtifacts {
    pub scene: TargetScene,
    /// Nyquist-rate envelope `s̃`.
    pub envelope: Vec<Complex64>,
    /// `ṽ` for on-grid scenes.
    pub truth: Option<Vec<Complex64>>,
    /// Clean and noise parts of the frequency-domain measurements.
    pub clean: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    pub n0b: f64,
    pub solution: SolverResult,
    pub estimate_envelope: Vec<Complex64>,
    pub metrics: TrialMetrics,
}

fn scene_for(cfg: &ExperimentConfig, p: &SweepPoint, grid: &NyquistGrid, r: &mut rng::Rng) -> Result<TargetScene> {
    use rand::Rng as _;
    if !cfg.fixed_delays.is_empty() {
        let tau0 = grid.tau0();
        let on_grid = cfg.fixed_delays.iter().all(|d| {
            let x = d / tau0;
            (x - x.round()).abs() <= 1e-6
        });
        let targets = cfg
            .fixed_delays
            .iter()
            .map(|&delay| Target {
                delay,
                gain: 1.0 - r.random::<f64>(),
                phase: 2.0 * std::f64::consts::PI * (1.0 - r.random::<f64>()),
            })
            .collect();
        let scene = TargetScene { targets, on_grid };
        scene.validate(grid)?;
        return Ok(scene);
    }
    if cfg.on_grid {
        TargetScene::random_on_grid(p.k, grid, r)
    } else {
        let [lo, hi] = cfg.off_grid_range;
        TargetScene::random_off_grid(p.k, lo, hi, r)
    }
}

/// Frequency-domain compressive measurements `F̃_M s̃_cs` of a Nyquist-rate
/// envelope.
pub fn measure_envelope(envelope: &[Complex64], op: &MeasurementOperator, fe: &FrontendConfig) -> Result<Vec<Complex64>> {
    Ok(shifted_dft(&baseband_measure(envelope, op.chips(), fe)?.s_cs))
}

/// Runs one trial of a sweep point and keeps every intermediate.
pub fn run_trial_detailed(cfg: &ExperimentConfig, p: &SweepPoint, trial: usize) -> Result<TrialArtifacts> {
    let seed = p.trial_seed(trial);
    let spec = &cfg.waveform;
    let grid = NyquistGrid::new(cfg.bandwidth, p.t_obs, spec.pulse_width)?;
    let fe = FrontendConfig::with_default_carrier(&grid, p.m, 1)?;
    let chips = chipping_sequence(rng::derive_seed(seed, &[1]), grid.n_period)?;
    let op = build_fd_operator(spec, &grid, &chips, p.m)?;

    let mut scene_rng = rng::stream(rng::derive_seed(seed, &[2]));
    let scene = scene_for(cfg, p, &grid, &mut scene_rng)?;
    let envelope = complex_envelope(&scene, spec, &grid, fe.f0(), 1)?;
    let truth = if scene.on_grid { Some(scene_to_coefficients(&scene, &grid, fe.f0())?.values) } else { None };
    let clean = match &truth {
        Some(v) => op.apply(v)?,
        None => measure_envelope(&envelope, &op, &fe)?,
    };

    if cfg.cross_check && truth.is_some() {
        let l = cfg.cross_check_oversample;
        let fine = complex_envelope(&scene, spec, &grid, fe.f0(), l)?;
        let fe_l = FrontendConfig::with_default_carrier(&grid, p.m, l)?;
        let td = shifted_dft(&baseband_measure(&fine, &chips, &fe_l)?.s_cs);
        let gap = relative_diff(&td, &clean);
        if !(gap <= CROSS_CHECK_TOL) {
            return Err(Error::Configuration(format!("FD/TD measurement gap {gap:.3e} exceeds {CROSS_CHECK_TOL:e}")));
        }
    }

    let (noise, n0b) = match p.isnr_db {
        Some(isnr) => {
            let n0b = n0b_for_isnr(&envelope, isnr);
            let mut noise_rng = rng::stream(rng::derive_seed(seed, &[3]));
            let n = bandlimited_noise(grid.n_period, 1, n0b, &mut noise_rng)?;
            (measure_envelope(&n, &op, &fe)?, n0b)
        }
        None => (vec![Complex64::new(0.0, 0.0); p.m], 0.0),
    };
    let b: Vec<Complex64> = clean.iter().zip(&noise).map(|(a, c)| a + c).collect();

    let solution = match cfg.mode {
        Mode::Bp => solve_bp(&op, &b, &cfg.solver)?,
        Mode::Bpdn => {
            let eps = cfg.epsilon_factor * epsilon_from_noise(grid.n_atoms, n0b, 1.0);
            solve_bpdn(&op, &b, eps, &cfg.solver)?
        }
        Mode::Omp => solve_omp(&op, &b, p.k, 1e-12)?,
    };

    let estimate_envelope = synthesize(&solution.x, spec, &grid)?;
    let (err_amp, err_phase) = amp_phase_from_envelopes(&envelope, &estimate_envelope, cfg.phase_samples)?;
    let (e_r, success) = match &truth {
        Some(v) => {
            let e = metrics::relative_error(v, &solution.x)?;
            (e, e <= cfg.success_threshold)
        }
        None => (f64::NAN, false),
    };
    let (hits, rate) = hit_rate(&solution.x, &scene, cfg.hit_window * grid.tau0(), &grid)?;
    let clean_energy = norm2_sqr(&clean);
    let noise_energy = norm2_sqr(&noise);
    let synth_energy = norm2_sqr(&envelope);
    let synth_error_energy: f64 = envelope.iter().zip(&estimate_envelope).map(|(a, c)| (a - c).norm_sqr()).sum();
    let m = TrialMetrics {
        e_r,
        success,
        isnr_db: if n0b > 0.0 { frontend::isnr_db(&envelope, n0b) } else { SNR_CAP_DB },
        osnr_db: metrics::ratio_db(clean_energy, noise_energy),
        rsnr_db: metrics::ratio_db(synth_energy, synth_error_energy),
        err_amp,
        err_phase,
        hits,
        hit_rate: rate,
        clean_energy,
        noise_energy,
        synth_energy,
        synth_error_energy,
    };
    Ok(TrialArtifacts { scene, envelope, truth, clean, noise, n0b, solution, estimate_envelope, metrics: m })
}

/// Runs one trial; failures are recorded, not propagated.
pub fn run_trial(cfg: &ExperimentConfig, p: &SweepPoint, trial: usize) -> TrialRecord {
    let mut rec = TrialRecord {
        point: p.id,
        trial,
        seed: p.trial_seed(trial),
        k: p.k,
        t_obs: p.t_obs,
        b_cs: p.b_cs,
        m: p.m,
        isnr_db: p.isnr_db,
        metrics: None,
        iterations: 0,
        converged: false,
        status: None,
        residual_norm: f64::NAN,
        wall_time: 0.0,
        error: None,
    };
    match run_trial_detailed(cfg, p, trial) {
        Ok(a) => {
            rec.iterations = a.solution.iterations;
            rec.converged = a.solution.converged;
            rec.status = Some(a.solution.status);
            rec.residual_norm = a.solution.residual_norm;
            rec.wall_time = a.solution.wall_time;
            rec.metrics = Some(a.metrics);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Aggregate of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: SweepPoint,
    /// `None` when no trial produced metrics.
    pub aggregate: Option<Aggregate>,
    pub failures: usize,
    pub unconverged: usize,
}

impl PointSummary {
    pub fn from_records(point: SweepPoint, records: &[TrialRecord]) -> Self {
        let ok: Vec<TrialMetrics> = records.iter().filter_map(|r| r.metrics.clone()).collect();
        PointSummary {
            point,
            aggregate: Aggregate::from_trials(&ok),
            failures: records.iter().filter(|r| r.metrics.is_none()).count(),
            unconverged: records.iter().filter(|r| r.metrics.is_some() && !r.converged).count(),
        }
    }

    /// PSR counting failed trials as unsuccessful.
    pub fn psr(&self) -> f64 {
        match &self.aggregate {
            Some(a) => a.psr * a.trials as f64 / (a.trials + self.failures) as f64,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub records: Vec<TrialRecord>,
    pub points: Vec<PointSummary>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn run_point_records(cfg: &ExperimentConfig, p: &SweepPoint) -> Vec<TrialRecord> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, p, t)).collect()
}

/// Runs every trial of one sweep point.
pub fn run_point(cfg: &ExperimentConfig, p: &SweepPoint) -> Result<(Vec<TrialRecord>, PointSummary)> {
    cfg.validate()?;
    let recs = with_pool(cfg.threads, || run_point_records(cfg, p))?;
    let summary = PointSummary::from_records(*p, &recs);
    Ok((recs, summary))
}

/// Runs the full sweep. Trials run in parallel; records come back in
/// (point, trial) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let points = cfg.points()?;
    let per_point = with_pool(cfg.threads, || points.iter().map(|p| run_point_records(cfg, p)).collect::<Vec<_>>())?;
    let summaries = points.iter().zip(&per_point).map(|(p, r)| PointSummary::from_records(*p, r)).collect();
    Ok(ExperimentResult { config_hash: cfg.hash(), records: per_point.into_iter().flatten().collect(), points: summaries })
}

/// Smallest swept `B_cs` reaching the PSR target for one `(K, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub k: usize,
    pub t_obs: f64,
    /// `None` when the target is not reached inside the sweep.
    pub b_cs: Option<f64>,
    pub m: Option<usize>,
    /// Every evaluated `(B_cs, PSR)` pair, ascending in `B_cs`.
    pub evaluated: Vec<(f64, f64)>,
    /// PSR was nondecreasing over the evaluated points.
    pub monotone: bool,
}

/// Bisection over a sorted grid for the first index where `ok` holds,
/// assuming `ok` is monotone. `None` when even the last entry fails.
pub fn bisect_first(len: usize, mut ok: impl FnMut(usize) -> Result<bool>) -> Result<Option<usize>> {
    if len == 0 || !ok(len - 1)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0, len - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// Minimum-bandwidth frontier for every `(T, K)` of the config, found by
/// bisection over the sorted `B_cs` list. Noise-free by construction: any
/// ISNR list is ignored.
pub fn bandwidth_frontier(cfg: &ExperimentConfig, psr_target: f64) -> Result<Vec<FrontierRow>> {
    cfg.validate()?;
    if !(psr_target > 0.0 && psr_target <= 1.0) {
        return Err(invalid("PSR target must lie in (0, 1]"));
    }
    let mut grid_bcs = cfg.b_cs.clone();
    grid_bcs.sort_by(f64::total_cmp);
    grid_bcs.dedup();
    let mut rows = Vec::new();
    for &t in &cfg.t_obs {
        let grid = NyquistGrid::new(cfg.bandwidth, t, cfg.waveform.pulse_width)?;
        for &k in &cfg.k {
            let mut evaluated: Vec<(f64, f64, usize)> = Vec::new();
            let found = bisect_first(grid_bcs.len(), |i| {
                let b = grid_bcs[i];
                let m = measurement_count(grid.n_period, b, t)?;
                let p = SweepPoint::new(0, cfg.seed, t, k, b, m, None);
                let (_, s) = run_point(cfg, &p)?;
                let psr = s.psr();
                evaluated.push((b, psr, m));
                Ok(psr >= psr_target)
            })?;
            evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
            let monotone = evaluated.windows(2).all(|w| w[1].1 >= w[0].1);
            let hit = found.map(|i| grid_bcs[i]);
            let m = hit.and_then(|b| evaluated.iter().find(|e| e.0 == b).map(|e| e.2));
            rows.push(FrontierRow {
                k,
                t_obs: t,
                b_cs: hit,
                m,
                evaluated: evaluated.iter().map(|e| (e.0, e.1)).collect(),
                monotone,
            });
        }
    }
    Ok(rows)
}

/// LS fit of the resolved frontier rows against the effective compressive
/// bandwidth `M/T`.
pub fn fit_frontier(cfg: &ExperimentConfig, rows: &[FrontierRow]) -> Result<BcsLaw> {
    let samples: Vec<FrontierSample> = rows
        .iter()
        .filter_map(|r| {
            r.m.map(|m| FrontierSample { k: r.k, t_obs: r.t_obs, bandwidth: cfg.bandwidth, b_cs: m as f64 / r.t_obs })
        })
        .collect();
    empirical_bcs_law(&samples)
}

/// Column order of the per-trial CSV.
pub const TRIAL_COLUMNS: [&str; 25] = [
    "point",
    "trial",
    "seed",
    "k",
    "t_obs_s",
    "b_cs_hz",
    "m",
    "isnr_db",
    "e_r",
    "success",
    "isnr_meas_db",
    "osnr_db",
    "rsnr_db",
    "err_amp",
    "err_phase",
    "hits",
    "hit_rate",
    "clean_energy",
    "noise_energy",
    "synth_energy",
    "synth_error_energy",
    "iterations",
    "converged",
    "status",
    "error",
];

/// Column order of the per-point CSV.
pub const POINT_COLUMNS: [&str; 18] = [
    "point",
    "k",
    "t_obs_s",
    "b_cs_hz",
    "m",
    "isnr_db",
    "trials",
    "failures",
    "unconverged",
    "psr",
    "mean_e_r",
    "osnr_db",
    "rsnr_db",
    "rsnr_stderr_db",
    "err_amp",
    "err_phase",
    "hit_rate",
    "seed",
];

/// Shortest round-trip scientific form.
fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

fn status_name(s: SolverStatus) -> &'static str {
    match s {
        SolverStatus::Converged => "converged",
        SolverStatus::IterationLimit => "iteration_limit",
        SolverStatus::Infeasible => "infeasible",
        SolverStatus::LineSearchFailure => "line_search_failure",
    }
}

fn parse_status(s: &str) -> Result<Option<SolverStatus>> {
    Ok(match s {
        "" => None,
        "converged" => Some(SolverStatus::Converged),
        "iteration_limit" => Some(SolverStatus::IterationLimit),
        "infeasible" => Some(SolverStatus::Infeasible),
        "line_search_failure" => Some(SolverStatus::LineSearchFailure),
        other => return Err(invalid(format!("unknown solver status {other:?}"))),
    })
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIAL_COLUMNS)?;
    for r in records {
        let mut row = vec![
            r.point.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.k.to_string(),
            sci(r.t_obs),
            sci(r.b_cs),
            r.m.to_string(),
            opt_sci(r.isnr_db),
        ];
        match &r.metrics {
            Some(m) => row.extend([
                sci(m.e_r),
                m.success.to_string(),
                sci(m.isnr_db),
                sci(m.osnr_db),
                sci(m.rsnr_db),
                sci(m.err_amp),
                sci(m.err_phase),
                m.hits.to_string(),
                sci(m.hit_rate),
                sci(m.clean_energy),
                sci(m.noise_energy),
                sci(m.synth_energy),
                sci(m.synth_error_energy),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 13)),
        }
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        row.push(r.status.map(status_name).unwrap_or_default().to_string());
        row.push(r.error.clone().unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| invalid(format!("bad CSV value {s:?} in column {i}")))
}

fn opt_field(rec: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    match rec.get(i).unwrap_or("") {
        "" => Ok(None),
        _ => field(rec, i).map(Some),
    }
}

/// Parses a per-trial CSV written by [`write_trials_csv`]. Wall times are
/// not stored and come back as zero.
pub fn read_trials_csv<R: Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != TRIAL_COLUMNS {
        return Err(invalid("unexpected trial CSV header"));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let metrics = if rec.get(8).unwrap_or("").is_empty() {
            None
        } else {
            Some(TrialMetrics {
                e_r: field(&rec, 8)?,
                success: field(&rec, 9)?,
                isnr_db: field(&rec, 10)?,
                osnr_db: field(&rec, 11)?,
                rsnr_db: field(&rec, 12)?,
                err_amp: field(&rec, 13)?,
                err_phase: field(&rec, 14)?,
                hits: field(&rec, 15)?,
                hit_rate: field(&rec, 16)?,
                clean_energy: field(&rec, 17)?,
                noise_energy: field(&rec, 18)?,
                synth_energy: field(&rec, 19)?,
                synth_error_energy: field(&rec, 20)?,
            })
        };
        let error = rec.get(24).unwrap_or("");
        out.push(TrialRecord {
            point: field(&rec, 0)?,
            trial: field(&rec, 1)?,
            seed: field(&rec, 2)?,
            k: field(&rec, 3)?,
            t_obs: field(&rec, 4)?,
            b_cs: field(&rec, 5)?,
            m: field(&rec, 6)?,
            isnr_db: opt_field(&rec, 7)?,
            metrics,
            iterations: field(&rec, 21)?,
            converged: field(&rec, 22)?,
            status: parse_status(rec.get(23).unwrap_or(""))?,
            residual_norm: f64::NAN,
            wall_time: 0.0,
            error: (!error.is_empty()).then(|| error.to_string()),
        });
    }
    Ok(out)
}

pub fn write_points_csv<W: Write>(points: &[PointSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POINT_COLUMNS)?;
    for s in points {
        let p = &s.point;
        let mut row = vec![p.id.to_string(), p.k.to_string(), sci(p.t_obs), sci(p.b_cs), p.m.to_string(), opt_sci(p.isnr_db)];
        match &s.aggregate {
            Some(a) => row.extend([
                a.trials.to_string(),
                s.failures.to_string(),
                s.unconverged.to_string(),
                sci(s.psr()),
                sci(a.mean_e_r),
                sci(a.osnr_db),
                sci(a.rsnr_db),
                sci(a.rsnr_stderr_db),
                sci(a.err_amp),
                sci(a.err_phase),
                sci(a.hit_rate),
            ]),
            None => {
                row.extend(["0".to_string(), s.failures.to_string(), "0".to_string()]);
                row.extend(std::iter::repeat_n(String::new(), 8));
            }
        }
        row.push(p.seed.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Regroups parsed trial records into point summaries, using the sweep
/// points of the config.
pub fn summaries_from_records(points: &[SweepPoint], records: &[TrialRecord]) -> Vec<PointSummary> {
    points
        .iter()
        .map(|p| {
            let recs: Vec<TrialRecord> = records.iter().filter(|r| r.point == p.id).cloned().collect();
            PointSummary::from_records(*p, &recs)
        })
        .collect()
}

/// Horizontal axis of the gnuplot data: whichever sweep axis has more
/// than one value, preferring `B_cs`, then ISNR, then `K`.
fn plot_axis(cfg: &ExperimentConfig) -> &'static str {
    if cfg.b_cs.len() > 1 {
        "b_cs_mhz"
    } else if cfg.isnr_db.len() > 1 {
        "isnr_db"
    } else {
        "k"
    }
}

fn plot_x(axis: &str, p: &SweepPoint) -> f64 {
    match axis {
        "b_cs_mhz" => p.b_cs / 1e6,
        "isnr_db" => p.isnr_db.unwrap_or(f64::INFINITY),
        _ => p.k as f64,
    }
}

/// Gnuplot data: one index block per series, series keyed by the sweep
/// values that are not on the horizontal axis.
pub fn gnuplot_data(cfg: &ExperimentConfig, points: &[PointSummary]) -> (String, Vec<String>) {
    let axis = plot_axis(cfg);
    let mut keys: Vec<String> = Vec::new();
    let mut blocks: Vec<Vec<&PointSummary>> = Vec::new();
    for s in points {
        let p = &s.point;
        let mut key = format!("T={:.2}us", p.t_obs * 1e6);
        if axis != "k" {
            key += &format!(" K={}", p.k);
        }
        if axis != "b_cs_mhz" {
            key += &format!(" Bcs={}MHz", p.b_cs / 1e6);
        }
        if axis != "isnr_db" {
            if let Some(v) = p.isnr_db {
                key += &format!(" ISNR={v}dB");
            }
        }
        match keys.iter().position(|k| *k == key) {
            Some(i) => blocks[i].push(s),
            None => {
                keys.push(key);
                blocks.push(vec![s]);
            }
        }
    }
    let mut out = String::new();
    for (key, block) in keys.iter().zip(&blocks) {
        let _ = writeln!(out, "# {key}");
        let _ = writeln!(out, "# {axis} psr rsnr_db osnr_db err_amp err_phase hit_rate mean_e_r");
        let mut rows: Vec<&&PointSummary> = block.iter().collect();
        rows.sort_by(|a, b| plot_x(axis, &a.point).total_cmp(&plot_x(axis, &b.point)));
        for s in rows {
            let x = plot_x(axis, &s.point);
            match &s.aggregate {
                Some(a) => {
                    let _ = writeln!(
                        out,
                        "{} {} {} {} {} {} {} {}",
                        sci(x),
                        sci(s.psr()),
                        sci(a.rsnr_db),
                        sci(a.osnr_db),
                        sci(a.err_amp),
                        sci(a.err_phase),
                        sci(a.hit_rate),
                        sci(a.mean_e_r)
                    );
                }
                None => {
                    let _ = writeln!(out, "{} 0 NaN NaN NaN NaN NaN NaN", sci(x));
                }
            }
        }
        out.push_str("\n\n");
    }
    (out, keys)
}

/// Gnuplot script plotting PSR, and RSNR when the sweep is noisy.
pub fn gnuplot_script(cfg: &ExperimentConfig, keys: &[String]) -> String {
    let axis = plot_axis(cfg);
    let xlabel = match axis {
        "b_cs_mhz" => "B_{cs} (MHz)",
        "isnr_db" => "ISNR (dB)",
        _ => "K",
    };
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output 'psr.png'");
    let _ = writeln!(s, "set title '{}'", cfg.name.replace('\'', ""));
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel 'PSR'");
    let _ = writeln!(s, "set yrange [0:1.05]");
    let _ = writeln!(s, "set key bottom right");
    let curves: Vec<String> =
        keys.iter().enumerate().map(|(i, k)| format!("'plot.dat' index {i} using 1:2 with linespoints title '{k}'")).collect();
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    if !cfg.isnr_db.is_empty() {
        let _ = writeln!(s, "set output 'rsnr.png'");
        let _ = writeln!(s, "set ylabel 'RSNR (dB)'");
        let _ = writeln!(s, "set autoscale y");
        let curves: Vec<String> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| format!("'plot.dat' index {i} using 1:3 with linespoints title '{k}'"))
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    figure: Option<&'a str>,
    config_hash: &'a str,
    seed: u64,
    trials: usize,
    config: &'a ExperimentConfig,
    points: &'a [PointSummary],
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Configuration(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Writes `trials.csv`, `points.csv`, `summary.json`, `plot.dat` and
/// `plot.gp` into `dir`. Returns the written paths.
pub fn emit_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let path = dir.join("trials.csv");
    write_trials_csv(&result.records, fs::File::create(&path)?)?;
    written.push(path);
    let path = dir.join("points.csv");
    write_points_csv(&result.points, fs::File::create(&path)?)?;
    written.push(path);
    let summary = Summary {
        name: &cfg.name,
        figure: cfg.figure.as_deref(),
        config_hash: &result.config_hash,
        seed: cfg.seed,
        trials: cfg.trials,
        config: cfg,
        points: &result.points,
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    written.push(path);
    let (data, keys) = gnuplot_data(cfg, &result.points);
    let path = dir.join("plot.dat");
    fs::write(&path, data)?;
    written.push(path);
    let path = dir.join("plot.gp");
    fs::write(&path, gnuplot_script(cfg, &keys))?;
    written.push(path);
    Ok(written)
}

pub const FRONTIER_COLUMNS: [&str; 6] = ["k", "t_obs_s", "b_cs_hz", "m", "b_cs_eff_hz", "monotone"];

pub fn write_frontier_csv<W: Write>(rows: &[FrontierRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FRONTIER_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            sci(r.t_obs),
            opt_sci(r.b_cs),
            r.m.map_or(String::new(), |m| m.to_string()),
            opt_sci(r.m.map(|m| m as f64 / r.t_obs)),
            r.monotone.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads frontier rows back; `evaluated` is not stored in CSV and comes
/// back empty.
pub fn read_frontier_csv<R: Read>(r: R) -> Result<Vec<FrontierRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let m: Option<usize> = match rec.get(3) {
            Some("") | None => None,
            Some(s) => Some(s.parse().map_err(|_| Error::Configuration(format!("bad m value {s:?}")))?),
        };
        out.push(FrontierRow {
            k: field(&rec, 0)?,
            t_obs: field(&rec, 1)?,
            b_cs: opt_field(&rec, 2)?,
            m,
            evaluated: Vec::new(),
            monotone: field(&rec, 5)?,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct FrontierSummary<'a> {
    name: &'a str,
    config_hash: String,
    psr_target: f64,
    rows: &'a [FrontierRow],
    fit: Option<&'a BcsLaw>,
    fit_error: Option<String>,
}

/// Writes `frontier.csv` and `frontier.json` (rows plus the fitted law
/// when at least three rows resolved).
pub fn emit_frontier(cfg: &ExperimentConfig, rows: &[FrontierRow], psr_target: f64, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let path_csv = dir.join("frontier.csv");
    write_frontier_csv(rows, fs::File::create(&path_csv)?)?;
    let fit = fit_frontier(cfg, rows);
    let summary = FrontierSummary {
        name: &cfg.name,
        config_hash: cfg.hash(),
        psr_target,
        rows,
        fit: fit.as_ref().ok(),
        fit_error: fit.as_ref().err().map(|e| e.to_string()),
    };
    let path_json = dir.join("frontier.json");
    fs::write(&path_json, serde_json::to_string_pretty(&summary)?)?;
    Ok(vec![path_csv, path_json])
}
