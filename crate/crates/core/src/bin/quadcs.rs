use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use quadcs::fourier::relative_diff;
use quadcs::frontend::{bandlimited_noise, if_measure, n0b_for_isnr, FrontendConfig};
use quadcs::harness::{self, ExperimentConfig, OUTPUT_DIR_ENV};
use quadcs::metrics::{self, PhaseSamples};
use quadcs::operator::{build_fd_operator, chipping_sequence, measurement_count, shifted_dft, MeasurementOperator, OperatorDescriptor};
use quadcs::recovery::{epsilon_from_noise, solve_bp, solve_bpdn, solve_omp, SolverSettings};
use quadcs::rip::{self, RipParams};
use quadcs::waveforms::{complex_envelope, if_signal, scene_to_coefficients, synthesize, NyquistGrid, TargetScene, WaveformSpec};
use quadcs::{rng, Error, Result};

#[derive(Parser)]
#[command(name = "quadcs", version, about = "Quadrature compressive sampling radar simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a target scene and write its envelope preview
    Gen(GenArgs),
    /// Acquire one scene through the frequency-domain operator and the IF chain
    Measure(MeasureArgs),
    /// Recover one acquisition
    Recover(RecoverArgs),
    /// Run an experiment from a JSON config
    Run(RunArgs),
    /// Minimum-bandwidth frontier by bisection over the config's B_cs list
    Frontier(FrontierArgs),
    /// Least-squares bandwidth law from a frontier CSV
    Fit(FitArgs),
    /// Sample bounds and a concentration-of-measure check
    Rip(RipArgs),
    /// Gram diagnostics of the waveform-matched dictionary
    Gram(GramArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pulse {
    Lfm,
    Zc,
}

#[derive(Args, Clone)]
struct System {
    #[arg(long, value_enum, default_value = "lfm")]
    waveform: Pulse,
    /// Signal bandwidth B in Hz
    #[arg(long, default_value_t = 100e6)]
    bandwidth: f64,
    /// Observation interval T in seconds
    #[arg(long, default_value_t = 20.48e-6)]
    t_obs: f64,
    /// Pulse width Tp in seconds
    #[arg(long, default_value_t = 10.24e-6)]
    tp: f64,
    #[arg(long, default_value_t = 1)]
    zc_root: u64,
}

impl System {
    fn spec(&self) -> Result<WaveformSpec> {
        match self.waveform {
            Pulse::Lfm => WaveformSpec::lfm(self.tp, self.bandwidth),
            Pulse::Zc => WaveformSpec::zadoff_chu(self.tp, self.bandwidth, self.zc_root),
        }
    }

    fn grid(&self) -> Result<NyquistGrid> {
        NyquistGrid::new(self.bandwidth, self.t_obs, self.tp)
    }
}

#[derive(Args)]
struct OutDir {
    /// Output directory
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
}

impl OutDir {
    fn dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("quadcs-out"))
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    system: System,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Continuous delays over [0.01, 10.24] µs instead of grid delays
    #[arg(long)]
    off_grid: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct MeasureArgs {
    /// Scene file written by `gen`
    #[arg(long)]
    scene: PathBuf,
    /// Compressive bandwidth in Hz
    #[arg(long, default_value_t = 10e6)]
    b_cs: f64,
    /// Chipping sequence seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input SNR in dB; omitted means noise-free
    #[arg(long)]
    isnr: Option<f64>,
    /// Samples per Nyquist interval on the IF grid
    #[arg(long, default_value_t = 16)]
    oversample: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct RecoverArgs {
    /// Measurement file written by `measure`
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, value_enum, default_value = "bp")]
    mode: ModeArg,
    /// BPDN radius scale applied to sqrt(N N0 B)
    #[arg(long, default_value_t = 1.0)]
    epsilon_factor: f64,
    /// Recover from the IF-chain measurements instead of the operator path
    #[arg(long)]
    use_if: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bp,
    Bpdn,
    Omp,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0.99)]
    psr_target: f64,
}

#[derive(Args)]
struct FitArgs {
    /// frontier.csv written by `frontier`
    #[arg(long)]
    frontier: PathBuf,
    #[arg(long, default_value_t = 100e6)]
    bandwidth: f64,
}

#[derive(Args)]
struct RipArgs {
    #[command(flatten)]
    system: System,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Measurement count for the concentration check
    #[arg(long, default_value_t = 204)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Deviation ε of the concentration check
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Chipping draws of the concentration check; 0 skips it
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GramArgs {
    #[command(flatten)]
    system: System,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    waveform: WaveformSpec,
    grid: NyquistGrid,
    k: usize,
    seed: u64,
    scene: TargetScene,
}

#[derive(Serialize, Deserialize)]
struct MeasurementFile {
    operator: OperatorDescriptor,
    b_cs: f64,
    isnr_db: Option<f64>,
    n0b: f64,
    scene: TargetScene,
    /// Operator path, noise included.
    fd: Vec<Complex64>,
    /// Shifted DFT of the IF-chain samples, same noise.
    td: Vec<Complex64>,
    /// Relative gap between the noise-free paths, band-edge bin excluded.
    path_gap: f64,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v)?)?;
    Ok(p)
}

fn read_json<T: for<'a> Deserialize<'a>>(p: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
}

fn gen(a: &GenArgs) -> Result<()> {
    let spec = a.system.spec()?;
    let grid = a.system.grid()?;
    let mut r = rng::stream(a.seed);
    let scene = if a.off_grid {
        TargetScene::random_off_grid(a.k, 0.01e-6, 10.24e-6, &mut r)?
    } else {
        TargetScene::random_on_grid(a.k, &grid, &mut r)?
    };
    let dir = a.out.dir();
    let p = write_json(&dir, "scene.json", &SceneFile { waveform: spec.clone(), grid, k: a.k, seed: a.seed, scene: scene.clone() })?;
    // the carrier only rotates gains; preview at the default IF of a 10 MHz front end
    let m = measurement_count(grid.n_period, 10e6, a.system.t_obs)?;
    let f0 = FrontendConfig::with_default_carrier(&grid, m, 1)?.f0();
    let env = complex_envelope(&scene, &spec, &grid, f0, 1)?;
    let mut w = csv::Writer::from_path(dir.join("envelope.csv"))?;
    w.write_record(["time_s", "i", "q"])?;
    for (l, s) in env.iter().enumerate() {
        w.write_record([format!("{:e}", l as f64 * grid.tau0()), format!("{:e}", s.re), format!("{:e}", s.im)])?;
    }
    w.flush()?;
    println!("{}", p.display());
    Ok(())
}

fn measure(a: &MeasureArgs) -> Result<()> {
    let sf: SceneFile = read_json(&a.scene)?;
    let grid = sf.grid;
    let m = measurement_count(grid.n_period, a.b_cs, grid.period())?;
    let chips = chipping_sequence(a.seed, grid.n_period)?;
    let op = build_fd_operator(&sf.waveform, &grid, &chips, m)?;
    let fe = FrontendConfig::with_default_carrier(&grid, m, 1)?;
    let env = complex_envelope(&sf.scene, &sf.waveform, &grid, fe.f0(), 1)?;
    let clean_fd = if sf.scene.on_grid {
        op.apply(&scene_to_coefficients(&sf.scene, &grid, fe.f0())?.values)?
    } else {
        harness::measure_envelope(&env, &op, &fe)?
    };
    let fe_if = FrontendConfig::with_default_carrier(&grid, m, a.oversample)?;
    let r = if_signal(&sf.scene, &sf.waveform, &grid, fe_if.f0(), a.oversample)?;
    let clean_td = shifted_dft(&if_measure(&r, &chips, &fe_if)?.s_cs);
    // the band-edge bin loses its imaginary part under minimum-rate sampling
    let path_gap = relative_diff(&clean_td[1..], &clean_fd[1..]);
    let (noise, n0b) = match a.isnr {
        Some(isnr) => {
            let n0b = n0b_for_isnr(&env, isnr);
            let n = bandlimited_noise(grid.n_period, 1, n0b, &mut rng::stream(rng::derive_seed(a.seed, &[3])))?;
            (harness::measure_envelope(&n, &op, &fe)?, n0b)
        }
        None => (vec![Complex64::new(0.0, 0.0); m], 0.0),
    };
    let add = |x: &[Complex64]| -> Vec<Complex64> { x.iter().zip(&noise).map(|(a, b)| a + b).collect() };
    let mf = MeasurementFile {
        operator: op.descriptor(),
        b_cs: a.b_cs,
        isnr_db: a.isnr,
        n0b,
        scene: sf.scene,
        fd: add(&clean_fd),
        td: add(&clean_td),
        path_gap,
    };
    let p = write_json(&a.out.dir(), "measurements.json", &mf)?;
    println!("M = {m}, FD/IF path gap (edge bin excluded) = {path_gap:.3e}");
    println!("{}", p.display());
    Ok(())
}

fn recover(a: &RecoverArgs) -> Result<()> {
    let mf: MeasurementFile = read_json(&a.measurements)?;
    let op = MeasurementOperator::from_descriptor(&mf.operator)?;
    let grid = *op.grid();
    let spec = op.waveform().clone();
    let b = if a.use_if { &mf.td } else { &mf.fd };
    let s = SolverSettings::default();
    let sol = match a.mode {
        ModeArg::Bp => solve_bp(&op, b, &s)?,
        ModeArg::Bpdn => solve_bpdn(&op, b, a.epsilon_factor * epsilon_from_noise(grid.n_atoms, mf.n0b, 1.0), &s)?,
        ModeArg::Omp => solve_omp(&op, b, mf.scene.sparsity(), 1e-12)?,
    };
    let fe = FrontendConfig::with_default_carrier(&grid, op.rows(), 1)?;
    let env = complex_envelope(&mf.scene, &spec, &grid, fe.f0(), 1)?;
    let est = synthesize(&sol.x, &spec, &grid)?;
    let err: f64 = env.iter().zip(&est).map(|(x, y)| (x - y).norm_sqr()).sum();
    let e_r = if mf.scene.on_grid {
        Some(metrics::relative_error(&scene_to_coefficients(&mf.scene, &grid, fe.f0())?.values, &sol.x)?)
    } else {
        None
    };
    let (hits, rate) = metrics::hit_rate(&sol.x, &mf.scene, 3.0 * grid.tau0(), &grid)?;
    let (err_amp, err_phase) = metrics::amp_phase_from_envelopes(&env, &est, PhaseSamples::All)?;

    let dir = a.out.dir();
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("estimate.csv"))?;
    w.write_record(["index", "delay_s", "re", "im", "abs"])?;
    let peak = sol.x.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for (j, c) in sol.x.iter().enumerate() {
        if c.norm() > 1e-6 * peak {
            w.write_record([
                j.to_string(),
                format!("{:e}", grid.atom_delay(j)),
                format!("{:e}", c.re),
                format!("{:e}", c.im),
                format!("{:e}", c.norm()),
            ])?;
        }
    }
    w.flush()?;
    let report = serde_json::json!({
        "mode": sol.mode,
        "status": sol.status,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual_norm": sol.residual_norm,
        "l1_norm": sol.l1_norm,
        "e_r": e_r,
        "rsnr_db": metrics::ratio_db(env.iter().map(|x| x.norm_sqr()).sum(), err),
        "err_amp": err_amp,
        "err_phase": err_phase,
        "hits": hits,
        "hit_rate": rate,
    });
    write_json(&dir, "recovery.json", &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let res = harness::run_experiment(&cfg)?;
    let dir = cfg.resolved_output_dir();
    harness::emit_outputs(&res, &cfg, &dir)?;
    for s in &res.points {
        let p = &s.point;
        let isnr = p.isnr_db.map_or("-".to_string(), |v| format!("{v}"));
        match &s.aggregate {
            Some(ag) => println!(
                "K={:<3} T={:.2e} Bcs={:.2e} M={:<4} ISNR={:<4} PSR={:.3} RSNR={:.2} dB failures={}",
                p.k, p.t_obs, p.b_cs, p.m, isnr, s.psr(), ag.rsnr_db, s.failures
            ),
            None => println!("K={:<3} T={:.2e} Bcs={:.2e} M={:<4} ISNR={:<4} no trials", p.k, p.t_obs, p.b_cs, p.m, isnr),
        }
    }
    println!("config hash {}, outputs in {}", res.config_hash, dir.display());
    Ok(())
}

fn frontier(a: &FrontierArgs) -> Result<()> {
    let cfg = load_config(&a.run)?;
    let rows = harness::bandwidth_frontier(&cfg, a.psr_target)?;
    let dir = cfg.resolved_output_dir();
    harness::emit_frontier(&cfg, &rows, a.psr_target, &dir)?;
    for r in &rows {
        let b = r.b_cs.map_or("unresolved".to_string(), |b| format!("{b:e} Hz (M = {})", r.m.unwrap_or(0)));
        println!("K={:<3} T={:.2e}: {b}{}", r.k, r.t_obs, if r.monotone { "" } else { " [PSR not monotone]" });
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let rows = harness::read_frontier_csv(fs::File::open(&a.frontier)?)?;
    let cfg = ExperimentConfig { bandwidth: a.bandwidth, ..Default::default() };
    let law = harness::fit_frontier(&cfg, &rows)?;
    println!("{}", serde_json::to_string_pretty(&law)?);
    Ok(())
}

fn rip_cmd(a: &RipArgs) -> Result<()> {
    let spec = a.system.spec()?;
    let grid = a.system.grid()?;
    let p = RipParams { k: a.k, n: grid.n_atoms, m: a.m, delta: a.delta, eta: a.eta, epsilon: a.epsilon };
    let m_bound = rip::rip_sample_bound(&p)?;
    let bcs = rip::bcs_bound(a.k, a.system.t_obs, a.system.bandwidth, a.delta, a.eta)?;
    println!("sample bound M >= {m_bound}, bandwidth bound B_cs >= {bcs:e} Hz");
    if a.trials > 0 {
        let mut r = rng::stream(a.seed);
        let scene = TargetScene::random_on_grid(a.k, &grid, &mut r)?;
        let v = scene_to_coefficients(&scene, &grid, 0.0)?.values;
        let rep = rip::com_check(&spec, &grid, a.m, &v, a.epsilon, a.trials, a.seed)?;
        println!("{}", serde_json::to_string_pretty(&rep)?);
    }
    Ok(())
}

fn gram(a: &GramArgs) -> Result<()> {
    let spec = a.system.spec()?;
    let grid = a.system.grid()?;
    let dict = quadcs::operator::FrequencyDictionary::from_waveform(&spec, &grid)?;
    println!("{}", serde_json::to_string_pretty(&dict.gram())?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Measure(a) => measure(a),
        Cmd::Recover(a) => recover(a),
        Cmd::Run(a) => run(a),
        Cmd::Frontier(a) => frontier(a),
        Cmd::Fit(a) => fit(a),
        Cmd::Rip(a) => rip_cmd(a),
        Cmd::Gram(a) => gram(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Configuration(_) | Error::InvalidParameter(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
