//! Command-line surface: `solve-mlp`, `optimize-mp`, `simulate`, and `bench`.
//!
//! Every run resolves a [`RunConfig`] with precedence CLI flags > config
//! file (`key=value` lines) > defaults, echoes the resolved config into all
//! output documents, and serializes floats with 17 significant digits so a
//! rerun of the echoed configuration reproduces outputs byte-for-byte.
//!
//! Exit codes: 0 success, 1 internal error, 2 domain error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    self, RegimeDiagnostics, SweepGrid, Table1Report, Table1Setup, ToleranceCalibration,
};
use crate::bloch::{lindblad_evolve, BlochVector, SystemParams};
use crate::error::{Error, Result};
use crate::jsonfmt::Json;
use crate::mlp::{self, BoundaryPair, MlpControl};
use crate::mp::{self, OptimizationProblem, OptimizationResult};
use crate::pulse::{snap_to_grid, ControlPulse, PulseSegment};
use crate::rng::derive_seed;
use crate::trajectory::{
    final_state_histogram, simulate_ensemble, success_rate, Axis, EnsembleResult, Histogram,
    SuccessRateReport, DEFAULT_HIST_BINS,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "qprep",
    version,
    about = "Qubit state preparation under pure dephasing: most-likely-path and mean-path controls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the closed-form most-likely-path control for a target state.
    SolveMlp(SolveMlpArgs),
    /// Search for a mean-path Rabi drive maximizing the Lindblad fidelity.
    OptimizeMp(OptimizeMpArgs),
    /// Simulate a stochastic trajectory ensemble under a chosen pulse.
    Simulate(SimulateArgs),
    /// Run one of the benchmark experiments.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Level splitting, the unit of frequency.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Dephasing rate (mutually exclusive with --g/--kappa).
    #[arg(long)]
    gamma: Option<f64>,
    /// System-bath coupling strength.
    #[arg(long)]
    g: Option<f64>,
    /// Noise spectral density.
    #[arg(long)]
    kappa: Option<f64>,
    /// Integration step in units of 1/epsilon.
    #[arg(long)]
    dt: Option<f64>,
    /// Trajectory ensemble size.
    #[arg(long)]
    n_total: Option<usize>,
    /// Master seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Infidelity tolerance for success rates.
    #[arg(long)]
    delta: Option<f64>,
    /// Rabi amplitude cap.
    #[arg(long)]
    omega_cap: Option<f64>,
    /// Output directory (or file for solve-mlp/optimize-mp).
    #[arg(long)]
    output: Option<String>,
    /// Primary output format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Worker-count hint; never changes results.
    #[arg(long)]
    threads: Option<usize>,
    /// Plain-text key=value config file, overridden by explicit flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn label(&self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

#[derive(Args, Debug)]
struct SolveMlpArgs {
    /// Target state as x,y,z.
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    /// Initial state as x,y,z.
    #[arg(long, default_value = "0,0,-1", allow_hyphen_values = true)]
    initial: String,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MpMethod {
    Single,
    Grape,
    Crab,
}

#[derive(Args, Debug)]
struct OptimizeMpArgs {
    #[arg(long, default_value = "-0.8660254037844386,0,-0.5", allow_hyphen_values = true)]
    target: String,
    #[arg(long, default_value = "0,0,-1", allow_hyphen_values = true)]
    initial: String,
    #[arg(long, value_enum, default_value = "single")]
    method: MpMethod,
    /// Number of piecewise-constant segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Pulse horizon; defaults to the most-likely-path optimal time snapped
    /// to the integration grid.
    #[arg(long)]
    total_time: Option<f64>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long)]
    restarts: Option<usize>,
    /// Randomized-Fourier basis size (crab only).
    #[arg(long, default_value_t = 3)]
    n_basis: usize,
    /// Half-width of the amplitude search window, in units of epsilon.
    #[arg(long)]
    search_bound: Option<f64>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PulseSource {
    Mlp,
    Mp,
    Inline,
    File,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "-0.8660254037844386,0,-0.5", allow_hyphen_values = true)]
    target: String,
    #[arg(long, default_value = "0,0,-1", allow_hyphen_values = true)]
    initial: String,
    /// Where the pulse comes from.
    #[arg(long, value_enum, default_value = "mlp")]
    pulse_source: PulseSource,
    /// Inline segment amplitudes, comma separated (with --pulse-source inline).
    #[arg(long, allow_hyphen_values = true)]
    pulse: Option<String>,
    /// Horizon for inline pulses; defaults to the MLP optimal time.
    #[arg(long)]
    total_time: Option<f64>,
    /// JSON pulse file (an optimize-mp output or {"segments": [...]}).
    #[arg(long)]
    pulse_file: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long, default_value_t = DEFAULT_HIST_BINS)]
    bins: usize,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Experiment {
    Sweep,
    Table1,
    Tolerance,
    Regimes,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    /// Target plane height for the sweep.
    #[arg(long, default_value_t = -0.5)]
    plane: f64,
    /// Use the CI-scale 9x6 grid at 1e3 trajectories.
    #[arg(long)]
    coarse: bool,
    /// Target override for tolerance/regimes experiments.
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    #[command(flatten)]
    common: CommonOpts,
}

/// Fully-resolved run configuration; echoed into every output document.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub epsilon: f64,
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub dt: f64,
    pub n_total: usize,
    pub master_seed: u64,
    pub delta: f64,
    pub omega_cap: f64,
    pub output_path: Option<String>,
    pub output_format: OutputFormat,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::from_gamma_kappa(self.epsilon, self.gamma, self.kappa)
    }

    fn echo(&self) -> Json {
        Json::obj(vec![
            ("epsilon", Json::Float(self.epsilon)),
            ("g", Json::Float(self.g)),
            ("kappa", Json::Float(self.kappa)),
            ("gamma", Json::Float(self.gamma)),
            ("dt", Json::Float(self.dt)),
            ("n_total", Json::UInt(self.n_total as u64)),
            ("master_seed", Json::UInt(self.master_seed)),
            ("delta", Json::Float(self.delta)),
            ("omega_cap", Json::Float(self.omega_cap)),
            (
                "output_path",
                self.output_path
                    .clone()
                    .map(Json::Str)
                    .unwrap_or(Json::Null),
            ),
            (
                "output_format",
                Json::Str(self.output_format.label().to_string()),
            ),
            (
                "threads",
                self.threads.map(|t| Json::UInt(t as u64)).unwrap_or(Json::Null),
            ),
            ("version", Json::Str(VERSION.to_string())),
        ])
    }

    fn provenance_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("version".to_string(), VERSION.to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("dt".to_string(), crate::jsonfmt::format_float(self.dt)),
            ("n_total".to_string(), self.n_total.to_string()),
            ("epsilon".to_string(), crate::jsonfmt::format_float(self.epsilon)),
            ("gamma".to_string(), crate::jsonfmt::format_float(self.gamma)),
            ("delta".to_string(), crate::jsonfmt::format_float(self.delta)),
        ];
        if let Some(t) = self.threads {
            pairs.push(("threads".to_string(), t.to_string()));
        }
        pairs
    }
}

fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Invalid(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_key<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Invalid(format!("config key {key}: cannot parse {raw:?}"))),
    }
}

fn resolve_config(opts: &CommonOpts) -> Result<RunConfig> {
    let file = match &opts.config {
        Some(path) => load_config_file(path)?,
        None => BTreeMap::new(),
    };

    let epsilon = opts
        .epsilon
        .or(parse_key(&file, "epsilon")?)
        .unwrap_or(1.0);
    if !(epsilon > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be > 0, got {epsilon}")));
    }

    let gamma_opt = opts.gamma.or(parse_key(&file, "gamma")?);
    let g_opt = opts.g.or(parse_key(&file, "g")?);
    let kappa_opt = opts.kappa.or(parse_key(&file, "kappa")?);
    if gamma_opt.is_some() && g_opt.is_some() {
        return Err(Error::Invalid(
            "supply either --gamma or --g/--kappa, not both".into(),
        ));
    }
    let kappa = kappa_opt.unwrap_or(1.0);
    let (g, gamma) = match (gamma_opt, g_opt) {
        (Some(gamma), None) => ((gamma / (2.0 * kappa)).sqrt(), gamma),
        (None, Some(g)) => (g, 2.0 * g * g * kappa),
        (None, None) => {
            let gamma = 0.1;
            ((gamma / (2.0 * kappa)).sqrt(), gamma)
        }
        (Some(_), Some(_)) => unreachable!(),
    };

    let output_format = opts
        .format
        .or(match file.get("output_format").map(String::as_str) {
            Some("json") => Some(OutputFormat::Json),
            Some("csv") => Some(OutputFormat::Csv),
            Some(other) => {
                return Err(Error::Invalid(format!("unknown output_format {other:?}")))
            }
            None => None,
        })
        .unwrap_or(OutputFormat::Json);

    let config = RunConfig {
        epsilon,
        g,
        kappa,
        gamma,
        dt: opts.dt.or(parse_key(&file, "dt")?).unwrap_or(0.01),
        n_total: opts
            .n_total
            .or(parse_key(&file, "n_total")?)
            .unwrap_or(10_000),
        master_seed: opts.seed.or(parse_key(&file, "master_seed")?).unwrap_or(42),
        delta: opts.delta.or(parse_key(&file, "delta")?).unwrap_or(0.005),
        omega_cap: opts
            .omega_cap
            .or(parse_key(&file, "omega_cap")?)
            .unwrap_or(crate::pulse::DEFAULT_OMEGA_CAP_FACTOR * epsilon),
        output_path: opts.output.clone().or(file.get("output_path").cloned()),
        output_format,
        threads: opts.threads.or(parse_key(&file, "threads")?),
    };
    if !(config.dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be > 0, got {}", config.dt)));
    }
    if config.n_total == 0 {
        return Err(Error::Invalid("n_total must be >= 1".into()));
    }
    Ok(config)
}

/// Parses `x,y,z` and repairs near-pure inputs onto the unit sphere by
/// keeping the polar height and azimuth (rounded CLI coordinates such as
/// `-0.866,0,-0.5` then resolve to the exact intended target). States off by
/// more than 1e-3 are rejected.
pub fn parse_pure_state(text: &str) -> Result<BlochVector> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Invalid(format!(
            "state must be x,y,z with 3 components, got {text:?}"
        )));
    }
    let mut c = [0.0f64; 3];
    for (i, p) in parts.iter().enumerate() {
        c[i] = p
            .parse()
            .map_err(|_| Error::Invalid(format!("cannot parse coordinate {p:?}")))?;
    }
    let v = BlochVector::new(c[0], c[1], c[2]);
    if v.is_pure() {
        return Ok(v);
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(Error::NonPureTarget { norm });
    }
    if v.z.abs() >= 1.0 {
        return Ok(BlochVector::new(0.0, 0.0, v.z.signum()));
    }
    let repaired = BlochVector::from_z_phi(v.z, v.y.atan2(v.x));
    let snap = |u: f64| if u.abs() < 1e-15 { 0.0 } else { u };
    Ok(BlochVector::new(
        snap(repaired.x),
        snap(repaired.y),
        snap(repaired.z),
    ))
}

fn state_json(q: &BlochVector) -> Json {
    Json::floats([q.x, q.y, q.z])
}

fn control_json(c: &MlpControl, config: &RunConfig) -> Json {
    Json::obj(vec![
        ("omega", Json::Float(c.omega)),
        ("time", Json::Float(c.time)),
        ("quadrant_corrected", Json::Bool(c.quadrant_corrected)),
        ("config", config.echo()),
    ])
}

fn pulse_json(p: &ControlPulse) -> Json {
    Json::obj(vec![
        (
            "segments",
            Json::Array(
                p.segments()
                    .iter()
                    .map(|s| {
                        Json::obj(vec![
                            ("duration", Json::Float(s.duration)),
                            ("omega", Json::Float(s.omega)),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("total_time", Json::Float(p.total_time())),
    ])
}

fn optimization_json(method: &str, r: &OptimizationResult, config: &RunConfig) -> Json {
    Json::obj(vec![
        ("method", Json::Str(method.to_string())),
        ("objective", Json::Float(r.objective)),
        ("n_evaluations", Json::UInt(r.n_evaluations)),
        ("converged", Json::Bool(r.converged)),
        ("restarts_used", Json::UInt(r.restarts_used as u64)),
        ("pulse", pulse_json(&r.pulse)),
        ("config", config.echo()),
    ])
}

fn ensemble_json(e: &EnsembleResult, config: &RunConfig) -> Json {
    Json::obj(vec![
        ("n_total", Json::UInt(e.n_total as u64)),
        ("seed", Json::UInt(e.seed)),
        ("retain_stride", Json::UInt(e.retain_stride as u64)),
        ("mean_final", Json::floats(e.mean_final)),
        (
            "avg_fidelity",
            e.avg_fidelity.map(Json::Float).unwrap_or(Json::Null),
        ),
        (
            "target",
            e.target.map(Json::floats).unwrap_or(Json::Null),
        ),
        (
            "finals",
            Json::Array(e.finals.iter().map(|f| Json::floats(*f)).collect()),
        ),
        ("config", config.echo()),
    ])
}

fn success_json(s: &SuccessRateReport, config: &RunConfig) -> Json {
    Json::obj(vec![
        ("delta", Json::Float(s.delta)),
        ("n_success", Json::UInt(s.n_success as u64)),
        ("n_total", Json::UInt(s.n_total as u64)),
        ("rate_percent", Json::Float(s.rate_percent)),
        ("config", config.echo()),
    ])
}

fn histogram_csv(h: &Histogram, provenance: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in provenance {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&format!("# axis={}\n", h.axis.label()));
    out.push_str("bin_lo,bin_hi,count\n");
    for (i, &count) in h.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            crate::jsonfmt::format_float(h.edges[i]),
            crate::jsonfmt::format_float(h.edges[i + 1]),
            count
        ));
    }
    out
}

fn table1_json(t: &Table1Report, config: &RunConfig) -> Json {
    let block = |b: &bench::Table1Block| {
        Json::obj(vec![
            ("gamma", Json::Float(b.gamma)),
            (
                "rows",
                Json::Array(
                    b.rows
                        .iter()
                        .map(|r| {
                            Json::obj(vec![
                                ("method", Json::Str(r.method.clone())),
                                ("omegas", Json::floats(r.omegas.iter().copied())),
                                ("durations", Json::floats(r.durations.iter().copied())),
                                ("lindblad_fidelity", Json::Float(r.lindblad_fidelity)),
                                ("avg_fidelity", Json::Float(r.avg_fidelity)),
                                ("s_loose", Json::Float(r.s_loose)),
                                ("s_tight", Json::Float(r.s_tight)),
                            ])
                        })
                        .collect(),
                ),
            ),
        ])
    };
    Json::obj(vec![
        ("delta_loose", Json::Float(t.delta_loose)),
        ("delta_tight", Json::Float(t.delta_tight)),
        ("n_total", Json::UInt(t.n_total as u64)),
        ("dt", Json::Float(t.dt)),
        ("seed", Json::UInt(t.seed)),
        ("low_dephasing", block(&t.low)),
        ("high_dephasing", block(&t.high)),
        ("config", config.echo()),
    ])
}

fn calibration_json(c: &ToleranceCalibration, config: &RunConfig) -> Json {
    Json::obj(vec![
        (
            "ensemble_sizes",
            Json::Array(c.ensemble_sizes.iter().map(|&n| Json::UInt(n as u64)).collect()),
        ),
        ("n_repeats", Json::UInt(c.n_repeats as u64)),
        (
            "per_size",
            Json::Array(
                c.per_size
                    .iter()
                    .map(|s| {
                        Json::obj(vec![
                            ("ensemble_size", Json::UInt(s.ensemble_size as u64)),
                            ("mean_infidelity", Json::Float(s.mean_infidelity)),
                            ("infidelity_range", Json::Float(s.infidelity_range)),
                            ("infidelity_sd", Json::Float(s.infidelity_sd)),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("config", config.echo()),
    ])
}

fn regimes_json(d: &RegimeDiagnostics, config: &RunConfig) -> Json {
    let bundle = |b: &bench::TrajectoryBundle| {
        Json::obj(vec![
            ("method", Json::Str(b.method.clone())),
            ("omega", Json::Float(b.omega)),
            ("total_time", Json::Float(b.total_time)),
            ("dt", Json::Float(b.dt)),
            ("mean_final_norm", Json::Float(b.mean_final_norm)),
            (
                "sample_paths",
                Json::Array(
                    b.sample_paths
                        .iter()
                        .map(|p| Json::Array(p.iter().map(|q| Json::floats(*q)).collect()))
                        .collect(),
                ),
            ),
            (
                "mean_path",
                Json::Array(b.mean_path.iter().map(|q| Json::floats(*q)).collect()),
            ),
        ])
    };
    Json::obj(vec![
        ("target", Json::floats(d.target)),
        ("gamma", Json::Float(d.gamma)),
        ("mlp", bundle(&d.mlp)),
        ("mp", bundle(&d.mp)),
        ("config", config.echo()),
    ])
}

fn emit(doc: &Json, config: &RunConfig, filename: &str) -> Result<()> {
    let text = doc.render();
    print!("{text}");
    if let Some(dir) = &config.output_path {
        let dir = Path::new(dir);
        fs::create_dir_all(dir)?;
        fs::write(dir.join(filename), &text)?;
    }
    Ok(())
}

fn write_out(config: &RunConfig, filename: &str, text: &str) -> Result<PathBuf> {
    let dir = config.output_path.clone().unwrap_or_else(|| "qprep_out".into());
    let dir = Path::new(&dir);
    fs::create_dir_all(dir)?;
    let path = dir.join(filename);
    fs::write(&path, text)?;
    Ok(path)
}

fn cmd_solve_mlp(args: &SolveMlpArgs) -> Result<()> {
    let config = resolve_config(&args.common)?;
    let target = parse_pure_state(&args.target)?;
    let initial = parse_pure_state(&args.initial)?;
    let boundary = BoundaryPair::new(initial, target)?;
    let control = mlp::solve_capped(&boundary, config.epsilon, config.omega_cap)?;
    emit(&control_json(&control, &config), &config, "mlp_control.json")
}

fn cmd_optimize_mp(args: &OptimizeMpArgs) -> Result<()> {
    let config = resolve_config(&args.common)?;
    let target = parse_pure_state(&args.target)?;
    let initial = parse_pure_state(&args.initial)?;
    let boundary = BoundaryPair::new(initial, target)?;
    let params = config.params()?;

    let segments = args.segments.unwrap_or(match args.method {
        MpMethod::Single => 1,
        _ => 3,
    });
    let total_time = match args.total_time {
        Some(t) => snap_to_grid(t, config.dt),
        None => snap_to_grid(
            mlp::solve_capped(&boundary, config.epsilon, config.omega_cap)?.time,
            config.dt,
        ),
    };
    let bound = args
        .search_bound
        .unwrap_or(mp::DEFAULT_SEARCH_BOUND_FACTOR)
        * config.epsilon;
    let mut problem = OptimizationProblem::new(
        boundary,
        params,
        total_time,
        segments,
        (-bound, bound),
        config.dt,
    )?;
    if args.method != MpMethod::Single {
        problem = problem.with_refined_objective(10);
    }

    let (label, result) = match args.method {
        MpMethod::Single => {
            if segments != 1 {
                return Err(Error::Invalid(
                    "--method single requires --segments 1".into(),
                ));
            }
            ("single", mp::optimize_single_pulse(&problem)?)
        }
        MpMethod::Grape => (
            "grape",
            mp::grape_optimize(
                &problem,
                args.max_iters,
                args.restarts.unwrap_or(16),
                derive_seed(config.master_seed, 0x6772),
            )?,
        ),
        MpMethod::Crab => (
            "crab",
            mp::crab_optimize(
                &problem,
                args.n_basis,
                args.max_iters.max(600),
                args.restarts.unwrap_or(8),
                derive_seed(config.master_seed, 0x6372),
            )?,
        ),
    };
    emit(
        &optimization_json(label, &result, &config),
        &config,
        "optimization.json",
    )
}

fn resolve_pulse(args: &SimulateArgs, config: &RunConfig, boundary: &BoundaryPair) -> Result<ControlPulse> {
    match args.pulse_source {
        PulseSource::Mlp => {
            let c = mlp::solve_capped(boundary, config.epsilon, config.omega_cap)?;
            ControlPulse::constant(c.omega, snap_to_grid(c.time, config.dt), config.omega_cap)
        }
        PulseSource::Mp => {
            let t = match args.total_time {
                Some(t) => snap_to_grid(t, config.dt),
                None => snap_to_grid(
                    mlp::solve_capped(boundary, config.epsilon, config.omega_cap)?.time,
                    config.dt,
                ),
            };
            let bound = mp::DEFAULT_SEARCH_BOUND_FACTOR * config.epsilon;
            let problem = OptimizationProblem::new(
                *boundary,
                config.params()?,
                t,
                1,
                (-bound, bound),
                config.dt,
            )?;
            Ok(mp::optimize_single_pulse(&problem)?.pulse)
        }
        PulseSource::Inline => {
            let spec = args.pulse.as_deref().ok_or_else(|| {
                Error::Invalid("--pulse-source inline requires --pulse".into())
            })?;
            let omegas: Vec<f64> = spec
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad amplitude {p:?}")))
                })
                .collect::<Result<_>>()?;
            let t = match args.total_time {
                Some(t) => snap_to_grid(t, config.dt),
                None => snap_to_grid(
                    mlp::solve_capped(boundary, config.epsilon, config.omega_cap)?.time,
                    config.dt,
                ),
            };
            ControlPulse::piecewise_on_grid(&omegas, t, config.dt, config.omega_cap)
        }
        PulseSource::File => {
            let path = args
                .pulse_file
                .as_ref()
                .ok_or_else(|| Error::Invalid("--pulse-source file requires --pulse-file".into()))?;
            load_pulse_file(path, config.omega_cap)
        }
    }
}

/// Accepts either a bare pulse document or an optimize-mp output.
fn load_pulse_file(path: &Path, omega_cap: f64) -> Result<ControlPulse> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let segments = value
        .get("segments")
        .or_else(|| value.get("pulse").and_then(|p| p.get("segments")))
        .ok_or_else(|| Error::Invalid(format!("{}: no segments found", path.display())))?;
    let parsed: Vec<PulseSegment> = serde_json::from_value(segments.clone())
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    ControlPulse::new(parsed, omega_cap)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = resolve_config(&args.common)?;
    let target = parse_pure_state(&args.target)?;
    let initial = parse_pure_state(&args.initial)?;
    let boundary = BoundaryPair::new(initial, target)?;
    let params = config.params()?;
    let pulse = resolve_pulse(args, &config, &boundary)?;

    let ensemble = simulate_ensemble(
        &initial,
        &pulse,
        &params,
        config.dt,
        config.n_total,
        config.master_seed,
        Some(target),
    )?;
    let success = success_rate(&ensemble, &target, config.delta)?;
    let mean_path_final = lindblad_evolve(&initial, &pulse, &params, config.dt)?;

    let provenance = config.provenance_pairs();
    let mut written: Vec<String> = Vec::new();
    match config.output_format {
        OutputFormat::Json => {
            let p = write_out(&config, "ensemble.json", &ensemble_json(&ensemble, &config).render())?;
            written.push(p.display().to_string());
        }
        OutputFormat::Csv => {
            let mut csv = String::new();
            for (k, v) in &provenance {
                csv.push_str(&format!("# {k}={v}\n"));
            }
            csv.push_str("x,y,z\n");
            for f in &ensemble.finals {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    crate::jsonfmt::format_float(f[0]),
                    crate::jsonfmt::format_float(f[1]),
                    crate::jsonfmt::format_float(f[2])
                ));
            }
            let p = write_out(&config, "ensemble.csv", &csv)?;
            written.push(p.display().to_string());
        }
    }
    let p = write_out(&config, "success.json", &success_json(&success, &config).render())?;
    written.push(p.display().to_string());
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let hist = final_state_histogram(&ensemble, axis, args.bins);
        let p = write_out(
            &config,
            &format!("hist_{}.csv", axis.label()),
            &histogram_csv(&hist, &provenance),
        )?;
        written.push(p.display().to_string());
    }

    let summary = Json::obj(vec![
        ("pulse", pulse_json(&pulse)),
        ("avg_fidelity", Json::Float(ensemble.avg_fidelity.unwrap())),
        ("mean_final", Json::floats(ensemble.mean_final)),
        ("lindblad_final", state_json(&mean_path_final)),
        ("success_rate_percent", Json::Float(success.rate_percent)),
        (
            "written",
            Json::Array(written.into_iter().map(Json::Str).collect()),
        ),
        ("config", config.echo()),
    ]);
    print!("{}", summary.render());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let config = resolve_config(&args.common)?;
    let params = config.params()?;
    let mut written: Vec<String> = Vec::new();

    match args.experiment {
        Experiment::Sweep => {
            let mut grid = if args.coarse {
                SweepGrid::coarse(args.plane)
            } else {
                SweepGrid::standard(args.plane)
            };
            if args.common.n_total.is_some() {
                grid.n_total = config.n_total;
            }
            grid.delta = config.delta;
            grid.dt = config.dt;
            let cells = bench::run_sweep(&grid, &params, config.master_seed);
            let mut provenance = config.provenance_pairs();
            provenance.push((
                "grid".to_string(),
                format!(
                    "z={} phi[{}] gamma[{}] n={}",
                    grid.z_plane,
                    grid.phi_values.len(),
                    grid.gamma_values.len(),
                    grid.n_total
                ),
            ));
            let p = write_out(&config, "sweep.csv", &bench::sweep_csv(&cells, &provenance))?;
            written.push(p.display().to_string());
        }
        Experiment::Table1 => {
            let mut setup = Table1Setup {
                dt: config.dt,
                ..Table1Setup::default()
            };
            if args.common.n_total.is_some() {
                setup.n_total = config.n_total;
            }
            if let Some(t) = &args.target {
                setup.target = parse_pure_state(t)?;
            }
            let report = bench::run_table1(&setup, config.master_seed)?;
            let p = write_out(&config, "table1.json", &table1_json(&report, &config).render())?;
            written.push(p.display().to_string());
            let p = write_out(&config, "table1.txt", &report.to_text())?;
            written.push(p.display().to_string());
        }
        Experiment::Tolerance => {
            let target = match &args.target {
                Some(t) => parse_pure_state(t)?,
                // the calibration target used throughout the docs
                None => parse_pure_state("-0.16,-0.58,-0.8")?,
            };
            let boundary = BoundaryPair::from_ground(target)?;
            let control = mlp::solve_capped(&boundary, config.epsilon, config.omega_cap)?;
            let pulse = ControlPulse::constant(
                control.omega,
                snap_to_grid(control.time, config.dt),
                config.omega_cap,
            )?;
            let spec = ToleranceCalibration::default();
            let out = bench::calibrate_tolerance(
                &target,
                &pulse,
                &params,
                &spec,
                config.master_seed,
                config.dt,
            )?;
            let p = write_out(&config, "tolerance.json", &calibration_json(&out, &config).render())?;
            written.push(p.display().to_string());
        }
        Experiment::Regimes => {
            // default: a long-path target where the two strategies pick
            // visibly different drives
            let target = match &args.target {
                Some(t) => parse_pure_state(t)?,
                None => BlochVector::from_z_phi(-0.5, 11.0 * std::f64::consts::PI / 8.0),
            };
            let diag = bench::regime_diagnostics(&target, config.gamma, &params, config.master_seed)?;
            let p = write_out(&config, "regimes.json", &regimes_json(&diag, &config).render())?;
            written.push(p.display().to_string());
        }
    }

    let summary = Json::obj(vec![
        (
            "written",
            Json::Array(written.into_iter().map(Json::Str).collect()),
        ),
        ("config", config.echo()),
    ]);
    print!("{}", summary.render());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SolveMlp(args) => cmd_solve_mlp(args),
        Command::OptimizeMp(args) => cmd_optimize_mp(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn threads_hint(cli: &Cli) -> Option<usize> {
    let common = match &cli.command {
        Command::SolveMlp(a) => &a.common,
        Command::OptimizeMp(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Bench(a) => &a.common,
    };
    common.threads
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match threads_hint(&cli) {
        Some(n) => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool,
                Err(e) => {
                    eprintln!("qprep: {e}");
                    return 1;
                }
            };
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let doc = Json::obj(vec![(
                "error",
                Json::obj(vec![
                    ("kind", Json::Str(e.kind().to_string())),
                    ("message", Json::Str(e.to_string())),
                ]),
            )]);
            print!("{}", doc.render());
            eprintln!("qprep: {e}");
            if e.is_domain() {
                2
            } else {
                1
            }
        }
    }
}
