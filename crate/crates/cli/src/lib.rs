//! `homolab` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 at least one VIOLATION
//! verdict, 3 numerical failure. Errors are written to standard error as a
//! single JSON object per line; `HOMOLAB_LOG` sets the log level.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use homolab::harness::{
    probe_converse, random_state, sample_rng, spec_label, verify_spec, ConjectureReport, FORWARD_TOLERANCE,
};
use homolab::{
    identity_check, integrate, known_seeds, make_homographic, solve_central_config, CentralConfigurationF64,
    HomographicSpecF64, IntegratorSpecF64, SeedKind, SolverOptions, Termination,
};
use serde::Serialize;

use config::{load_cc, load_config, load_input, render_config, CcFile, Input};
use output::{write_trajectory_csv, Sink};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Largest acceptable `identity-check` residual.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config {
        path: PathBuf,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    Io {
        path: PathBuf,
        message: String,
    },
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
            CliError::Config {
                path,
                line,
                column,
                message,
            } => json!({
                "error": "config",
                "path": path.display().to_string(),
                "line": line,
                "column": column,
                "message": message,
            }),
            CliError::Io { path, message } => {
                json!({"error": "io", "path": path.display().to_string(), "message": message})
            }
            CliError::Numerical(m) => json!({"error": "numerical", "message": m}),
        }
    }
}

impl From<homolab::Error> for CliError {
    fn from(e: homolab::Error) -> Self {
        use homolab::Error::*;
        match e {
            Collision { .. } | NonConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "homolab", version, about = "Homographic orbits and the I^alpha U measure for power-law n-body problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct IntegratorArgs {
    /// Relative tolerance (overrides the config file).
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Absolute tolerance (overrides the config file).
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Output sample spacing (overrides the config file).
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Largest step (overrides the config file).
    #[arg(long)]
    max_step: Option<f64>,
}

impl IntegratorArgs {
    fn apply(&self, base: IntegratorSpecF64) -> Result<IntegratorSpecF64, CliError> {
        let spec = IntegratorSpecF64 {
            rel_tol: self.rel_tol.unwrap_or(base.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(base.abs_tol),
            sample_dt: self.sample_dt.unwrap_or(base.sample_dt),
            max_step: self.max_step.unwrap_or(base.max_step),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Circular,
    Elliptic,
    Homothetic,
}

#[derive(Debug, Args)]
struct OrbitArgs {
    #[arg(long, value_enum, default_value = "circular")]
    mode: Mode,
    /// Initial angular rate as a multiple of sqrt(lambda) (elliptic; default 0.8).
    #[arg(long)]
    theta_dot_scale: Option<f64>,
    /// Initial radial rate (required for homothetic, optional for elliptic).
    #[arg(long, allow_negative_numbers = true)]
    r_dot: Option<f64>,
}

impl OrbitArgs {
    fn spec(&self, cc: CentralConfigurationF64) -> Result<HomographicSpecF64, CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        let spec = match self.mode {
            Mode::Circular => {
                if self.theta_dot_scale.is_some() || self.r_dot.is_some() {
                    return usage("--mode circular takes neither --theta-dot-scale nor --r-dot");
                }
                HomographicSpecF64::circular(cc)
            }
            Mode::Elliptic => {
                let mut spec = HomographicSpecF64::elliptic(cc, self.theta_dot_scale.unwrap_or(0.8));
                spec.rdot0 = self.r_dot.unwrap_or(0.0);
                spec
            }
            Mode::Homothetic => {
                if self.theta_dot_scale.is_some() {
                    return usage("--mode homothetic takes no --theta-dot-scale");
                }
                let Some(v) = self.r_dot else {
                    return usage("--mode homothetic needs --r-dot");
                };
                HomographicSpecF64::homothetic(cc, v)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a config and write the trajectory as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Solve for a planar central configuration and write it as JSON.
    CentralConfig {
        config: PathBuf,
        /// Textbook seed; without it the config positions are the seed.
        #[arg(long)]
        seed_kind: Option<SeedKind>,
        /// Side length, spacing or circumradius of the seed.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build homographic initial conditions from a configuration file.
    MakeOrbit {
        cc: PathBuf,
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Integrate a homographic orbit and report the variation of I^alpha U.
    Verify {
        /// A system config (integrated as given) or a configuration `.json`.
        input: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[command(flatten)]
        orbit: OrbitArgs,
        /// Also write the integrated trajectory as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Integrate seeded random initial conditions and classify each orbit.
    Scan {
        config: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// JSON-lines destination (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Compare the direct and ratio forms of I^alpha U.
    IdentityCheck {
        config: PathBuf,
        /// Check this many random states of the config's system instead of its positions.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn check_t_end(t_end: f64) -> Result<(), CliError> {
    if t_end.is_finite() && t_end > 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--t-end must be positive, got {t_end}")))
    }
}

fn json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value)
        .map_err(std::io::Error::from)
        .and_then(|()| out.write_all(b"\n"))
        .map_err(|e| CliError::io(Path::new("<output>"), e))
}

fn simulate(config: &Path, t_end: f64, out: Option<&Path>, args: &IntegratorArgs) -> Result<i32, CliError> {
    check_t_end(t_end)?;
    let cfg = load_config(config)?;
    let spec = args.apply(cfg.integrator)?;
    let traj = integrate(&cfg.system, cfg.require_state()?, t_end, &spec)?;
    let mut sink = Sink::open(out)?;
    write_trajectory_csv(&traj, &mut sink).map_err(|e| CliError::io(out.unwrap_or(Path::new("<stdout>")), e))?;
    sink.finish()?;
    log::info!(
        "{} samples, termination {:?}, energy drift {:e}",
        traj.len(),
        traj.termination,
        traj.energy_drift()
    );
    match traj.termination {
        Termination::StepFailure => Err(CliError::Numerical(format!(
            "step size underflow at t = {}",
            traj.end_state.t
        ))),
        _ => Ok(EXIT_OK),
    }
}

fn central_config(config: &Path, seed_kind: Option<SeedKind>, scale: f64, out: Option<&Path>) -> Result<i32, CliError> {
    let cfg = load_config(config)?;
    let seed = match seed_kind {
        Some(kind) => known_seeds(kind, cfg.system.n(), scale)?,
        None => cfg.require_state()?.positions.clone(),
    };
    let cc = solve_central_config(&cfg.system, &seed, &SolverOptions::default())?;
    log::info!("lambda = {}, residual {:e}", cc.lambda, cc.residual_norm);
    let file = CcFile::from_cc(&cc, seed_kind.map(|k| k.name()));
    let mut sink = Sink::open(out)?;
    serde_json::to_writer_pretty(&mut sink, &file).map_err(|e| CliError::io(Path::new("<output>"), e))?;
    sink.write_all(b"\n").map_err(|e| CliError::io(Path::new("<output>"), e))?;
    sink.finish()?;
    Ok(EXIT_OK)
}

fn make_orbit(cc: &Path, orbit: &OrbitArgs, out: Option<&Path>, args: &IntegratorArgs) -> Result<i32, CliError> {
    let cc = load_cc(cc)?;
    let spec = orbit.spec(cc)?;
    let integrator = args.apply(IntegratorSpecF64::default())?;
    let state = make_homographic(&spec)?;
    let comment = format!(
        "{}\nlambda = {}, r0 = {}, rdot0 = {}, theta_dot0 = {}",
        spec_label(&spec),
        spec.cc.lambda,
        spec.r0,
        spec.rdot0,
        spec.theta_dot0
    );
    let text = render_config(&spec.cc.system, &state, &integrator, &comment)?;
    let mut sink = Sink::open(out)?;
    sink.write_all(text.as_bytes()).map_err(|e| CliError::io(out.unwrap_or(Path::new("<stdout>")), e))?;
    sink.finish()?;
    Ok(EXIT_OK)
}

fn verify(
    input: &Path,
    t_end: f64,
    orbit: &OrbitArgs,
    out: Option<&Path>,
    args: &IntegratorArgs,
) -> Result<i32, CliError> {
    check_t_end(t_end)?;
    let (report, traj) = match load_input(input)? {
        Input::Cc(cc) => {
            let spec = orbit.spec(cc)?;
            let integrator = args.apply(IntegratorSpecF64::default())?;
            verify_spec(&spec, t_end, &integrator)
        }
        Input::Config(cfg) => {
            let integrator = args.apply(cfg.integrator)?;
            let traj = integrate(&cfg.system, cfg.require_state()?, t_end, &integrator)?;
            let mut report = ConjectureReport::from_trajectory(input.display().to_string(), &traj, t_end);
            report.forward_ok = Some(report.measure_variation <= FORWARD_TOLERANCE);
            (report, Some(traj))
        }
    };
    if let (Some(path), Some(traj)) = (out, &traj) {
        let mut sink = Sink::open(Some(path))?;
        write_trajectory_csv(traj, &mut sink).map_err(|e| CliError::io(path, e))?;
        sink.finish()?;
    }
    let mut stdout = std::io::stdout().lock();
    json_line(&mut stdout, &report)?;
    if report.is_violation() {
        return Ok(EXIT_VIOLATION);
    }
    if let Some(err) = &report.error {
        return Err(CliError::Numerical(err.clone()));
    }
    if report.termination == Termination::StepFailure {
        return Err(CliError::Numerical("integration stopped on step size underflow".into()));
    }
    if report.forward_ok == Some(false) {
        return Err(CliError::Numerical(format!(
            "measure variation {:e} exceeds {FORWARD_TOLERANCE:e}",
            report.measure_variation
        )));
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ScanSummary {
    summary: homolab::ScatterSummary,
    seed: u64,
    t_end: f64,
    violations: usize,
}

fn scan(
    config: &Path,
    samples: usize,
    seed: u64,
    t_end: f64,
    jobs: usize,
    out: Option<&Path>,
    args: &IntegratorArgs,
) -> Result<i32, CliError> {
    check_t_end(t_end)?;
    if samples == 0 || jobs == 0 {
        return Err(CliError::Usage("--samples and --jobs must be at least 1".into()));
    }
    let cfg = load_config(config)?;
    let integrator = args.apply(cfg.integrator)?;
    let probe = probe_converse(&cfg.system, samples, seed, t_end, &integrator, jobs);
    let mut sink = Sink::open(out)?;
    for r in &probe.reports {
        if let Some(e) = &r.error {
            log::warn!("sample {:?} failed: {e}", r.sample);
        }
        json_line(&mut sink, r)?;
    }
    let violations = probe.summary.violations();
    json_line(
        &mut sink,
        &ScanSummary {
            summary: probe.summary,
            seed,
            t_end,
            violations,
        },
    )?;
    sink.finish()?;
    log::info!("{:?}", probe.summary);
    Ok(if violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

#[derive(Serialize)]
struct IdentitySummary {
    states: usize,
    max_residual: f64,
    mean_residual: f64,
    tolerance: f64,
}

fn identity(config: &Path, random: Option<usize>, seed: u64) -> Result<i32, CliError> {
    let cfg = load_config(config)?;
    let residuals: Vec<f64> = match random {
        Some(0) => return Err(CliError::Usage("--random must be at least 1".into())),
        Some(count) => (0..count as u64)
            .map(|i| identity_check(&cfg.system, &random_state(&cfg.system, &mut sample_rng(seed, i))))
            .collect::<Result<_, _>>()?,
        None => vec![identity_check(&cfg.system, cfg.require_state()?)?],
    };
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let summary = IdentitySummary {
        states: residuals.len(),
        max_residual,
        mean_residual: residuals.iter().sum::<f64>() / residuals.len() as f64,
        tolerance: IDENTITY_TOLERANCE,
    };
    json_line(&mut std::io::stdout().lock(), &summary)?;
    if max_residual <= IDENTITY_TOLERANCE {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Numerical(format!(
            "identity residual {max_residual:e} exceeds {IDENTITY_TOLERANCE:e}"
        )))
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate {
            config,
            t_end,
            out,
            integrator,
        } => simulate(&config, t_end, out.as_deref(), &integrator),
        Command::CentralConfig {
            config,
            seed_kind,
            scale,
            out,
        } => central_config(&config, seed_kind, scale, out.as_deref()),
        Command::MakeOrbit {
            cc,
            orbit,
            out,
            integrator,
        } => make_orbit(&cc, &orbit, out.as_deref(), &integrator),
        Command::Verify {
            input,
            t_end,
            orbit,
            out,
            integrator,
        } => verify(&input, t_end, &orbit, out.as_deref(), &integrator),
        Command::Scan {
            config,
            samples,
            seed,
            t_end,
            jobs,
            out,
            integrator,
        } => scan(&config, samples, seed, t_end, jobs, out.as_deref(), &integrator),
        Command::IdentityCheck { config, random, seed } => identity(&config, random, seed),
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("HOMOLAB_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Run the tool on `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            report(&CliError::Usage(e.render().to_string().trim_end().to_string()));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn report(err: &CliError) {
    eprintln!("{}", err.to_json());
}
