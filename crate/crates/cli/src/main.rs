//! `tikreg`: synthesize problems, solve regularization paths, select
//! parameters and reproduce the experiments.
//!
//! Exit codes: 0 success, 1 numerical failure (including violated error
//! estimates), 2 usage or configuration error.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tikreg::experiments::AlphaStart;
use tikreg::rules::Rule;

use crate::commands::ProblemKind;
use crate::config::{ConfigError, DeltaSweep, ExperimentConfig};
use crate::output::OutDir;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(tikreg::Error),
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<tikreg::Error> for CliError {
    fn from(e: tikreg::Error) -> Self {
        match e {
            tikreg::Error::InvalidParameter { .. } | tikreg::Error::Manifest(_) => CliError::Usage(e.to_string()),
            tikreg::Error::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Numerical(e),
        }
    }
}

#[derive(Parser)]
#[command(name = "tikreg", version, about = "Convex Tikhonov regularization: error estimates and parameter choice")]
struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DeconvolutionArgs {
    /// Signal length (power of two).
    #[arg(long)]
    n: Option<usize>,
    /// Penalty exponent in (1, 2].
    #[arg(long)]
    p: Option<f64>,
    /// Convolution kernel width on [0, 1].
    #[arg(long)]
    width: Option<f64>,
}

#[derive(Args, Default)]
struct BlurArgs {
    /// Image side length.
    #[arg(long)]
    n: Option<usize>,
    /// Half-bandwidth of the Gaussian blur.
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Weight of the quadratic term in the penalty.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args, Default)]
struct GridArgs {
    /// Largest grid parameter.
    #[arg(long)]
    alpha0: Option<f64>,
    /// Grid ratio in (0, 1).
    #[arg(long)]
    q: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Default)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    #[value(name = "operator_norm")]
    OperatorNorm,
    #[value(name = "hundred_delta")]
    HundredDelta,
    #[value(name = "hundred_delta_capped")]
    HundredDeltaCapped,
}

impl From<StartArg> for AlphaStart {
    fn from(s: StartArg) -> Self {
        match s {
            StartArg::OperatorNorm => AlphaStart::OperatorNorm,
            StartArg::HundredDelta => AlphaStart::HundredDelta,
            StartArg::HundredDeltaCapped => AlphaStart::HundredDeltaCapped,
        }
    }
}

#[derive(Args, Default)]
struct SweepArgs {
    #[command(flatten)]
    problem: DeconvolutionArgs,
    #[arg(long)]
    delta_min: Option<f64>,
    #[arg(long)]
    delta_max: Option<f64>,
    #[arg(long)]
    delta_count: Option<usize>,
    /// How the first grid parameter is chosen.
    #[arg(long, value_enum)]
    alpha_start: Option<StartArg>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    /// First index of the quasi-optimality sequence.
    #[arg(long)]
    k0: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    #[value(name = "oracle_bregman")]
    OracleBregman,
    #[value(name = "oracle_norm")]
    OracleNorm,
    #[value(name = "hanke_raus")]
    HankeRaus,
    #[value(name = "quasi_optimality")]
    QuasiOptimality,
    #[value(name = "discrepancy")]
    Discrepancy,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::OracleBregman => Rule::OracleBregman,
            RuleArg::OracleNorm => Rule::OracleNorm,
            RuleArg::HankeRaus => Rule::HankeRaus,
            RuleArg::QuasiOptimality => Rule::QuasiOptimality,
            RuleArg::Discrepancy => Rule::Discrepancy,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Error decomposition and estimate check on the deconvolution problem.
    Experiment1 {
        #[command(flatten)]
        problem: DeconvolutionArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        alpha_max: Option<f64>,
        #[arg(long)]
        alpha_min: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        /// Relative slack for the estimate checks.
        #[arg(long)]
        slack: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Hanke-Raus rule against the Bregman oracle over a noise sweep.
    Experiment2(SweepArgs),
    /// Quasi-optimality rule against the Bregman oracle over a noise sweep.
    Experiment3(SweepArgs),
    /// All rules on the deblurring problem.
    Experiment4 {
        #[command(flatten)]
        problem: BlurArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        k0: Option<usize>,
        /// Discrepancy safety factor.
        #[arg(long)]
        tau: Option<f64>,
        /// Also write PNG previews.
        #[arg(long)]
        png: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Build a problem instance and store it in `--out`.
    Synthesize {
        #[command(subcommand)]
        problem: SynthProblem,
    },
    /// Solve on a geometric grid; prints the path table unless `--out` is set.
    SolvePath {
        dir: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Apply one parameter choice rule to a stored instance.
    Select {
        dir: PathBuf,
        #[arg(long, value_enum)]
        rule: RuleArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        k0: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Error decomposition of a stored instance with a source element.
    Report {
        dir: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        slack: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum SynthProblem {
    Deconvolution {
        #[command(flatten)]
        problem: DeconvolutionArgs,
        #[arg(long)]
        delta: Option<f64>,
    },
    Blur {
        #[command(flatten)]
        problem: BlurArgs,
        #[arg(long)]
        delta: Option<f64>,
    },
}

impl DeconvolutionArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.n = self.n;
        c.p = self.p;
        c.width = self.width;
    }
}

impl BlurArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.n = self.n;
        c.band = self.band;
        c.sigma = self.sigma;
        c.eta = self.eta;
    }
}

impl GridArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.alpha_max = self.alpha0;
        c.q = self.q;
        c.count = self.count;
    }
}

impl SolverArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.tol = self.tol;
        c.max_iter = self.max_iter;
    }
}

impl SweepArgs {
    fn apply(&self, c: &mut ExperimentConfig, file: &ExperimentConfig) -> Result<(), CliError> {
        self.problem.apply(c);
        self.solver.apply(c);
        if self.delta_min.is_some() || self.delta_max.is_some() || self.delta_count.is_some() {
            let base = file.deltas.unwrap_or(DeltaSweep { min: 1e-4, max: 1e-1, count: 12 });
            c.deltas = Some(DeltaSweep {
                min: self.delta_min.unwrap_or(base.min),
                max: self.delta_max.unwrap_or(base.max),
                count: self.delta_count.unwrap_or(base.count),
            });
        }
        c.alpha_start = self.alpha_start.map(Into::into);
        c.q = self.q;
        c.count = self.count;
        c.k0 = self.k0;
        Ok(())
    }
}

/// Output directory: flag, then config, then `default`.
fn out_dir(c: &ExperimentConfig, default: &str) -> Result<OutDir, CliError> {
    let root = c.out.as_deref().unwrap_or(default);
    OutDir::create(Path::new(root))
}

fn optional_out(c: &ExperimentConfig) -> Result<Option<OutDir>, CliError> {
    c.out.as_deref().map(|p| OutDir::create(Path::new(p))).transpose()
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut flags = ExperimentConfig {
        seed: cli.seed,
        out: cli.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
        ..Default::default()
    };
    match cli.command {
        Command::Experiment1 {
            problem,
            delta,
            alpha_max,
            alpha_min,
            count,
            slack,
            solver,
        } => {
            problem.apply(&mut flags);
            solver.apply(&mut flags);
            flags.delta = delta;
            flags.alpha_max = alpha_max;
            flags.alpha_min = alpha_min;
            flags.count = count;
            flags.slack = slack;
            let c = file.merge(flags);
            commands::experiment1(&c, &out_dir(&c, "experiment1")?)
        }
        Command::Experiment2(args) => {
            args.apply(&mut flags, &file)?;
            let c = file.merge(flags);
            commands::sweep(&c, &out_dir(&c, "experiment2")?, Rule::HankeRaus)
        }
        Command::Experiment3(args) => {
            args.apply(&mut flags, &file)?;
            let c = file.merge(flags);
            commands::sweep(&c, &out_dir(&c, "experiment3")?, Rule::QuasiOptimality)
        }
        Command::Experiment4 {
            problem,
            delta,
            q,
            count,
            k0,
            tau,
            png,
            solver,
        } => {
            problem.apply(&mut flags);
            solver.apply(&mut flags);
            flags.delta = delta;
            flags.q = q;
            flags.count = count;
            flags.k0 = k0;
            flags.tau = tau;
            flags.png = png.then_some(true);
            let c = file.merge(flags);
            commands::experiment4(&c, &out_dir(&c, "experiment4")?)
        }
        Command::Synthesize { problem } => {
            let kind = match &problem {
                SynthProblem::Deconvolution { problem, delta } => {
                    problem.apply(&mut flags);
                    flags.delta = *delta;
                    ProblemKind::Deconvolution
                }
                SynthProblem::Blur { problem, delta } => {
                    problem.apply(&mut flags);
                    flags.delta = *delta;
                    ProblemKind::Blur
                }
            };
            let c = file.merge(flags);
            let dir = PathBuf::from(c.out.as_deref().unwrap_or("problem"));
            commands::synthesize(kind, &c, &dir)
        }
        Command::SolvePath { dir, grid, solver } => {
            grid.apply(&mut flags);
            solver.apply(&mut flags);
            let c = file.merge(flags);
            commands::solve_path(&dir, &c, optional_out(&c)?.as_ref())
        }
        Command::Select {
            dir,
            rule,
            grid,
            k0,
            tau,
            solver,
        } => {
            grid.apply(&mut flags);
            solver.apply(&mut flags);
            flags.k0 = k0;
            flags.tau = tau;
            let c = file.merge(flags);
            commands::select(&dir, rule.into(), &c, optional_out(&c)?.as_ref())
        }
        Command::Report {
            dir,
            grid,
            slack,
            solver,
        } => {
            grid.apply(&mut flags);
            solver.apply(&mut flags);
            flags.slack = slack;
            let c = file.merge(flags);
            commands::report(&dir, &c, optional_out(&c)?.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(1)
        }
    }
}
