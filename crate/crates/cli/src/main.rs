//! `pcfdyn`: batch driver for pcf-core.
//!
//! Exit codes: 0 success, 2 configuration error, 3 budget or cap refusal,
//! 4 partial failure (details in the manifest).

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::config(format!("{}: {e}", path.display()))
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError { code: 4, msg: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<pcf_core::Error> for CliError {
    fn from(e: pcf_core::Error) -> Self {
        use pcf_core::Error as E;
        let code = match e {
            E::Budget { .. } => 3,
            E::Numerical(_) | E::NotCertified(_) => 4,
            _ => 2,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "pcfdyn", version, about = "Parameter-space experiments for critically marked polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Green function G on a parameter plane.
    GreenGrid(Opts),
    /// Discrete bifurcation measure.
    MeasureBif(Opts),
    /// Solutions of P^{m_i}(c_i) = P^{n_i}(c_i).
    Pcf(Opts),
    /// Hyperbolic centers with periods m.
    Centers(Opts),
    /// Parameters with cycles of periods m and multipliers w.
    PerStar(Opts),
    /// Bifurcation, Ingram and naive heights of a rational parameter.
    Height(Opts),
    /// Angles of P(m, n), periodic counts and critical portraits.
    Angles(Opts),
    /// Discrepancy of a parameter schedule against the bifurcation measure.
    Equidist(Opts),
    /// Multiplier polynomial r_n.
    MultiplierCurve(Opts),
    /// Continuation from a center to prescribed multipliers.
    Continue(Opts),
}

impl Command {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Command::GreenGrid(o) => ("green-grid", o),
            Command::MeasureBif(o) => ("measure-bif", o),
            Command::Pcf(o) => ("pcf", o),
            Command::Centers(o) => ("centers", o),
            Command::PerStar(o) => ("per-star", o),
            Command::Height(o) => ("height", o),
            Command::Angles(o) => ("angles", o),
            Command::Equidist(o) => ("equidist", o),
            Command::MultiplierCurve(o) => ("multiplier-curve", o),
            Command::Continue(o) => ("continue", o),
        }
    }
}

/// Flags override the config file, which overrides the defaults table.
#[derive(Args)]
struct Opts {
    #[arg(long)]
    degree: Option<String>,
    /// Half-width, `re_min,re_max,im_min,im_max`, or `hw_c,hw_a` for full d = 3 grids.
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    res: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// Bezout cap, angle budget or orbit budget, depending on the command.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    cache: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated m_i.
    #[arg(long)]
    m: Option<String>,
    /// Comma-separated n_i.
    #[arg(long)]
    n: Option<String>,
    /// Multipliers, e.g. `0.6+0.2i`.
    #[arg(long)]
    w: Option<String>,
    /// Critical coordinates c_1, …, c_{d-2}.
    #[arg(long)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long)]
    period: Option<String>,
    #[arg(long)]
    qmax: Option<String>,
    /// `symbolic` or `numeric`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    smoothing: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    /// Use a 2-real slice for d = 3 measures.
    #[arg(long)]
    slice: Option<String>,
    /// `centers:A..B`, `misiurewicz:A..B[:n]` or `per-star:A..B@w`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    classify_tol: Option<String>,
}

impl Opts {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("degree", self.degree.clone()),
            ("region", self.region.clone()),
            ("res", self.res.clone()),
            ("tol", self.tol.clone()),
            ("budget", self.budget.clone()),
            ("out", self.out.clone()),
            ("cache", self.cache.clone()),
            ("threads", self.threads.clone()),
            ("seed", self.seed.clone()),
            ("m", self.m.clone()),
            ("n", self.n.clone()),
            ("w", self.w.clone()),
            ("c", self.c.clone()),
            ("a", self.a.clone()),
            ("period", self.period.clone()),
            ("qmax", self.qmax.clone()),
            ("mode", self.mode.clone()),
            ("steps", self.steps.clone()),
            ("smoothing", self.smoothing.clone()),
            ("depth", self.depth.clone()),
            ("slice", self.slice.clone()),
            ("schedule", self.schedule.clone()),
            ("classify_tol", self.classify_tol.clone()),
        ]
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let (name, opts) = cli.command.parts();
    let cfg = RunConfig::build(name, opts.config.as_deref(), &opts.flags())?;
    let threads = cfg.usize("threads")?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("pcfdyn: partial failure, see manifest.json");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("pcfdyn: {e}");
            ExitCode::from(e.code)
        }
    }
}
