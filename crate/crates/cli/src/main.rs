//! `groupsketch`: experiment runner for group-membership verification.
//!
//! Sweeps are written as CSV, single outcomes as JSON. Every file starts
//! with (CSV: a `# config:` line) or contains (JSON: `config`) the full
//! configuration that produced it; `groupsketch replay <file>` regenerates
//! it byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupsketch::embedding::templates::save_templates;
use groupsketch::embedding::{GridSpec, SurjectionFamily};
use groupsketch::membership::{run_templates, Preset, SimulationConfig, SurjectionSpec};

use crate::commands::{execute, read_echo, Format};
use crate::config::{
    parse_surjection, ratio_grid, BloomConfig, ExperimentConfig, OptimizeConfig, ReduceConfig,
    SimulateConfig, SweepConfig, TradeoffConfig,
};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<groupsketch::Error> for CliError {
    fn from(e: groupsketch::Error) -> Self {
        use groupsketch::Error as E;
        match e {
            E::Numerical(_) | E::Inconsistent(_) | E::Unverifiable(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "groupsketch", version, about = "Group-membership verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// (C, S, V) over activation probabilities and surjections [CSV]
    Tradeoff(TradeoffArgs),
    /// Best V over the embedding threshold grid per correlation [CSV]
    SweepCorrelation(SweepArgs),
    /// Monte-Carlo verification run [JSON outcome, CSV summary]
    Simulate(SimulateArgs),
    /// Shrinking m vs coarsening the surjection at matched m*C budgets [CSV]
    Reduce(ReduceArgs),
    /// Bloom filter vs All-1 scheme: required lengths and empirical rates [JSON]
    BloomCompare(BloomArgs),
    /// Greedy symbol merging and the best threshold surjection [JSON]
    OptimizeSurjection(OptimizeArgs),
    /// Regenerate an output file from its embedded config
    Replay(ReplayArgs),
}

#[derive(Args)]
struct TradeoffArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Alphabet size |X|.
    #[arg(long, default_value_t = 2)]
    alphabet: usize,
    /// Activation probabilities; default 0.005, 0.010, ..., 0.5.
    #[arg(long, value_delimiter = ',', conflicts_with = "alpha")]
    p: Vec<f64>,
    /// Sparsity levels, p = alpha / n.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// identity, all1, majority, greedy:<k> or file:<path>.
    #[arg(long, value_delimiter = ',', default_value = "identity,all1,majority")]
    surjection: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    eta0: f64,
    #[arg(long, default_value_t = 0.0)]
    eta1: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 256)]
    d: usize,
    #[arg(long, default_value_t = 15)]
    n: usize,
    /// Correlations; default 0.5 ... 0.999.
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    /// identity, majority, all1, best_threshold.
    #[arg(long, value_delimiter = ',', default_value = "identity,majority,all1")]
    families: Vec<String>,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    grid_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    grid_max: f64,
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Synthetic correlated unit vectors through random projections.
    Vector,
    /// i.i.d. binary symbols through a binary channel.
    Sequence,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Easy,
    Medium,
    Hard,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Easy => Preset::Easy,
            PresetArg::Medium => Preset::Medium,
            PresetArg::Hard => Preset::Hard,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "vector")]
    mode: Mode,
    /// Vector mode: easy (c 0.83, d 128), medium (0.78, 256), hard (0.68, 512).
    #[arg(long, value_enum, default_value = "easy")]
    preset: PresetArg,
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Sequence length; default 8 d in vector mode, 1024 in sequence mode.
    #[arg(long)]
    m: Option<usize>,
    /// Vector mode: override the preset dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Vector mode: override the preset correlation.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda_x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda_q: f64,
    /// Sequence mode activation probability.
    #[arg(long, default_value_t = 0.5, conflicts_with = "alpha")]
    p: f64,
    /// Sequence mode: p = alpha / n.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Groups per run, each giving n positives and n negatives.
    #[arg(long, default_value_t = 10)]
    groups: usize,
    /// Operating false-positive rate.
    #[arg(long, default_value_t = 0.05)]
    pfp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn build(&self, surjection: SurjectionSpec) -> (Option<Preset>, SimulationConfig) {
        let (preset, mut cfg) = match self.mode {
            Mode::Vector => {
                let preset: Preset = self.preset.into();
                let dim = self.d.unwrap_or(preset.dim());
                let cfg = SimulationConfig::vector(
                    self.n,
                    self.m.unwrap_or(8 * dim),
                    dim,
                    self.c.unwrap_or(preset.correlation()),
                    self.lambda_x,
                    self.lambda_q,
                    surjection,
                    self.seed,
                );
                let pure = self.d.is_none() && self.c.is_none();
                (pure.then_some(preset), cfg)
            }
            Mode::Sequence => {
                let p = self.alpha.map_or(self.p, |a| a / self.n.max(1) as f64);
                let cfg = SimulationConfig::sequence(
                    self.n,
                    self.m.unwrap_or(1024),
                    p,
                    self.eta0,
                    self.eta1,
                    surjection,
                    self.seed,
                );
                (None, cfg)
            }
        };
        cfg.runs = self.runs;
        cfg.group_count = self.groups;
        cfg.operating_pfp = self.pfp;
        (preset, cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "identity")]
    surjection: String,
    /// JSON outcome (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV summary.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Vector mode: the enrolled templates of run 0 as a matrix file.
    #[arg(long)]
    templates_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output alphabet sizes of the greedy surjections.
    #[arg(long, value_delimiter = ',', default_value = "3,4,8")]
    targets: Vec<usize>,
    /// Lengths of the m-reduction series; default: those matching each budget.
    #[arg(long, value_delimiter = ',')]
    m_grid: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BloomArgs {
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Member and outsider probes.
    #[arg(long, default_value_t = 10_000)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    alphabet: usize,
    #[arg(long, default_value_t = 0.5, conflicts_with = "alpha")]
    p: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    eta0: f64,
    #[arg(long, default_value_t = 0.0)]
    eta1: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,4,3,2")]
    targets: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// The table of the smallest target, for `--surjection file:<path>`.
    #[arg(long)]
    table_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// A CSV or JSON file written by another subcommand.
    file: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<SurjectionFamily, CliError> {
    match s {
        "identity" => Ok(SurjectionFamily::Identity),
        "majority" => Ok(SurjectionFamily::Majority),
        "all1" => Ok(SurjectionFamily::AllOne),
        "best_threshold" => Ok(SurjectionFamily::BestThreshold),
        _ => Err(CliError::Config(format!("unknown family {s:?}"))),
    }
}

fn default_c_grid() -> Vec<f64> {
    vec![
        0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.92, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99, 0.995,
        0.999,
    ]
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, content: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(content)?;
    // temp files are created owner-only; give the result ordinary permissions
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Config(e.to_string()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, content.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("this command has no {what} output"))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GROUPSKETCH_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("GROUPSKETCH_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Tradeoff(a) => {
            let p_grid = if !a.alpha.is_empty() {
                a.alpha.iter().map(|x| x / a.n.max(1) as f64).collect()
            } else if !a.p.is_empty() {
                a.p
            } else {
                ratio_grid(100, 200.0)
            };
            let surjections = a
                .surjection
                .iter()
                .map(|s| parse_surjection(s))
                .collect::<Result<_, _>>()?;
            let cfg = ExperimentConfig::Tradeoff(TradeoffConfig {
                n: a.n,
                alphabet_size: a.alphabet,
                p_grid,
                surjections,
                eta0: a.eta0,
                eta1: a.eta1,
            });
            let art = execute(&cfg)?;
            emit(a.out.as_deref(), art.csv.as_deref().ok_or_else(|| missing("CSV"))?)
        }
        Command::SweepCorrelation(a) => {
            let families = a
                .families
                .iter()
                .map(|s| parse_family(s))
                .collect::<Result<_, _>>()?;
            let cfg = ExperimentConfig::SweepCorrelation(SweepConfig {
                d: a.d,
                n: a.n,
                c_grid: if a.c.is_empty() { default_c_grid() } else { a.c },
                families,
                grid: GridSpec::uniform(a.grid_min, a.grid_max, a.grid_step)?,
            });
            let art = execute(&cfg)?;
            emit(a.out.as_deref(), art.csv.as_deref().ok_or_else(|| missing("CSV"))?)
        }
        Command::Simulate(a) => {
            let (preset, simulation) = a.model.build(parse_surjection(&a.surjection)?);
            let cfg = ExperimentConfig::Simulate(SimulateConfig {
                preset,
                simulation: simulation.clone(),
            });
            let art = execute(&cfg)?;
            if let Some(path) = &a.templates_out {
                let kept = run_templates(&simulation, 0)?;
                if kept.enrolled.is_empty() {
                    return Err(CliError::Config("--templates-out needs vector mode".into()));
                }
                save_templates(path, &kept.enrolled)?;
                log::info!("wrote {}", path.display());
            }
            if let Some(path) = &a.summary_out {
                write_atomic(path, art.csv.as_deref().ok_or_else(|| missing("CSV"))?.as_bytes())?;
            }
            emit(a.out.as_deref(), art.json.as_deref().ok_or_else(|| missing("JSON"))?)
        }
        Command::Reduce(a) => {
            let (preset, base) = a.model.build(SurjectionSpec::Identity);
            let cfg = ExperimentConfig::Reduce(ReduceConfig {
                preset,
                base,
                symbol_targets: a.targets,
                m_grid: (!a.m_grid.is_empty()).then_some(a.m_grid),
            });
            let art = execute(&cfg)?;
            emit(a.out.as_deref(), art.csv.as_deref().ok_or_else(|| missing("CSV"))?)
        }
        Command::BloomCompare(a) => {
            let cfg = ExperimentConfig::BloomCompare(BloomConfig {
                n: a.n,
                epsilon: a.epsilon,
                probes: a.probes,
                seed: a.seed,
            });
            let art = execute(&cfg)?;
            emit(a.out.as_deref(), art.json.as_deref().ok_or_else(|| missing("JSON"))?)
        }
        Command::OptimizeSurjection(a) => {
            let cfg = ExperimentConfig::OptimizeSurjection(OptimizeConfig {
                n: a.n,
                alphabet_size: a.alphabet,
                p: a.alpha.map_or(a.p, |x| x / a.n.max(1) as f64),
                eta0: a.eta0,
                eta1: a.eta1,
                symbol_targets: a.targets,
            });
            let art = execute(&cfg)?;
            if let Some(path) = &a.table_out {
                write_atomic(path, art.table.as_deref().ok_or_else(|| missing("table"))?.as_bytes())?;
            }
            emit(a.out.as_deref(), art.json.as_deref().ok_or_else(|| missing("JSON"))?)
        }
        Command::Replay(a) => {
            let text = std::fs::read_to_string(&a.file)
                .map_err(|e| CliError::Config(format!("reading {}: {e}", a.file.display())))?;
            let (cfg, format) = read_echo(&text)?;
            log::info!("replaying {:?} output of {}", format, a.file.display());
            let art = execute(&cfg)?;
            let what = if format == Format::Csv { "CSV" } else { "JSON" };
            emit(a.out.as_deref(), art.get(format).ok_or_else(|| missing(what))?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groupsketch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
