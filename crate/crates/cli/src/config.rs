//! Serializable experiment configurations.
//!
//! Every artifact embeds the [`ExperimentConfig`] that produced it, so
//! `groupsketch replay <file>` can regenerate the file byte for byte.

use groupsketch::embedding::{GridSpec, SurjectionFamily};
use groupsketch::membership::{Preset, SimulationConfig, SurjectionSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Tradeoff(TradeoffConfig),
    SweepCorrelation(SweepConfig),
    Simulate(SimulateConfig),
    Reduce(ReduceConfig),
    BloomCompare(BloomConfig),
    OptimizeSurjection(OptimizeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    pub n: usize,
    pub alphabet_size: usize,
    pub p_grid: Vec<f64>,
    pub surjections: Vec<SurjectionSpec>,
    pub eta0: f64,
    pub eta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub d: usize,
    pub n: usize,
    pub c_grid: Vec<f64>,
    pub families: Vec<SurjectionFamily>,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub preset: Option<Preset>,
    pub simulation: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceConfig {
    pub preset: Option<Preset>,
    /// Base configuration: identity surjection at the longest length.
    pub base: SimulationConfig,
    pub symbol_targets: Vec<usize>,
    /// Lengths of the m-reduction series; `None` picks the lengths matching
    /// each surjection's budget.
    pub m_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomConfig {
    pub n: usize,
    pub epsilon: f64,
    pub probes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub n: usize,
    pub alphabet_size: usize,
    pub p: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub symbol_targets: Vec<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let prob = |name: &str, v: f64| -> Result<(), CliError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match self {
            Self::Tradeoff(c) => {
                if c.n == 0 || c.alphabet_size < 2 {
                    return bad("need n >= 1 and an alphabet of at least 2 symbols".into());
                }
                if c.p_grid.is_empty() || c.surjections.is_empty() {
                    return bad("empty p grid or surjection set".into());
                }
                for &p in &c.p_grid {
                    if !(p > 0.0 && p < 1.0) {
                        return bad(format!("p = {p} outside (0, 1)"));
                    }
                }
                prob("eta0", c.eta0)?;
                prob("eta1", c.eta1)
            }
            Self::SweepCorrelation(c) => {
                if c.n == 0 || c.d < 2 {
                    return bad("need n >= 1 and d >= 2".into());
                }
                if c.c_grid.is_empty() || c.families.is_empty() || c.grid.is_empty() {
                    return bad("empty c grid, family set or threshold grid".into());
                }
                for &v in &c.c_grid {
                    if !(-1.0..=1.0).contains(&v) {
                        return bad(format!("c = {v} outside [-1, 1]"));
                    }
                }
                Ok(())
            }
            Self::Simulate(c) => Ok(c.simulation.validate()?),
            Self::Reduce(c) => {
                c.base.validate()?;
                if c.base.surjection != SurjectionSpec::Identity {
                    return bad("the reduction base must use the identity surjection".into());
                }
                if c.symbol_targets.is_empty() {
                    return bad("no |Y| targets".into());
                }
                if let Some(g) = &c.m_grid {
                    if g.is_empty() || g.contains(&0) {
                        return bad("m grid must be non-empty and positive".into());
                    }
                }
                Ok(())
            }
            Self::BloomCompare(c) => {
                if c.n == 0 || c.probes == 0 {
                    return bad("need n >= 1 and probes >= 1".into());
                }
                if !(c.epsilon > 0.0 && c.epsilon <= 1.0) {
                    return bad(format!("epsilon = {} outside (0, 1]", c.epsilon));
                }
                Ok(())
            }
            Self::OptimizeSurjection(c) => {
                if c.n == 0 || c.alphabet_size < 2 {
                    return bad("need n >= 1 and an alphabet of at least 2 symbols".into());
                }
                if !(c.p > 0.0 && c.p < 1.0) {
                    return bad(format!("p = {} outside (0, 1)", c.p));
                }
                if c.symbol_targets.is_empty() || c.symbol_targets.contains(&0) {
                    return bad("|Y| targets must be non-empty and positive".into());
                }
                prob("eta0", c.eta0)?;
                prob("eta1", c.eta1)
            }
        }
    }
}

/// Short label of a surjection used in CSV rows.
pub fn surjection_label(s: &SurjectionSpec) -> String {
    match s {
        SurjectionSpec::Identity => "identity".into(),
        SurjectionSpec::AllOne => "all1".into(),
        SurjectionSpec::Majority => "majority".into(),
        SurjectionSpec::Greedy { symbols } => format!("greedy:{symbols}"),
        SurjectionSpec::Table { .. } => "table".into(),
    }
}

/// Parses `identity`, `all1`, `majority`, `greedy:<k>` or `file:<path>`; a
/// file holds a JSON array mapping type index to output symbol and is read
/// here, so the table itself lands in the config echo.
pub fn parse_surjection(s: &str) -> Result<SurjectionSpec, CliError> {
    if let Some(path) = s.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading surjection table {path}: {e}")))?;
        let table: Vec<usize> = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("surjection table {path}: {e}")))?;
        return Ok(SurjectionSpec::Table { table });
    }
    Ok(s.parse()?)
}

/// `i * step` for `i` in `1..=count`, as `i / denom` to keep decimals short.
pub fn ratio_grid(count: usize, denom: f64) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / denom).collect()
}
