//! Command execution and rendering.
//!
//! Commands are pure functions of their [`ExperimentConfig`]: the same config
//! always renders the same bytes, which is what `replay` relies on.

use std::f64::consts::LN_2;

use groupsketch::bloom::{equivalence_report, BloomFilter, EquivalenceReport};
use groupsketch::embedding::grid_search;
use groupsketch::infometrics::scheme_metrics;
use groupsketch::membership::{
    enroll, run_verification, SimulationConfig, SurjectionSpec, REJECT_SENTINEL,
};
use groupsketch::surjection::{best_threshold, greedy_chain};
use groupsketch::{NoiseChannel, SourceModel, Surjection, TypeModel, SCHEMA_VERSION};
use serde::Serialize;

use crate::config::{
    surjection_label, BloomConfig, ExperimentConfig, OptimizeConfig, ReduceConfig, SimulateConfig,
    SweepConfig, TradeoffConfig,
};
use crate::CliError;

/// Everything a command can emit; which parts exist depends on the command.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub csv: Option<String>,
    pub json: Option<String>,
    /// A bare surjection table, loadable with `--surjection file:<path>`.
    pub table: Option<String>,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.validate()?;
    match cfg {
        ExperimentConfig::Tradeoff(c) => tradeoff(cfg, c),
        ExperimentConfig::SweepCorrelation(c) => sweep_correlation(cfg, c),
        ExperimentConfig::Simulate(c) => simulate(cfg, c),
        ExperimentConfig::Reduce(c) => reduce(cfg, c),
        ExperimentConfig::BloomCompare(c) => bloom_compare(cfg, c),
        ExperimentConfig::OptimizeSurjection(c) => optimize_surjection(cfg, c),
    }
}

/// `# config: {...}` on the first line, then a header row and data rows.
fn csv_document(cfg: &ExperimentConfig, header: &[&str], rows: Vec<Vec<String>>) -> Result<String, CliError> {
    let mut out = format!("# config: {}\n", serde_json::to_string(cfg)?).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| CliError::Numerical(e.to_string()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    result: T,
}

fn json_document<T: Serialize>(cfg: &ExperimentConfig, result: T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        result,
    })?;
    s.push('\n');
    Ok(s)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn type_model(alphabet_size: usize, p: f64, n: usize) -> Result<TypeModel, CliError> {
    Ok(if alphabet_size == 2 {
        TypeModel::binary(p, n)?
    } else {
        TypeModel::new(SourceModel::new(alphabet_size, p)?, n)?
    })
}

pub const TRADEOFF_HEADER: [&str; 14] = [
    "schema_version",
    "n",
    "alphabet_size",
    "p",
    "surjection",
    "output_symbols",
    "eta0",
    "eta1",
    "C",
    "S",
    "V",
    "n_times_V",
    "source_entropy",
    "dense",
];

fn tradeoff(cfg: &ExperimentConfig, c: &TradeoffConfig) -> Result<Artifacts, CliError> {
    let chan = NoiseChannel::symmetric(c.alphabet_size, c.eta0, c.eta1, 0.0)?;
    let mut rows = Vec::new();
    for &p in &c.p_grid {
        let tm = type_model(c.alphabet_size, p, c.n)?;
        for spec in &c.surjections {
            let r = spec.resolve(&tm, &chan)?;
            let m = scheme_metrics(&tm, &r, &chan)?;
            rows.push(vec![
                SCHEMA_VERSION.to_string(),
                c.n.to_string(),
                c.alphabet_size.to_string(),
                num(p),
                surjection_label(spec),
                r.output_symbols().to_string(),
                num(c.eta0),
                num(c.eta1),
                num(m.compactness),
                num(m.security),
                num(m.verification),
                num(c.n as f64 * m.verification),
                num(m.source_entropy),
                (c.alphabet_size == 2 && p == 0.5).to_string(),
            ]);
        }
    }
    Ok(Artifacts {
        csv: Some(csv_document(cfg, &TRADEOFF_HEADER, rows)?),
        ..Default::default()
    })
}

pub const SWEEP_HEADER: [&str; 11] = [
    "schema_version",
    "d",
    "n",
    "c",
    "family",
    "lambda_x",
    "lambda_q",
    "p",
    "eta0",
    "eta1",
    "V",
];

fn sweep_correlation(cfg: &ExperimentConfig, c: &SweepConfig) -> Result<Artifacts, CliError> {
    let mut rows = Vec::new();
    for &corr in &c.c_grid {
        for &family in &c.families {
            let best = grid_search(corr, c.n, family, &c.grid)?;
            rows.push(vec![
                SCHEMA_VERSION.to_string(),
                c.d.to_string(),
                c.n.to_string(),
                num(corr),
                family.name().to_string(),
                num(best.lambda_x),
                num(best.lambda_q),
                num(best.p),
                num(best.eta0),
                num(best.eta1),
                num(best.verification),
            ]);
        }
    }
    Ok(Artifacts {
        csv: Some(csv_document(cfg, &SWEEP_HEADER, rows)?),
        ..Default::default()
    })
}

pub const SIMULATE_HEADER: [&str; 11] = [
    "schema_version",
    "scope",
    "n",
    "m",
    "runs",
    "surjection",
    "V",
    "threshold_tau",
    "tie_accept",
    "achieved_pfp",
    "pfn_at_pfp",
];

fn simulate(cfg: &ExperimentConfig, c: &SimulateConfig) -> Result<Artifacts, CliError> {
    let sim = &c.simulation;
    let out = run_verification(sim)?;
    let common = |scope: String| {
        vec![
            SCHEMA_VERSION.to_string(),
            scope,
            sim.n.to_string(),
            sim.m.to_string(),
            sim.runs.to_string(),
            surjection_label(&sim.surjection),
        ]
    };
    let mut rows = Vec::new();
    for (i, pfn) in out.per_run_pfn.iter().enumerate() {
        let mut row = common(format!("run:{i}"));
        row.extend(["", "", "", ""].map(String::from));
        row.push(pfn.map(num).unwrap_or_default());
        rows.push(row);
    }
    let mut mean = common("mean_run".into());
    mean.extend(["", "", "", ""].map(String::from));
    mean.push(out.mean_run_pfn.map(num).unwrap_or_default());
    rows.push(mean);
    let mut pooled = common("pooled".into());
    pooled.extend([
        num(out.verification),
        num(out.threshold_tau),
        num(out.tie_accept),
        num(out.achieved_pfp),
        num(out.pfn_at_pfp),
    ]);
    rows.push(pooled);

    Ok(Artifacts {
        csv: Some(csv_document(cfg, &SIMULATE_HEADER, rows)?),
        json: Some(json_document(cfg, &out)?),
        table: None,
    })
}

pub const REDUCE_HEADER: [&str; 10] = [
    "schema_version",
    "path",
    "surjection",
    "output_symbols",
    "m",
    "C",
    "budget",
    "V",
    "pfn_at_pfp",
    "mean_run_pfn",
];

struct ReducePoint {
    path: &'static str,
    spec: SurjectionSpec,
    m: usize,
}

fn reduce(cfg: &ExperimentConfig, c: &ReduceConfig) -> Result<Artifacts, CliError> {
    let base = &c.base;
    let id_scheme = base.scheme()?;
    let c_id = id_scheme.distributions.metrics()?.compactness;
    let type_count = id_scheme.types.type_count();

    let mut targets: Vec<usize> = c.symbol_targets.clone();
    targets.sort_unstable_by(|a, b| b.cmp(a));
    targets.dedup();
    if let Some(&k) = targets.iter().find(|&&k| k < 2 || k > type_count) {
        return Err(CliError::Config(format!(
            "|Y| target {k} outside [2, {type_count}]"
        )));
    }

    // the surjection series at the base length, identity first
    let mut points = vec![ReducePoint {
        path: "surjection",
        spec: SurjectionSpec::Identity,
        m: base.m,
    }];
    let mut budgets = Vec::new();
    for &k in &targets {
        let spec = if k == type_count {
            SurjectionSpec::Identity
        } else {
            SurjectionSpec::Greedy { symbols: k }
        };
        if k != type_count {
            points.push(ReducePoint {
                path: "surjection",
                spec: spec.clone(),
                m: base.m,
            });
        }
        let sim = SimulationConfig {
            surjection: spec,
            ..base.clone()
        };
        budgets.push(base.m as f64 * sim.scheme()?.distributions.metrics()?.compactness);
    }
    // the m-reduction series: identity at lengths matching those budgets
    let lengths: Vec<usize> = match &c.m_grid {
        Some(g) => g.clone(),
        None => {
            let mut g = vec![base.m];
            g.extend(budgets.iter().map(|b| ((b / c_id).round() as usize).max(1)));
            g.sort_unstable_by(|a, b| b.cmp(a));
            g.dedup();
            g
        }
    };
    points.extend(lengths.into_iter().map(|m| ReducePoint {
        path: "length",
        spec: SurjectionSpec::Identity,
        m,
    }));

    let mut rows = Vec::new();
    for pt in points {
        let sim = SimulationConfig {
            surjection: pt.spec.clone(),
            m: pt.m,
            ..base.clone()
        };
        let scheme = sim.scheme()?;
        let metrics = scheme.distributions.metrics()?;
        let out = run_verification(&sim)?;
        rows.push(vec![
            SCHEMA_VERSION.to_string(),
            pt.path.to_string(),
            surjection_label(&pt.spec),
            scheme.surjection.output_symbols().to_string(),
            pt.m.to_string(),
            num(metrics.compactness),
            num(pt.m as f64 * metrics.compactness),
            num(out.verification),
            num(out.pfn_at_pfp),
            out.mean_run_pfn.map(num).unwrap_or_default(),
        ]);
    }
    Ok(Artifacts {
        csv: Some(csv_document(cfg, &REDUCE_HEADER, rows)?),
        ..Default::default()
    })
}

#[derive(Debug, Serialize)]
struct BloomEmpirical {
    m: usize,
    hash_count: usize,
    items: usize,
    member_probes: usize,
    false_negatives: usize,
    outsider_probes: usize,
    false_positives: usize,
    empirical_fp_rate: f64,
    expected_fp_rate: f64,
    /// All-1 enrollment of the item sequences equals the filter bits.
    all_one_enrollment_identical: bool,
}

#[derive(Debug, Serialize)]
struct SchemeEmpirical {
    m: usize,
    activation_prob: f64,
    verification: f64,
    positives: usize,
    /// Positives with an impossible cell, i.e. rejected by the Bloom rule.
    hard_rejected_positives: usize,
    negatives: usize,
    /// Negatives with no impossible cell, i.e. accepted by the Bloom rule.
    accepted_negatives: usize,
    empirical_fp_rate: f64,
    /// The LLR test at the default operating point, for comparison.
    llr_pfn_at_pfp: f64,
}

#[derive(Debug, Serialize)]
struct BloomResult {
    report: EquivalenceReport,
    bloom: Option<BloomEmpirical>,
    scheme: Option<SchemeEmpirical>,
}

fn bloom_compare(cfg: &ExperimentConfig, c: &BloomConfig) -> Result<Artifacts, CliError> {
    let report = equivalence_report(c.n, c.epsilon)?;
    let (bloom, scheme) = if report.degenerate {
        (None, None)
    } else {
        let m = report.bloom_m as usize;
        let mut filter = BloomFilter::with_optimal_k(m, c.n, c.seed)?;
        let items: Vec<Vec<u8>> = (0..c.n as u64).map(|i| i.to_le_bytes().to_vec()).collect();
        let seqs: Vec<Vec<u8>> = items.iter().map(|it| filter.item_sequence(it)).collect();
        for it in &items {
            filter.insert(it);
        }
        let p = LN_2 / c.n as f64;
        let rep = enroll(&seqs, &TypeModel::binary(p, c.n)?, &Surjection::all_one(c.n))?;
        let bits: Vec<usize> = filter.bits().iter().map(|&b| usize::from(b)).collect();
        let false_negatives = (0..c.probes)
            .filter(|i| !filter.contains(&items[i % c.n]))
            .count();
        let false_positives = (0..c.probes as u64)
            .filter(|i| filter.contains(&(u64::MAX - i).to_le_bytes()))
            .count();
        let bloom = BloomEmpirical {
            m,
            hash_count: filter.hash_count(),
            items: c.n,
            member_probes: c.probes,
            false_negatives,
            outsider_probes: c.probes,
            false_positives,
            empirical_fp_rate: false_positives as f64 / c.probes as f64,
            expected_fp_rate: filter.expected_fp_rate(c.n),
            all_one_enrollment_identical: bits == rep.symbols,
        };

        let m = report.scheme_m as usize;
        let mut sim = SimulationConfig::sequence(c.n, m, p, 0.0, 0.0, SurjectionSpec::AllOne, c.seed);
        sim.runs = 1;
        sim.group_count = c.probes.div_ceil(c.n).max(20usize.div_ceil(c.n));
        let out = run_verification(&sim)?;
        let hard = |s: &f64| *s <= REJECT_SENTINEL;
        let accepted = out.negative_scores.iter().filter(|s| !hard(s)).count();
        let scheme = SchemeEmpirical {
            m,
            activation_prob: p,
            verification: out.verification,
            positives: out.positive_scores.len(),
            hard_rejected_positives: out.positive_scores.iter().filter(|s| hard(s)).count(),
            negatives: out.negative_scores.len(),
            accepted_negatives: accepted,
            empirical_fp_rate: accepted as f64 / out.negative_scores.len() as f64,
            llr_pfn_at_pfp: out.pfn_at_pfp,
        };
        (Some(bloom), Some(scheme))
    };
    Ok(Artifacts {
        json: Some(json_document(cfg, BloomResult { report, bloom, scheme })?),
        ..Default::default()
    })
}

#[derive(Debug, Serialize)]
struct SchemeSummary {
    output_symbols: usize,
    table: Vec<usize>,
    compactness: f64,
    security: f64,
    verification: f64,
}

#[derive(Debug, Serialize)]
struct ThresholdSummary {
    threshold: usize,
    verification: f64,
}

#[derive(Debug, Serialize)]
struct OptimizeResult {
    identity: SchemeSummary,
    /// Best `1{t >= t*}` surjection (binary alphabets only).
    best_threshold: Option<ThresholdSummary>,
    greedy: Vec<SchemeSummary>,
}

fn summarize(tm: &TypeModel, r: &Surjection, chan: &NoiseChannel) -> Result<SchemeSummary, CliError> {
    let m = scheme_metrics(tm, r, chan)?;
    Ok(SchemeSummary {
        output_symbols: r.output_symbols(),
        table: r.table().to_vec(),
        compactness: m.compactness,
        security: m.security,
        verification: m.verification,
    })
}

fn optimize_surjection(cfg: &ExperimentConfig, c: &OptimizeConfig) -> Result<Artifacts, CliError> {
    let chan = NoiseChannel::symmetric(c.alphabet_size, c.eta0, c.eta1, 0.0)?;
    let tm = type_model(c.alphabet_size, c.p, c.n)?;
    let identity = Surjection::identity(tm.type_count());
    let steps = greedy_chain(&tm, &identity, &chan, &c.symbol_targets)?;
    let greedy = steps
        .iter()
        .map(|s| summarize(&tm, &s.surjection, &chan))
        .collect::<Result<Vec<_>, _>>()?;
    let best_threshold = if c.alphabet_size == 2 {
        let (threshold, verification) = best_threshold(c.p, c.n, &chan)?;
        Some(ThresholdSummary {
            threshold,
            verification,
        })
    } else {
        None
    };
    let table = steps
        .last()
        .map(|s| serde_json::to_string(s.surjection.table()).map(|t| t + "\n"))
        .transpose()?;
    let result = OptimizeResult {
        identity: summarize(&tm, &identity, &chan)?,
        best_threshold,
        greedy,
    };
    Ok(Artifacts {
        json: Some(json_document(cfg, result)?),
        table,
        ..Default::default()
    })
}

/// Regenerates the config echo of an artifact: CSV files carry it on their
/// first line, JSON files under `config`.
pub fn read_echo(text: &str) -> Result<(ExperimentConfig, Format), CliError> {
    if let Some(rest) = text.strip_prefix("# config: ") {
        let line = rest.lines().next().unwrap_or_default();
        return Ok((serde_json::from_str(line)?, Format::Csv));
    }
    let v: serde_json::Value = serde_json::from_str(text)?;
    let cfg = v
        .get("config")
        .ok_or_else(|| CliError::Config("no config echo found".into()))?;
    Ok((serde_json::from_value(cfg.clone())?, Format::Json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Artifacts {
    pub fn get(&self, format: Format) -> Option<&str> {
        match format {
            Format::Csv => self.csv.as_deref(),
            Format::Json => self.json.as_deref(),
        }
    }
}
