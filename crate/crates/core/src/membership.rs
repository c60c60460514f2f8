//! Enrollment, scoring and the Monte-Carlo verification protocol.
//!
//! A group of `n` sequences is folded index-wise into one representation
//! (type, then surjection). A query is scored by the log-likelihood ratio
//! `S = sum_i ln(P1(q_i, y_i) / P0(q_i, y_i))` and accepted when `S >= tau`.
//! `tau` is set on negative scores to hit a target false-positive rate and
//! the false-negative rate at that operating point is reported.

use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{correlated_with, random_unit_vector, InducedChannel, Projector};
use crate::surjection::greedy_merge;
use crate::{
    Error, NoiseChannel, Result, SchemeDistributions, SourceModel, Surjection, TypeModel,
    SCHEMA_VERSION,
};

/// Stand-in for `-inf` scores so that they sort and serialize.
pub const REJECT_SENTINEL: f64 = -1e300;
pub const HISTOGRAM_BINS: usize = 256;

/// Aggregated representation of one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRepresentation {
    pub group_id: u64,
    pub symbols: Vec<usize>,
    pub output_symbols: usize,
}

impl GroupRepresentation {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Indices `range` of the representation.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            group_id: self.group_id,
            symbols: self.symbols[range].to_vec(),
            output_symbols: self.output_symbols,
        }
    }
}

/// `Y(i) = r(type(X_1(i), ..., X_n(i)))`.
pub fn enroll(sequences: &[Vec<u8>], tm: &TypeModel, r: &Surjection) -> Result<GroupRepresentation> {
    enroll_as(sequences, tm, r, 0)
}

pub fn enroll_as(
    sequences: &[Vec<u8>],
    tm: &TypeModel,
    r: &Surjection,
    group_id: u64,
) -> Result<GroupRepresentation> {
    let n = tm.group_size();
    if sequences.len() != n {
        return Err(Error::DimensionMismatch {
            what: "enrolled sequences vs group size",
            expected: n,
            got: sequences.len(),
        });
    }
    if r.type_count() != tm.type_count() {
        return Err(Error::DimensionMismatch {
            what: "surjection domain vs type space",
            expected: tm.type_count(),
            got: r.type_count(),
        });
    }
    let m = sequences[0].len();
    let k = tm.alphabet_size();
    for s in sequences {
        if s.len() != m {
            return Err(Error::DimensionMismatch {
                what: "enrolled sequence length",
                expected: m,
                got: s.len(),
            });
        }
        if let Some(&bad) = s.iter().find(|&&x| x as usize >= k) {
            return Err(Error::InvalidParameter(format!(
                "symbol {bad} outside alphabet of size {k}"
            )));
        }
    }
    let mut symbols = Vec::with_capacity(m);
    let mut counts = vec![0u32; k];
    for i in 0..m {
        counts.iter_mut().for_each(|c| *c = 0);
        for s in sequences {
            counts[s[i] as usize] += 1;
        }
        // binary types are indexed by their number of ones
        let t = if k == 2 {
            counts[1] as usize
        } else {
            tm.type_index(&counts).expect("every count vector summing to n is a type")
        };
        symbols.push(r.apply(t));
    }
    Ok(GroupRepresentation {
        group_id,
        symbols,
        output_symbols: r.output_symbols(),
    })
}

/// Per-cell log-likelihood ratios `llr[q][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    llr: Vec<Vec<f64>>,
}

impl Scorer {
    pub fn new(dist: &SchemeDistributions) -> Self {
        let llr = dist
            .p1
            .iter()
            .enumerate()
            .map(|(q, row)| {
                (0..row.len())
                    .map(|y| {
                        if row[y] > 0.0 {
                            dist.log_ratio(q, y).expect("P1 > 0 implies positive marginals")
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        Self { llr }
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.llr
    }

    /// `sum_i llr[q_i][y_i]`; `-inf` if any cell is impossible under H1.
    pub fn score(&self, q: &[u8], rep: &GroupRepresentation) -> Result<f64> {
        if q.len() != rep.len() {
            return Err(Error::DimensionMismatch {
                what: "query length vs representation length",
                expected: rep.len(),
                got: q.len(),
            });
        }
        if rep.output_symbols != self.llr[0].len() {
            return Err(Error::DimensionMismatch {
                what: "representation alphabet vs scorer",
                expected: self.llr[0].len(),
                got: rep.output_symbols,
            });
        }
        let mut s = 0.0;
        for (&qi, &yi) in q.iter().zip(&rep.symbols) {
            let row = self.llr.get(qi as usize).ok_or_else(|| {
                Error::InvalidParameter(format!("query symbol {qi} outside alphabet"))
            })?;
            s += row[yi];
        }
        Ok(s)
    }
}

/// `-inf` mapped to [`REJECT_SENTINEL`].
pub fn finite_score(s: f64) -> f64 {
    if s == f64::NEG_INFINITY {
        REJECT_SENTINEL
    } else {
        s
    }
}

/// Everything needed to enroll and score under one model.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub types: TypeModel,
    pub surjection: Surjection,
    pub channel: NoiseChannel,
    pub distributions: SchemeDistributions,
    pub scorer: Scorer,
}

impl Scheme {
    pub fn new(types: TypeModel, surjection: Surjection, channel: NoiseChannel) -> Result<Self> {
        let distributions = SchemeDistributions::build(&types, &surjection, &channel)?;
        let scorer = Scorer::new(&distributions);
        Ok(Self {
            types,
            surjection,
            channel,
            distributions,
            scorer,
        })
    }

    pub fn verification(&self) -> Result<f64> {
        self.distributions.verification()
    }
}

/// How the aggregation surjection is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurjectionSpec {
    Identity,
    AllOne,
    Majority,
    /// Greedy merging from the identity down to `symbols` outputs, driven by
    /// the scheme's own channel.
    Greedy { symbols: usize },
    Table { table: Vec<usize> },
}

impl SurjectionSpec {
    pub fn resolve(&self, tm: &TypeModel, chan: &NoiseChannel) -> Result<Surjection> {
        let n = tm.group_size();
        let binary_only = |name: &str| -> Result<()> {
            if tm.alphabet_size() != 2 {
                return Err(Error::InvalidParameter(format!(
                    "{name} surjection needs a binary alphabet"
                )));
            }
            Ok(())
        };
        match self {
            Self::Identity => Ok(Surjection::identity(tm.type_count())),
            Self::AllOne => {
                if tm.alphabet_size() == 2 {
                    Ok(Surjection::all_one(n))
                } else {
                    Surjection::nonzero_threshold(tm, 1)
                }
            }
            Self::Majority => {
                binary_only("majority")?;
                Ok(Surjection::majority(n))
            }
            Self::Greedy { symbols } => {
                greedy_merge(tm, &Surjection::identity(tm.type_count()), chan, *symbols)
            }
            Self::Table { table } => {
                let r = Surjection::new(table.clone())?;
                if r.type_count() != tm.type_count() {
                    return Err(Error::DimensionMismatch {
                        what: "surjection table vs type space",
                        expected: tm.type_count(),
                        got: r.type_count(),
                    });
                }
                Ok(r)
            }
        }
    }
}

impl FromStr for SurjectionSpec {
    type Err = Error;

    /// `identity`, `all1`, `majority` or `greedy:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "all1" | "all-1" | "all_one" => Ok(Self::AllOne),
            "majority" => Ok(Self::Majority),
            _ => {
                if let Some(k) = s.strip_prefix("greedy:") {
                    let symbols = k.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad greedy target {k:?}"))
                    })?;
                    return Ok(Self::Greedy { symbols });
                }
                Err(Error::InvalidParameter(format!("unknown surjection {s:?}")))
            }
        }
    }
}

/// Where sequences come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QueryModel {
    /// i.i.d. symbols, queries through a symmetric channel.
    Sequence {
        #[serde(default = "default_alphabet")]
        alphabet_size: usize,
        p: f64,
        eta0: f64,
        eta1: f64,
    },
    /// Random unit templates embedded by random projections; positives are
    /// queries at correlation `c` with an enrolled template.
    Vector {
        dim: usize,
        c: f64,
        lambda_x: f64,
        lambda_q: f64,
    },
}

fn default_alphabet() -> usize {
    2
}

fn default_group_count() -> usize {
    10
}

fn default_runs() -> usize {
    20
}

fn default_pfp() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub m: usize,
    pub model: QueryModel,
    pub surjection: SurjectionSpec,
    /// Groups drawn per run; each contributes `n` positives and `n` negatives.
    #[serde(default = "default_group_count")]
    pub group_count: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_pfp")]
    pub operating_pfp: f64,
}

impl SimulationConfig {
    pub fn sequence(n: usize, m: usize, p: f64, eta0: f64, eta1: f64, surjection: SurjectionSpec, seed: u64) -> Self {
        Self {
            n,
            m,
            model: QueryModel::Sequence {
                alphabet_size: 2,
                p,
                eta0,
                eta1,
            },
            surjection,
            group_count: default_group_count(),
            runs: default_runs(),
            seed,
            operating_pfp: default_pfp(),
        }
    }

    pub fn vector(
        n: usize,
        m: usize,
        dim: usize,
        c: f64,
        lambda_x: f64,
        lambda_q: f64,
        surjection: SurjectionSpec,
        seed: u64,
    ) -> Self {
        Self {
            n,
            m,
            model: QueryModel::Vector {
                dim,
                c,
                lambda_x,
                lambda_q,
            },
            surjection,
            group_count: default_group_count(),
            runs: default_runs(),
            seed,
            operating_pfp: default_pfp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.runs == 0 || self.group_count == 0 {
            return Err(Error::InvalidParameter(
                "n, m, runs and group_count must all be >= 1".into(),
            ));
        }
        if !(self.operating_pfp > 0.0 && self.operating_pfp < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "operating P_fp = {} outside (0, 1)",
                self.operating_pfp
            )));
        }
        if let QueryModel::Vector { dim, c, .. } = self.model {
            if dim < 2 {
                return Err(Error::InvalidParameter(format!("d = {dim} < 2")));
            }
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::InvalidParameter(format!("c = {c} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    /// The model the scorer assumes.
    pub fn scheme(&self) -> Result<Scheme> {
        self.validate()?;
        let (tm, chan) = match self.model {
            QueryModel::Sequence {
                alphabet_size,
                p,
                eta0,
                eta1,
            } => {
                let chan = NoiseChannel::symmetric(alphabet_size, eta0, eta1, 0.0)?;
                let tm = if alphabet_size == 2 {
                    TypeModel::binary(p, self.n)?
                } else {
                    TypeModel::new(SourceModel::new(alphabet_size, p)?, self.n)?
                };
                (tm, chan)
            }
            QueryModel::Vector {
                c,
                lambda_x,
                lambda_q,
                ..
            } => {
                let induced = InducedChannel::new(lambda_x, lambda_q, c)?;
                (TypeModel::binary(induced.p, self.n)?, induced.channel()?)
            }
        };
        let r = self.surjection.resolve(&tm, &chan)?;
        Scheme::new(tm, r, chan)
    }

    pub fn negatives_per_run(&self) -> usize {
        self.n * self.group_count
    }
}

/// Synthetic stand-ins for datasets of increasing difficulty: template
/// correlation and dimension of genuine pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Easy,
    Medium,
    Hard,
}

impl Preset {
    pub fn correlation(&self) -> f64 {
        match self {
            Self::Easy => 0.83,
            Self::Medium => 0.78,
            Self::Hard => 0.68,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Easy => 128,
            Self::Medium => 256,
            Self::Hard => 512,
        }
    }

    /// Default sequence length, `8 d`.
    pub fn seq_length(&self) -> usize {
        8 * self.dim()
    }

    /// Dense vector-mode configuration (`lambda_x = lambda_q = 0`).
    pub fn config(&self, n: usize, m: Option<usize>, surjection: SurjectionSpec, seed: u64) -> SimulationConfig {
        SimulationConfig::vector(
            n,
            m.unwrap_or_else(|| self.seq_length()),
            self.dim(),
            self.correlation(),
            0.0,
            0.0,
            surjection,
            seed,
        )
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Self::Easy),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            _ => Err(Error::InvalidParameter(format!("unknown preset {s:?}"))),
        }
    }
}

/// Fixed-layout score histograms over the pooled finite scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistograms {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub positive: Vec<u64>,
    pub negative: Vec<u64>,
    pub positive_rejected: u64,
    pub negative_rejected: u64,
}

impl ScoreHistograms {
    pub fn new(positive: &[f64], negative: &[f64]) -> Self {
        let finite = || {
            positive
                .iter()
                .chain(negative)
                .copied()
                .filter(|&s| s > REJECT_SENTINEL)
        };
        let lo = finite().fold(f64::INFINITY, f64::min);
        let hi = finite().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
        let fill = |scores: &[f64]| {
            let mut bins = vec![0u64; HISTOGRAM_BINS];
            let mut rejected = 0;
            for &s in scores {
                if s <= REJECT_SENTINEL {
                    rejected += 1;
                    continue;
                }
                let b = (((s - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                bins[b] += 1;
            }
            (bins, rejected)
        };
        let (pos, pr) = fill(positive);
        let (neg, nr) = fill(negative);
        Self {
            lo,
            hi,
            bins: HISTOGRAM_BINS,
            positive: pos,
            negative: neg,
            positive_rejected: pr,
            negative_rejected: nr,
        }
    }
}

/// Operating point at a target false-positive rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub tau: f64,
    /// Probability of accepting a score exactly equal to `tau`.
    pub tie_accept: f64,
    pub pfn: f64,
    /// `P_fp` of the randomized test on the negatives it was fitted on.
    pub achieved_pfp: f64,
}

/// Linearly interpolated `1 - pfp` quantile of the negatives as `tau`;
/// scores equal to `tau` are accepted with the probability that brings the
/// empirical `P_fp` to `pfp` (which only matters for atoms in the score law).
pub fn operating_point(positive: &[f64], negative: &[f64], pfp: f64) -> Result<OperatingPoint> {
    if !(pfp > 0.0 && pfp < 1.0) {
        return Err(Error::InvalidParameter(format!("P_fp = {pfp} outside (0, 1)")));
    }
    let needed = (1.0 / pfp).ceil() as usize;
    if negative.len() < needed {
        return Err(Error::InsufficientNegatives {
            needed,
            got: negative.len(),
            pfp,
        });
    }
    if positive.is_empty() {
        return Err(Error::InvalidParameter("no positive scores".into()));
    }
    let mut neg: Vec<f64> = negative.iter().copied().map(finite_score).collect();
    neg.sort_by(f64::total_cmp);
    let h = (neg.len() - 1) as f64 * (1.0 - pfp);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let tau = neg[lo] + (h - lo as f64) * (neg[hi] - neg[lo]);

    let frac = |scores: &[f64], pred: &dyn Fn(f64) -> bool| {
        scores.iter().filter(|&&s| pred(finite_score(s))).count() as f64 / scores.len() as f64
    };
    let neg_gt = frac(&neg, &|s| s > tau);
    let neg_eq = frac(&neg, &|s| s == tau);
    let tie_accept = if neg_eq > 0.0 {
        ((pfp - neg_gt) / neg_eq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos_lt = frac(positive, &|s| s < tau);
    let pos_eq = frac(positive, &|s| s == tau);
    Ok(OperatingPoint {
        tau,
        tie_accept,
        pfn: pos_lt + (1.0 - tie_accept) * pos_eq,
        achieved_pfp: neg_gt + tie_accept * neg_eq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub schema_version: u32,
    pub config: SimulationConfig,
    /// `V` of the scoring model, nats per symbol.
    pub verification: f64,
    pub positive_scores: Vec<f64>,
    pub negative_scores: Vec<f64>,
    pub operating_pfp: f64,
    pub threshold_tau: f64,
    pub tie_accept: f64,
    pub pfn_at_pfp: f64,
    pub achieved_pfp: f64,
    /// `P_fn` of each run at its own threshold.
    pub per_run_pfn: Vec<Option<f64>>,
    pub mean_run_pfn: Option<f64>,
    pub histograms: ScoreHistograms,
}

/// Raw material of one run, kept for export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTemplates {
    pub enrolled: Vec<Vec<f64>>,
    pub queries: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

struct RunScores {
    positive: Vec<f64>,
    negative: Vec<f64>,
}

fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn sample_symbol<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u8
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

struct SequenceSampler {
    source: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl SequenceSampler {
    fn new(scheme: &Scheme) -> Self {
        let k = scheme.channel.alphabet_size();
        Self {
            source: cumulative(&scheme.types.source().symbol_pmf()),
            rows: (0..k).map(|x| cumulative(scheme.channel.row(x))).collect(),
        }
    }

    fn source_seq<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<u8> {
        (0..m).map(|_| sample_symbol(&self.source, rng)).collect()
    }

    fn through_channel<R: Rng + ?Sized>(&self, x: &[u8], rng: &mut R) -> Vec<u8> {
        x.iter()
            .map(|&s| sample_symbol(&self.rows[s as usize], rng))
            .collect()
    }
}

fn simulate_run(
    cfg: &SimulationConfig,
    scheme: &Scheme,
    run: usize,
    keep: bool,
) -> Result<(RunScores, RunTemplates)> {
    let mut rng = run_rng(cfg.seed, run);
    let (n, m) = (cfg.n, cfg.m);
    let mut positive = Vec::with_capacity(n * cfg.group_count);
    let mut negative = Vec::with_capacity(n * cfg.group_count);
    let mut kept = RunTemplates::default();
    match cfg.model {
        QueryModel::Sequence { .. } => {
            let sampler = SequenceSampler::new(scheme);
            for g in 0..cfg.group_count {
                let enrolled: Vec<Vec<u8>> =
                    (0..n).map(|_| sampler.source_seq(m, &mut rng)).collect();
                let rep = enroll_as(&enrolled, &scheme.types, &scheme.surjection, g as u64)?;
                for x in &enrolled {
                    let q = sampler.through_channel(x, &mut rng);
                    positive.push(finite_score(scheme.scorer.score(&q, &rep)?));
                }
                for _ in 0..n {
                    let x0 = sampler.source_seq(m, &mut rng);
                    let q = sampler.through_channel(&x0, &mut rng);
                    negative.push(finite_score(scheme.scorer.score(&q, &rep)?));
                }
            }
        }
        QueryModel::Vector {
            dim,
            c,
            lambda_x,
            lambda_q,
        } => {
            let projector = Projector::new(dim, rng.random());
            for g in 0..cfg.group_count {
                let enrolled: Vec<Vec<f64>> =
                    (0..n).map(|_| random_unit_vector(dim, &mut rng)).collect();
                let queries: Vec<Vec<f64>> = enrolled
                    .iter()
                    .map(|x| correlated_with(x, c, &mut rng))
                    .collect();
                let negatives: Vec<Vec<f64>> =
                    (0..n).map(|_| random_unit_vector(dim, &mut rng)).collect();
                let all: Vec<&[f64]> = enrolled
                    .iter()
                    .chain(&queries)
                    .chain(&negatives)
                    .map(Vec::as_slice)
                    .collect();
                let thresholds: Vec<f64> = (0..3 * n)
                    .map(|i| if i < n { lambda_x } else { lambda_q })
                    .collect();
                let mut bits = projector.embed_many(&all, &thresholds, m)?;
                let neg_bits = bits.split_off(2 * n);
                let q_bits = bits.split_off(n);
                let rep = enroll_as(&bits, &scheme.types, &scheme.surjection, g as u64)?;
                for q in q_bits.iter() {
                    positive.push(finite_score(scheme.scorer.score(q, &rep)?));
                }
                for q in neg_bits.iter() {
                    negative.push(finite_score(scheme.scorer.score(q, &rep)?));
                }
                if keep {
                    kept.enrolled.extend(enrolled);
                    kept.queries.extend(queries);
                    kept.negatives.extend(negatives);
                }
            }
        }
    }
    Ok((RunScores { positive, negative }, kept))
}

/// Templates drawn in run `run` of a vector-mode simulation (empty in
/// sequence mode).
pub fn run_templates(cfg: &SimulationConfig, run: usize) -> Result<RunTemplates> {
    let scheme = cfg.scheme()?;
    Ok(simulate_run(cfg, &scheme, run, true)?.1)
}

/// The full protocol: `runs` independent runs, scores pooled in run order.
pub fn run_verification(cfg: &SimulationConfig) -> Result<VerificationOutcome> {
    let scheme = cfg.scheme()?;
    let verification = scheme.verification()?;
    let runs: Vec<Result<RunScores>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| simulate_run(cfg, &scheme, run, false).map(|r| r.0))
        .collect();
    let runs: Vec<RunScores> = runs.into_iter().collect::<Result<_>>()?;

    let per_run_pfn: Vec<Option<f64>> = runs
        .iter()
        .map(|r| {
            operating_point(&r.positive, &r.negative, cfg.operating_pfp)
                .ok()
                .map(|op| op.pfn)
        })
        .collect();
    let available: Vec<f64> = per_run_pfn.iter().flatten().copied().collect();
    let mean_run_pfn =
        (!available.is_empty()).then(|| available.iter().sum::<f64>() / available.len() as f64);

    let mut positive_scores = Vec::new();
    let mut negative_scores = Vec::new();
    for r in runs {
        positive_scores.extend(r.positive);
        negative_scores.extend(r.negative);
    }
    let op = operating_point(&positive_scores, &negative_scores, cfg.operating_pfp)?;
    let histograms = ScoreHistograms::new(&positive_scores, &negative_scores);
    Ok(VerificationOutcome {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        verification,
        positive_scores,
        negative_scores,
        operating_pfp: cfg.operating_pfp,
        threshold_tau: op.tau,
        tie_accept: op.tie_accept,
        pfn_at_pfp: op.pfn,
        achieved_pfp: op.achieved_pfp,
        per_run_pfn,
        mean_run_pfn,
        histograms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPoint {
    pub m: usize,
    /// Positive-score threshold achieving the target recall.
    pub tau: f64,
    pub pfp: f64,
    /// `-ln(P_fp) / m`.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub points: Vec<ExponentPoint>,
    /// Grid lengths whose `P_fp` estimate was zero.
    pub excluded: Vec<usize>,
    /// Least-squares slope of `-ln P_fp` against `m`.
    pub slope: f64,
    pub intercept: f64,
    /// The bound `V` on the exponent.
    pub verification: f64,
}

/// Estimate the false-positive error exponent at fixed recall.
///
/// For each `m`, enrolled groups and their positive queries are simulated,
/// `tau` is the `1 - recall` quantile of the positive scores, and
/// `P_fp(tau) = E_H0[1{S >= tau}] = E_H1[exp(-S) 1{S >= tau}]` is estimated
/// from the positives alone (the LLR is the log of the H1/H0 likelihood
/// ratio of the pair `(Q, Y)`), which reaches rates far below `1 / samples`.
/// Sequence mode only.
pub fn empirical_exponent(
    cfg: &SimulationConfig,
    m_grid: &[usize],
    samples: usize,
    recall: f64,
) -> Result<ExponentReport> {
    if !matches!(cfg.model, QueryModel::Sequence { .. }) {
        return Err(Error::InvalidParameter(
            "the exponent estimator needs the sequence model".into(),
        ));
    }
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("m grid must be non-empty and increasing".into()));
    }
    if !(recall > 0.0 && recall < 1.0) {
        return Err(Error::InvalidParameter(format!("recall {recall} outside (0, 1)")));
    }
    let scheme = cfg.scheme()?;
    let verification = scheme.verification()?;
    let sampler = SequenceSampler::new(&scheme);
    let groups = samples.div_ceil(cfg.n).max(1);

    let per_m: Vec<Result<Option<ExponentPoint>>> = m_grid
        .par_iter()
        .enumerate()
        .map(|(slot, &m)| {
            let mut rng = run_rng(cfg.seed, slot);
            let mut scores = Vec::with_capacity(groups * cfg.n);
            for g in 0..groups {
                let enrolled: Vec<Vec<u8>> =
                    (0..cfg.n).map(|_| sampler.source_seq(m, &mut rng)).collect();
                let rep = enroll_as(&enrolled, &scheme.types, &scheme.surjection, g as u64)?;
                for x in &enrolled {
                    let q = sampler.through_channel(x, &mut rng);
                    scores.push(scheme.scorer.score(&q, &rep)?);
                }
            }
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let idx = (((1.0 - recall) * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
            let tau = sorted[idx];
            let pfp = scores
                .iter()
                .filter(|&&s| s >= tau)
                .map(|&s| (-s).exp())
                .sum::<f64>()
                / scores.len() as f64;
            if pfp > 0.0 {
                Ok(Some(ExponentPoint {
                    m,
                    tau,
                    pfp: pfp.min(1.0),
                    exponent: -pfp.min(1.0).ln() / m as f64,
                }))
            } else {
                warn!("P_fp estimate is zero at m = {m}; excluded from the fit");
                Ok(None)
            }
        })
        .collect();

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (&m, r) in m_grid.iter().zip(per_m) {
        match r? {
            Some(p) => points.push(p),
            None => excluded.push(m),
        }
    }
    let (slope, intercept) = match points.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (points[0].exponent, 0.0),
        _ => {
            let xs: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
            let ys: Vec<f64> = points.iter().map(|p| -p.pfp.ln()).collect();
            let k = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / k;
            let my = ys.iter().sum::<f64>() / k;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let slope = sxy / sxx;
            (slope, my - slope * mx)
        }
    };
    Ok(ExponentReport {
        points,
        excluded,
        slope,
        intercept,
        verification,
    })
}
