//! Second aggregation stage: maps from types onto a smaller alphabet.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::infometrics::{scheme_verification, SchemeDistributions};
use crate::source_model::{binary_joint_xt, binomial_pmf};
use crate::{Error, NoiseChannel, Result, TypeModel};

/// Merges whose `V` differ by less than this are considered tied.
pub const MERGE_TIE_TOL: f64 = 1e-12;

/// A total, surjective map `type index -> output symbol`.
///
/// Serializes as the bare JSON array of output symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Surjection {
    table: Vec<usize>,
    output_symbols: usize,
}

impl TryFrom<Vec<usize>> for Surjection {
    type Error = Error;

    fn try_from(table: Vec<usize>) -> Result<Self> {
        Self::new(table)
    }
}

impl From<Surjection> for Vec<usize> {
    fn from(s: Surjection) -> Self {
        s.table
    }
}

impl Surjection {
    pub fn new(table: Vec<usize>) -> Result<Self> {
        let Some(&max) = table.iter().max() else {
            return Err(Error::InvalidParameter("empty surjection table".into()));
        };
        let mut seen = vec![false; max + 1];
        for &y in &table {
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "output symbol {missing} has no preimage"
            )));
        }
        Ok(Self {
            table,
            output_symbols: max + 1,
        })
    }

    /// `Y = T`.
    pub fn identity(type_count: usize) -> Self {
        assert!(type_count >= 1);
        Self {
            table: (0..type_count).collect(),
            output_symbols: type_count,
        }
    }

    /// Binary output over binary types `t in 0..=n`: `1` iff `t >= threshold`.
    pub fn threshold(n: usize, threshold: usize) -> Result<Self> {
        if threshold < 1 || threshold > n {
            return Err(Error::InvalidParameter(format!(
                "threshold {threshold} outside 1..={n}"
            )));
        }
        Ok(Self {
            table: (0..=n).map(|t| usize::from(t >= threshold)).collect(),
            output_symbols: 2,
        })
    }

    /// `Y = 1` iff at least one enrolled symbol is 1.
    pub fn all_one(n: usize) -> Self {
        Self::threshold(n, 1).expect("n >= 1")
    }

    /// `Y = 1` iff more than half of the enrolled symbols are 1.
    pub fn majority(n: usize) -> Self {
        Self::threshold(n, n / 2 + 1).expect("n >= 1")
    }

    /// Threshold on the number of nonzero symbols, for any alphabet.
    pub fn nonzero_threshold(tm: &TypeModel, threshold: usize) -> Result<Self> {
        let n = tm.group_size();
        if threshold < 1 || threshold > n {
            return Err(Error::InvalidParameter(format!(
                "threshold {threshold} outside 1..={n}"
            )));
        }
        let table = tm
            .types()
            .iter()
            .map(|c| usize::from(n - c[0] as usize >= threshold))
            .collect();
        Self::new(table)
    }

    pub fn apply(&self, type_index: usize) -> usize {
        self.table[type_index]
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn type_count(&self) -> usize {
        self.table.len()
    }

    pub fn output_symbols(&self) -> usize {
        self.output_symbols
    }

    /// Fold output symbol `b` into `a` and close the gap left by `b`.
    pub fn merge(&self, a: usize, b: usize) -> Self {
        let (a, b) = (a.min(b), a.max(b));
        assert!(a != b && b < self.output_symbols);
        let table = self
            .table
            .iter()
            .map(|&y| match y.cmp(&b) {
                std::cmp::Ordering::Less => y,
                std::cmp::Ordering::Equal => a,
                std::cmp::Ordering::Greater => y - 1,
            })
            .collect();
        Self {
            table,
            output_symbols: self.output_symbols - 1,
        }
    }
}

/// Scan every threshold surjection on binary types and keep the one with
/// the largest `V`, ties going to the smallest threshold.
pub fn best_threshold(p: f64, n: usize, chan: &NoiseChannel) -> Result<(usize, f64)> {
    let tm = TypeModel::binary(p, n)?;
    let mut best = (0, f64::NEG_INFINITY);
    for t in 1..=n {
        let v = scheme_verification(&tm, &Surjection::threshold(n, t)?, chan)?;
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

fn merged_joint(pxy: &[Vec<f64>], a: usize, b: usize) -> Vec<Vec<f64>> {
    pxy.iter()
        .map(|row| {
            let mut out = Vec::with_capacity(row.len() - 1);
            for (y, &v) in row.iter().enumerate() {
                match y {
                    _ if y == b => {}
                    _ if y == a => out.push(v + row[b]),
                    _ => out.push(v),
                }
            }
            out
        })
        .collect()
}

/// Greedy symbol merging: repeatedly fold the pair of output symbols whose
/// merge loses the least `V`, until `target_size` symbols remain.
pub fn greedy_merge(
    tm: &TypeModel,
    start: &Surjection,
    chan: &NoiseChannel,
    target_size: usize,
) -> Result<Surjection> {
    let mut chain = greedy_chain(tm, start, chan, &[target_size])?;
    Ok(chain.pop().expect("one target").surjection)
}

/// A surjection reached by [`greedy_chain`] and its `V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeStep {
    pub output_symbols: usize,
    pub surjection: Surjection,
    pub verification: f64,
}

/// Run the greedy merger once and snapshot the surjection at every size in
/// `targets`; the result is ordered from the largest to the smallest size.
pub fn greedy_chain(
    tm: &TypeModel,
    start: &Surjection,
    chan: &NoiseChannel,
    targets: &[usize],
) -> Result<Vec<MergeStep>> {
    if start.type_count() != tm.type_count() {
        return Err(Error::DimensionMismatch {
            what: "surjection domain vs type space",
            expected: tm.type_count(),
            got: start.type_count(),
        });
    }
    let mut targets: Vec<usize> = targets.to_vec();
    targets.sort_unstable_by(|a, b| b.cmp(a));
    targets.dedup();
    if let Some(&smallest) = targets.last() {
        if smallest < 2 {
            return Err(Error::InvalidParameter(format!(
                "target size {smallest} < 2"
            )));
        }
    }
    if let Some(&largest) = targets.first() {
        if largest > start.output_symbols() {
            return Err(Error::InvalidParameter(format!(
                "target size {largest} exceeds current size {}",
                start.output_symbols()
            )));
        }
    }

    let mut current = start.clone();
    let mut dist = SchemeDistributions::build(tm, &current, chan)?;
    let mut v_current = dist.verification()?;
    let mut out = Vec::with_capacity(targets.len());

    for target in targets {
        while current.output_symbols() > target {
            let k = current.output_symbols();
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                .collect();
            let scored: Vec<Result<(f64, SchemeDistributions)>> = pairs
                .par_iter()
                .map(|&(a, b)| {
                    let d = SchemeDistributions::from_joint(merged_joint(&dist.pxy, a, b), chan)?;
                    Ok((d.verification()?, d))
                })
                .collect();
            let mut best: Option<(usize, f64, SchemeDistributions)> = None;
            for (i, s) in scored.into_iter().enumerate() {
                let (v, d) = s?;
                let better = match &best {
                    None => true,
                    Some((_, bv, _)) => v > bv + MERGE_TIE_TOL,
                };
                if better {
                    best = Some((i, v, d));
                }
            }
            let (i, v, d) = best.expect("at least one pair");
            let (a, b) = pairs[i];
            current = current.merge(a, b);
            dist = d;
            v_current = v;
        }
        out.push(MergeStep {
            output_symbols: current.output_symbols(),
            surjection: current.clone(),
            verification: v_current,
        });
    }
    Ok(out)
}

/// Randomized binary surjection: `P(r(t) = 1) = theta[t]` over binary types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticSurjection {
    theta: Vec<f64>,
}

impl ProbabilisticSurjection {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidParameter("theta needs n + 1 >= 2 entries".into()));
        }
        if let Some(bad) = theta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("theta entry {bad} outside [0, 1]")));
        }
        Ok(Self { theta })
    }

    /// Indicator vector of a deterministic binary surjection.
    pub fn from_surjection(r: &Surjection) -> Result<Self> {
        if r.output_symbols() != 2 {
            return Err(Error::InvalidParameter("need a binary output alphabet".into()));
        }
        Self::new(r.table().iter().map(|&y| y as f64).collect())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn group_size(&self) -> usize {
        self.theta.len() - 1
    }

    /// `P(X1 = x, Y = y)`.
    pub fn joint(&self, p: f64) -> Vec<Vec<f64>> {
        let n = self.group_size();
        let jt = binary_joint_xt(p, n);
        jt.iter()
            .map(|row| {
                let one: f64 = row.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
                let all: f64 = row.iter().sum();
                vec![all - one, one]
            })
            .collect()
    }

    /// Noiseless `V`.
    pub fn verification(&self, p: f64) -> Result<f64> {
        SchemeDistributions::from_joint(self.joint(p), &NoiseChannel::noiseless(2))?.verification()
    }
}

/// `d V / d theta_t` of a probabilistic binary surjection, noiseless.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    /// Per-type derivative; `+-inf` where the derivative diverges.
    pub gradient: Vec<f64>,
    /// `K1(t) = P(T = t) * delta`.
    pub k1: Vec<f64>,
    pub k2: f64,
    /// `h'(P(Y=1|X=0)) - h'(P(Y=1|X=1))`.
    pub delta: f64,
    /// Some `h'` argument sat at 0 or 1.
    pub divergent: bool,
}

/// `h'(x) = ln((1 - x) / x)`, infinite at the endpoints.
fn dh(x: f64) -> f64 {
    if x <= 0.0 {
        f64::INFINITY
    } else if x >= 1.0 {
        f64::NEG_INFINITY
    } else {
        ((1.0 - x) / x).ln()
    }
}

/// Analytic gradient `n^-1 K1 (t - n K2)` of noiseless `V` w.r.t. `theta`.
pub fn surjection_gradient(
    p: f64,
    n: usize,
    theta: &ProbabilisticSurjection,
) -> Result<GradientReport> {
    if theta.group_size() != n {
        return Err(Error::DimensionMismatch {
            what: "theta length vs n + 1",
            expected: n + 1,
            got: theta.theta().len(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    let pt = binomial_pmf(n, p);
    let nf = n as f64;
    let th = theta.theta();
    let mut py1 = 0.0;
    let mut a0 = 0.0;
    let mut a1 = 0.0;
    for t in 0..=n {
        let tf = t as f64;
        py1 += pt[t] * th[t];
        a0 += pt[t] * (nf - tf) / (nf * (1.0 - p)) * th[t];
        a1 += pt[t] * tf / (nf * p) * th[t];
    }
    let (hy, h0, h1) = (dh(py1), dh(a0.min(1.0)), dh(a1.min(1.0)));
    let delta = h0 - h1;
    let k2 = (h0 - hy) / delta;
    let k1: Vec<f64> = pt.iter().map(|&w| w * delta).collect();
    let divergent = !(hy.is_finite() && h0.is_finite() && h1.is_finite());

    let gradient = if divergent {
        // expand term by term so a zero weight never multiplies an infinity
        (0..=n)
            .map(|t| {
                let tf = t as f64;
                let mut acc = hy;
                if t > 0 {
                    acc -= tf / nf * h1;
                }
                if t < n {
                    acc -= (nf - tf) / nf * h0;
                }
                pt[t] * acc
            })
            .collect()
    } else {
        (0..=n).map(|t| k1[t] * (t as f64 - nf * k2) / nf).collect()
    };
    Ok(GradientReport {
        gradient,
        k1,
        k2,
        delta,
        divergent,
    })
}
