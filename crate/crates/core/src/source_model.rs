//! Symbol source and the first aggregation stage (types).
//!
//! Every enrolled symbol is drawn i.i.d. with `P(X = 0) = 1 - p(|X| - 1)` and
//! `P(X = s) = p` for `s != 0`. At each index the `n` enrolled symbols are
//! summarized by their type, the count vector over the alphabet.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the number of enumerated types.
pub const DEFAULT_TYPE_CAP: u128 = 1_000_000;

const PROB_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    alphabet_size: usize,
    activation_prob: f64,
}

impl SourceModel {
    /// Source over `alphabet_size` symbols with `p` in `(0, 1/|X|]`.
    pub fn new(alphabet_size: usize, activation_prob: f64) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "alphabet size must be >= 2, got {alphabet_size}"
            )));
        }
        let upper = 1.0 / alphabet_size as f64;
        if !(activation_prob > 0.0 && activation_prob <= upper + PROB_SLACK) {
            return Err(Error::InvalidParameter(format!(
                "activation probability {activation_prob} outside (0, {upper}]"
            )));
        }
        Ok(Self {
            alphabet_size,
            activation_prob: activation_prob.min(upper),
        })
    }

    pub fn binary(activation_prob: f64) -> Result<Self> {
        Self::new(2, activation_prob)
    }

    /// Binary source with any `p` in `(0, 1)`.
    ///
    /// The regular constructor keeps symbol `0` the most likely one. A
    /// threshold embedding swept over negative thresholds produces `p > 1/2`,
    /// which is still a perfectly valid Bernoulli source for the metrics.
    pub fn binary_unconstrained(activation_prob: f64) -> Result<Self> {
        if !(activation_prob > 0.0 && activation_prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "activation probability {activation_prob} outside (0, 1)"
            )));
        }
        Ok(Self {
            alphabet_size: 2,
            activation_prob,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn activation_prob(&self) -> f64 {
        self.activation_prob
    }

    pub fn zero_prob(&self) -> f64 {
        1.0 - self.activation_prob * (self.alphabet_size - 1) as f64
    }

    /// `P(X = s)` for every symbol.
    pub fn symbol_pmf(&self) -> Vec<f64> {
        let mut pmf = vec![self.activation_prob; self.alphabet_size];
        pmf[0] = self.zero_prob();
        pmf
    }

    pub fn entropy(&self) -> f64 {
        crate::infometrics::entropy(&self.symbol_pmf())
    }
}

/// Number of types, `binomial(n + |X| - 1, |X| - 1)`, saturating at `u128::MAX`.
pub fn type_count(alphabet_size: usize, n: usize) -> u128 {
    let k = alphabet_size.saturating_sub(1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n + i) / i stays integral at every step
        match acc.checked_mul(n as u128 + i) {
            Some(v) => acc = v / i,
            None => return u128::MAX,
        }
    }
    acc
}

pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial(n, p) pmf evaluated in log space.
pub(crate) fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let lf = ln_factorials(n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|t| {
            let ln = lf[n] - lf[t] - lf[n - t] + t as f64 * lp + (n - t) as f64 * lq;
            ln.exp()
        })
        .collect()
}

/// `P(X1 = x, T = t)` for a binary source, rows `x in {0, 1}`, columns `t in 0..=n`.
pub fn binary_joint_xt(p: f64, n: usize) -> [Vec<f64>; 2] {
    assert!(n >= 1, "group size must be >= 1");
    let rest = binomial_pmf(n - 1, p);
    let mut zero = vec![0.0; n + 1];
    let mut one = vec![0.0; n + 1];
    for (t, &b) in rest.iter().enumerate() {
        zero[t] = (1.0 - p) * b;
        one[t + 1] = p * b;
    }
    [zero, one]
}

/// The type space of `n` i.i.d. symbols together with its law and the joint
/// law of `(X1, T)`.
#[derive(Debug, Clone)]
pub struct TypeModel {
    source: SourceModel,
    group_size: usize,
    types: Vec<Vec<u32>>,
    pmf: Vec<f64>,
    joint_xt: Vec<Vec<f64>>,
    index: HashMap<Vec<u32>, usize>,
}

impl TypeModel {
    pub fn new(source: SourceModel, group_size: usize) -> Result<Self> {
        Self::with_cap(source, group_size, DEFAULT_TYPE_CAP)
    }

    /// Enumerates every type unless there are more than `cap` of them.
    pub fn with_cap(source: SourceModel, group_size: usize, cap: u128) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidParameter("group size must be >= 1".into()));
        }
        let count = type_count(source.alphabet_size(), group_size);
        if count > cap {
            return Err(Error::Intractable { count, cap });
        }
        if source.alphabet_size() == 2 {
            return Ok(Self::binary_from(source, group_size));
        }
        Ok(Self::multinomial_from(source, group_size))
    }

    fn multinomial_from(source: SourceModel, group_size: usize) -> Self {
        let k = source.alphabet_size();
        let types = enumerate_types(k, group_size);
        let lf = ln_factorials(group_size);
        let ln_sym: Vec<f64> = source.symbol_pmf().iter().map(|p| p.ln()).collect();
        let multinomial = |counts: &[u32], total: usize| -> f64 {
            let mut ln = lf[total];
            for (x, &c) in counts.iter().enumerate() {
                ln -= lf[c as usize];
                if c > 0 {
                    ln += c as f64 * ln_sym[x];
                }
            }
            ln.exp()
        };

        let pmf: Vec<f64> = types.iter().map(|t| multinomial(t, group_size)).collect();
        let sym = source.symbol_pmf();
        let mut joint_xt = vec![vec![0.0; types.len()]; k];
        let mut scratch = vec![0u32; k];
        for (ti, t) in types.iter().enumerate() {
            for x in 0..k {
                if t[x] == 0 {
                    continue;
                }
                scratch.copy_from_slice(t);
                scratch[x] -= 1;
                joint_xt[x][ti] = sym[x] * multinomial(&scratch, group_size - 1);
            }
        }
        let index = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            source,
            group_size,
            types,
            pmf,
            joint_xt,
            index,
        }
    }

    /// Binary fast path; types are labeled by the number of ones.
    pub fn binary(p: f64, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidParameter("group size must be >= 1".into()));
        }
        let source = if p <= 0.5 {
            SourceModel::binary(p)?
        } else {
            SourceModel::binary_unconstrained(p)?
        };
        Ok(Self::binary_from(source, group_size))
    }

    fn binary_from(source: SourceModel, n: usize) -> Self {
        let p = source.activation_prob();
        let types: Vec<Vec<u32>> = (0..=n as u32).map(|t| vec![n as u32 - t, t]).collect();
        let pmf = binomial_pmf(n, p);
        let [zero, one] = binary_joint_xt(p, n);
        let index = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            source,
            group_size: n,
            types,
            pmf,
            joint_xt: vec![zero, one],
            index,
        }
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn alphabet_size(&self) -> usize {
        self.source.alphabet_size()
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    /// Count vectors in colexicographic order.
    pub fn types(&self) -> &[Vec<u32>] {
        &self.types
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Rows `x`, columns type index.
    pub fn joint_xt(&self) -> &[Vec<f64>] {
        &self.joint_xt
    }

    pub fn type_index(&self, counts: &[u32]) -> Option<usize> {
        if self.alphabet_size() == 2 && counts.len() == 2 {
            let t = counts[1] as usize;
            return (counts[0] as usize + t == self.group_size).then_some(t);
        }
        self.index.get(counts).copied()
    }
}

/// All count vectors of length `k` summing to `n`, colexicographic order.
fn enumerate_types(k: usize, n: usize) -> Vec<Vec<u32>> {
    fn fill(pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == 0 {
            current[0] = remaining;
            out.push(current.clone());
            return;
        }
        for c in 0..=remaining {
            current[pos] = c;
            fill(pos - 1, remaining - c, current, out);
        }
    }
    let mut out = Vec::new();
    let mut current = vec![0u32; k];
    fill(k - 1, n as u32, &mut current, &mut out);
    out
}
