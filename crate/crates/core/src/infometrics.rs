//! Exact figures of merit of an aggregation scheme.
//!
//! Everything is computed from the joint law `P(X1 = x, Y = y)` of one
//! enrolled symbol and the representation symbol:
//!
//! * `P1(q, y) = sum_x P(Y = y, X = x) W(q|x)` is the law of a matching
//!   query/representation pair,
//! * `P0(q, y) = P(Q = q) P(Y = y)` the law of a non-matching pair,
//! * `V = KL(P1 || P0) = I(Y; Q)`, `C = H(Y)` and `S = H(X | Y)`.

use serde::{Deserialize, Serialize};

use crate::{ceil_tolerant, Error, NoiseChannel, Result, Surjection, TypeModel};

/// `x ln x` with the `0 ln 0 = 0` convention.
fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().copied().map(xlogx).sum::<f64>()
}

/// Entropy of a Bernoulli(p) variable in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -(xlogx(p) + xlogx(1.0 - p))
}

/// Joint laws derived from a type model, a surjection and a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDistributions {
    /// `pxy[x][y] = P(X1 = x, Y = y)`
    pub pxy: Vec<Vec<f64>>,
    pub py: Vec<f64>,
    pub pq: Vec<f64>,
    /// `p1[q][y]`
    pub p1: Vec<Vec<f64>>,
    /// `p0[q][y] = pq[q] * py[y]`
    pub p0: Vec<Vec<f64>>,
}

impl SchemeDistributions {
    pub fn build(tm: &TypeModel, r: &Surjection, chan: &NoiseChannel) -> Result<Self> {
        if r.type_count() != tm.type_count() {
            return Err(Error::DimensionMismatch {
                what: "surjection domain vs type space",
                expected: tm.type_count(),
                got: r.type_count(),
            });
        }
        let k = tm.alphabet_size();
        let mut pxy = vec![vec![0.0; r.output_symbols()]; k];
        for (x, row) in tm.joint_xt().iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                pxy[x][r.apply(t)] += v;
            }
        }
        Self::from_joint(pxy, chan)
    }

    /// Push `P(X1 = x, Y = y)` through the channel.
    pub fn from_joint(pxy: Vec<Vec<f64>>, chan: &NoiseChannel) -> Result<Self> {
        let k = chan.alphabet_size();
        if pxy.len() != k {
            return Err(Error::DimensionMismatch {
                what: "joint law rows vs channel alphabet",
                expected: k,
                got: pxy.len(),
            });
        }
        let ny = pxy[0].len();
        if pxy.iter().any(|row| row.len() != ny) {
            return Err(Error::Inconsistent("ragged joint law".into()));
        }
        let mut py = vec![0.0; ny];
        for row in &pxy {
            for (y, &v) in row.iter().enumerate() {
                py[y] += v;
            }
        }
        let mut p1 = vec![vec![0.0; ny]; k];
        for (x, row) in pxy.iter().enumerate() {
            for q in 0..k {
                let w = chan.w(q, x);
                if w == 0.0 {
                    continue;
                }
                for (y, &v) in row.iter().enumerate() {
                    p1[q][y] += v * w;
                }
            }
        }
        let pq: Vec<f64> = p1.iter().map(|row| row.iter().sum()).collect();
        let p0 = pq
            .iter()
            .map(|&a| py.iter().map(|&b| a * b).collect())
            .collect();
        Ok(Self {
            pxy,
            py,
            pq,
            p1,
            p0,
        })
    }

    pub fn output_symbols(&self) -> usize {
        self.py.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.pq.len()
    }

    /// `V = sum P1 ln(P1 / P0)`.
    pub fn verification(&self) -> Result<f64> {
        let mut v = 0.0;
        for (q, row) in self.p1.iter().enumerate() {
            for (y, &a) in row.iter().enumerate() {
                if a <= 0.0 {
                    continue;
                }
                v += a * self.log_ratio(q, y)?;
            }
        }
        // a KL divergence; clamp rounding below zero
        Ok(v.max(0.0))
    }

    /// `ln(P1(q, y) / P0(q, y))` for a cell with `P1 > 0`, taken through the
    /// marginals so that an underflowing product `P0` does not matter.
    pub fn log_ratio(&self, q: usize, y: usize) -> Result<f64> {
        let (a, bq, by) = (self.p1[q][y], self.pq[q], self.py[y]);
        if !(bq > 0.0 && by > 0.0) {
            return Err(Error::Inconsistent(format!(
                "P1({q},{y}) = {a} > 0 while P0({q},{y}) = 0"
            )));
        }
        let b = bq * by;
        if b >= f64::MIN_POSITIVE {
            // a single rounding, so P1 = P0 comes out as exactly 0
            Ok((a / b).ln())
        } else {
            Ok(a.ln() - bq.ln() - by.ln())
        }
    }

    /// `C = H(Y)`.
    pub fn compactness(&self) -> f64 {
        entropy(&self.py)
    }

    /// `H(X)` from the row marginals of the joint law.
    pub fn source_entropy(&self) -> f64 {
        let px: Vec<f64> = self.pxy.iter().map(|r| r.iter().sum()).collect();
        entropy(&px)
    }

    /// `S = H(X | Y) = H(X, Y) - H(Y)`.
    pub fn security(&self) -> f64 {
        let joint: f64 = -self.pxy.iter().flatten().copied().map(xlogx).sum::<f64>();
        (joint - self.compactness()).max(0.0)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Ok(Metrics {
            compactness: self.compactness(),
            security: self.security(),
            verification: self.verification()?,
            source_entropy: self.source_entropy(),
        })
    }
}

/// The three figures of merit plus `H(X)`, all in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub compactness: f64,
    pub security: f64,
    pub verification: f64,
    pub source_entropy: f64,
}

pub fn build_distributions(
    tm: &TypeModel,
    r: &Surjection,
    chan: &NoiseChannel,
) -> Result<SchemeDistributions> {
    SchemeDistributions::build(tm, r, chan)
}

pub fn verification_v(dist: &SchemeDistributions) -> Result<f64> {
    dist.verification()
}

pub fn compactness_c(dist: &SchemeDistributions) -> f64 {
    dist.compactness()
}

pub fn security_s(dist: &SchemeDistributions) -> f64 {
    dist.security()
}

/// Metrics of a scheme in one call.
pub fn scheme_metrics(tm: &TypeModel, r: &Surjection, chan: &NoiseChannel) -> Result<Metrics> {
    SchemeDistributions::build(tm, r, chan)?.metrics()
}

/// `V` of a scheme in one call.
pub fn scheme_verification(tm: &TypeModel, r: &Surjection, chan: &NoiseChannel) -> Result<f64> {
    SchemeDistributions::build(tm, r, chan)?.verification()
}

/// Noiseless binary `V` with `Y = T`: `h(p) - sum_t P(T = t) h(t / n)`.
pub fn noiseless_type_verification(p: f64, n: usize) -> f64 {
    let pmf = crate::source_model::binomial_pmf(n, p);
    let cond: f64 = pmf
        .iter()
        .enumerate()
        .map(|(t, &w)| w * binary_entropy(t as f64 / n as f64))
        .sum();
    binary_entropy(p) - cond
}

/// Smallest `m` with `m >= -ln(epsilon) / V`.
pub fn required_length(verification: f64, epsilon: f64) -> Result<u64> {
    if !(verification > 0.0) {
        return Err(Error::Unverifiable(verification));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} outside (0, 1)"
        )));
    }
    Ok(ceil_tolerant(-epsilon.ln() / verification) as u64)
}

/// Large-`n` regimes where `V ~ kappa / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticSetup {
    DenseType,
    SparseType,
    DenseMajority,
    SparseAll1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Asymptote {
    pub setup: AsymptoticSetup,
    pub p_rule: &'static str,
    pub kappa: f64,
}

/// `alpha` of the sparse type setup, `p = alpha / n`.
pub const SPARSE_TYPE_ALPHA: f64 = 1.338;
/// `beta` of the sparse type setup, `V ~ beta / n`.
pub const SPARSE_TYPE_BETA: f64 = 0.580;

impl Asymptote {
    /// The activation probability prescribed for a group of size `n`.
    pub fn activation_prob(&self, n: usize) -> f64 {
        let n = n as f64;
        match self.setup {
            AsymptoticSetup::DenseType | AsymptoticSetup::DenseMajority => 0.5,
            AsymptoticSetup::SparseType => SPARSE_TYPE_ALPHA / n,
            AsymptoticSetup::SparseAll1 => std::f64::consts::LN_2 / n,
        }
    }
}

pub fn asymptotic_kappa(setup: AsymptoticSetup) -> Asymptote {
    let (p_rule, kappa) = match setup {
        AsymptoticSetup::DenseType => ("p = 1/2", 0.5),
        AsymptoticSetup::SparseType => ("p = 1.338/n", SPARSE_TYPE_BETA),
        AsymptoticSetup::DenseMajority => ("p = 1/2", std::f64::consts::FRAC_1_PI),
        AsymptoticSetup::SparseAll1 => ("p = log(2)/n", std::f64::consts::LN_2.powi(2)),
    };
    Asymptote {
        setup,
        p_rule,
        kappa,
    }
}

/// Gaussian approximation of `H(T)` for `T ~ Binomial(n, 1/2)`.
pub fn gaussian_compactness(n: usize) -> f64 {
    0.5 * (std::f64::consts::PI * std::f64::consts::E * n as f64 / 2.0).ln()
}

pub const POISSON_TERMS: usize = 50;

/// Poisson approximation of `H(T)` for `T ~ Binomial(n, alpha / n)`:
/// `alpha (1 - ln alpha) + e^-alpha sum_j alpha^j ln(j!) / j!`.
///
/// The series is cut after `j = 50`. For `alpha <= 5` the first dropped term
/// is below `1e-20` and the tail is dominated by a geometric series of ratio
/// `alpha / 51`.
pub fn poisson_compactness(alpha: f64) -> f64 {
    let mut sum = 0.0;
    let mut ln_fact = 0.0;
    for j in 0..=POISSON_TERMS {
        if j > 0 {
            ln_fact += (j as f64).ln();
        }
        if ln_fact > 0.0 {
            sum += (j as f64 * alpha.ln() - ln_fact).exp() * ln_fact;
        }
    }
    alpha * (1.0 - alpha.ln()) + (-alpha).exp() * sum
}

/// One point of a `V(eta0)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisePoint {
    pub eta0: f64,
    pub verification: f64,
    /// Forward difference `(V(eta0 + h) - V(eta0)) / h`, `h = max(eta0 / 10, 1e-9)`.
    pub slope: f64,
}

/// `V` along a grid of `eta0` values at fixed `eta1` (binary schemes).
pub fn noise_sensitivity(
    tm: &TypeModel,
    r: &Surjection,
    eta0_grid: &[f64],
    eta1: f64,
) -> Result<Vec<NoisePoint>> {
    if tm.alphabet_size() != 2 {
        return Err(Error::InvalidParameter(
            "noise sensitivity is defined for binary schemes".into(),
        ));
    }
    let v_at = |eta0: f64| -> Result<f64> {
        scheme_verification(tm, r, &NoiseChannel::binary(eta0, eta1)?)
    };
    eta0_grid
        .iter()
        .map(|&eta0| {
            let h = (eta0 / 10.0).max(1e-9);
            let v = v_at(eta0)?;
            let slope = (v_at(eta0 + h)? - v) / h;
            Ok(NoisePoint {
                eta0,
                verification: v,
                slope,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SourceModel;
    use std::f64::consts::LN_2;

    fn binary(p: f64, n: usize) -> TypeModel {
        TypeModel::binary(p, n).unwrap()
    }

    #[test]
    fn binary_entropy_examples() {
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        // -0.1 ln 0.1 - 0.9 ln 0.9
        assert!((binary_entropy(0.1) - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn n1_identity_recovers_source() {
        let tm = binary(0.3, 1);
        let d = SchemeDistributions::build(&tm, &Surjection::identity(2), &NoiseChannel::noiseless(2))
            .unwrap();
        assert!((d.p1[0][0] - 0.7).abs() < 1e-15 && (d.p1[1][1] - 0.3).abs() < 1e-15);
        assert_eq!(d.p1[0][1], 0.0);
        let m = d.metrics().unwrap();
        assert!((m.verification - binary_entropy(0.3)).abs() < 1e-14);
        assert!(m.security.abs() < 1e-14);
    }

    #[test]
    fn n2_dense_identity() {
        let tm = binary(0.5, 2);
        let v = scheme_verification(&tm, &Surjection::identity(3), &NoiseChannel::noiseless(2)).unwrap();
        assert!((v - 0.5 * LN_2).abs() < 1e-15);
        assert!((v - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn fully_noisy_channel_is_useless() {
        let tm = binary(0.3, 5);
        let v = scheme_verification(&tm, &Surjection::identity(6), &NoiseChannel::binary(0.5, 0.5).unwrap())
            .unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn kl_zero_for_product_law() {
        let chan = NoiseChannel::noiseless(2);
        let d = SchemeDistributions::from_joint(vec![vec![0.3, 0.2], vec![0.3, 0.2]], &chan).unwrap();
        assert!(d.verification().unwrap().abs() < 1e-15);
    }

    #[test]
    fn kl_flags_impossible_support() {
        let d = SchemeDistributions {
            pxy: vec![vec![1.0]],
            py: vec![1.0],
            pq: vec![0.0],
            p1: vec![vec![0.5]],
            p0: vec![vec![0.0]],
        };
        assert!(matches!(d.verification(), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn compactness_examples() {
        let chan = NoiseChannel::noiseless(2);
        let d = SchemeDistributions::from_joint(
            vec![vec![0.125, 0.125, 0.125, 0.125], vec![0.125, 0.125, 0.125, 0.125]],
            &chan,
        )
        .unwrap();
        assert!((d.compactness() - 4f64.ln()).abs() < 1e-15);

        let tm = binary(0.5, 64);
        let c = SchemeDistributions::build(&tm, &Surjection::identity(65), &chan)
            .unwrap()
            .compactness();
        assert!((c - gaussian_compactness(64)).abs() <= 0.05);

        let tm = binary(1.338 / 128.0, 128);
        let c = SchemeDistributions::build(&tm, &Surjection::identity(129), &chan)
            .unwrap()
            .compactness();
        assert!((c - poisson_compactness(1.338)).abs() <= 0.05, "{c}");
    }

    #[test]
    fn poisson_series_matches_poisson_entropy() {
        // entropy of Poisson(alpha) by direct summation of its pmf
        for alpha in [0.5, 1.338, 3.0] {
            let mut h = 0.0;
            let mut ln_fact = 0.0;
            for j in 0..200 {
                if j > 0 {
                    ln_fact += (j as f64).ln();
                }
                let lp = -alpha + j as f64 * f64::ln(alpha) - ln_fact;
                h -= lp.exp() * lp;
            }
            assert!((poisson_compactness(alpha) - h).abs() < 1e-12);
        }
    }

    #[test]
    fn security_examples() {
        let chan = NoiseChannel::noiseless(2);
        let d = SchemeDistributions::build(&binary(0.5, 32), &Surjection::identity(33), &chan).unwrap();
        assert!((d.security() - LN_2).abs() <= 0.05);
        let m = d.metrics().unwrap();
        assert!((m.verification + m.security - m.source_entropy).abs() < 1e-9);
    }

    #[test]
    fn kl_matches_closed_form_noiseless_identity() {
        for n in 1..=12 {
            for p in [0.02, 0.1, 0.25, 0.4, 0.5] {
                let v = scheme_verification(&binary(p, n), &Surjection::identity(n + 1), &NoiseChannel::noiseless(2))
                    .unwrap();
                assert!((v - noiseless_type_verification(p, n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ternary_scheme_identities() {
        let src = SourceModel::new(3, 0.25).unwrap();
        let tm = TypeModel::new(src, 4).unwrap();
        let r = Surjection::identity(tm.type_count());
        let m = scheme_metrics(&tm, &r, &NoiseChannel::noiseless(3)).unwrap();
        assert!((m.verification + m.security - src.entropy()).abs() < 1e-9);
        assert!(m.verification <= m.compactness + 1e-12);
        let noisy = NoiseChannel::symmetric(3, 0.1, 0.1, 0.05).unwrap();
        let mn = scheme_metrics(&tm, &r, &noisy).unwrap();
        assert!(mn.verification < m.verification);
    }

    #[test]
    fn required_length_examples() {
        let v = LN_2.powi(2) / 64.0;
        // 64 ln(20) / (ln 2)^2 = 399.05
        assert_eq!(required_length(v, 0.05).unwrap(), 400);
        assert_eq!(required_length(LN_2, 0.5).unwrap(), 1);
        assert!(matches!(required_length(0.0, 0.1), Err(Error::Unverifiable(_))));
        assert!(required_length(0.1, 1.0).is_err());
    }

    #[test]
    fn asymptote_constants() {
        assert_eq!(asymptotic_kappa(AsymptoticSetup::DenseType).kappa, 0.5);
        let s = asymptotic_kappa(AsymptoticSetup::SparseType);
        assert_eq!(s.kappa, 0.580);
        assert!((s.activation_prob(100) - 0.01338).abs() < 1e-15);
        assert!((asymptotic_kappa(AsymptoticSetup::SparseAll1).kappa - 0.480_453).abs() < 1e-6);
        assert!((asymptotic_kappa(AsymptoticSetup::DenseMajority).kappa - std::f64::consts::FRAC_1_PI).abs() < 1e-5);
    }

    #[test]
    fn dense_nv_decreases_towards_half() {
        let mut prev = f64::INFINITY;
        // n = 1 and n = 2 tie at ln 2
        for n in 2..=80 {
            let nv = n as f64 * noiseless_type_verification(0.5, n);
            assert!(nv < prev, "n = {n}");
            assert!(nv > 0.5);
            prev = nv;
        }
    }

    #[test]
    fn dense_beats_very_sparse() {
        for n in 8..=40 {
            let sparse = noiseless_type_verification(0.2 / n as f64, n);
            assert!(noiseless_type_verification(0.5, n) > sparse);
        }
    }

    #[test]
    fn dense_versus_fixed_p_crossover() {
        // p = 0.05 sits near the sparse optimum 1.338 / n once n ~ 27, so it
        // overtakes p = 1/2 from n = 11 on
        for n in 8..=60 {
            let dense = noiseless_type_verification(0.5, n);
            let fixed = noiseless_type_verification(0.05, n);
            assert_eq!(dense > fixed, n <= 10, "n = {n}: {dense} vs {fixed}");
        }
    }

    #[test]
    fn noise_sensitivity_examples() {
        let tm = binary(LN_2 / 16.0, 16);
        let id = Surjection::identity(17);
        let pts = noise_sensitivity(&tm, &id, &[1e-3, 1e-6], 0.0).unwrap();
        assert!(pts[1].slope.abs() > pts[0].slope.abs());

        let tm = binary(0.5, 15);
        let maj = Surjection::majority(15);
        let pts = noise_sensitivity(&tm, &maj, &[0.0, 1e-6, 1e-4, 1e-2], 0.0).unwrap();
        for p in &pts {
            assert!(p.slope.is_finite() && p.slope.abs() < 1.0);
        }

        let pts = noise_sensitivity(&tm, &maj, &[0.0], 0.0).unwrap();
        assert_eq!(pts.len(), 1);
        let v0 = scheme_verification(&tm, &maj, &NoiseChannel::noiseless(2)).unwrap();
        assert_eq!(pts[0].verification, v0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn noiseless_tradeoff_identities(n in 1usize..=12, p in 0.001f64..0.5) {
                let tm = binary(p, n);
                let r = Surjection::identity(n + 1);
                let m = scheme_metrics(&tm, &r, &NoiseChannel::noiseless(2)).unwrap();
                prop_assert!(m.verification >= 0.0 && m.security >= 0.0 && m.compactness >= 0.0);
                prop_assert!(m.verification <= m.compactness + 1e-12);
                prop_assert!((m.verification + m.security - m.source_entropy).abs() < 1e-9);
            }

            #[test]
            fn noisy_schemes_nonnegative_and_bounded(
                n in 1usize..=10, p in 0.01f64..0.5, e0 in 0.0f64..0.5, e1 in 0.0f64..0.5, t in 1usize..=10,
            ) {
                let t = t.min(n);
                let tm = binary(p, n);
                let chan = NoiseChannel::binary(e0, e1).unwrap();
                for r in [Surjection::identity(n + 1), Surjection::threshold(n, t).unwrap()] {
                    let m = scheme_metrics(&tm, &r, &chan).unwrap();
                    prop_assert!(m.verification >= 0.0);
                    prop_assert!(m.verification <= m.compactness + 1e-12);
                }
            }
        }
    }
}
