//! Random-projection embedding of unit-norm templates into binary sequences.
//!
//! Symbol `i` of a template `v` is `[v . U_i > lambda]` with `U_i` i.i.d.
//! standard normal `d`-vectors. Enrolled templates use `lambda_x`, queries
//! `lambda_q`; for a query correlated at `c` with its template this induces
//! a binary channel with rates `eta0`, `eta1`.
//!
//! For negatives drawn uniformly on the sphere the template-level
//! correlation is roughly `N(0, 1/d)`; the dimension does not enter `p`,
//! `eta0` or `eta1`, which is why the exact computations here are
//! `d`-independent.

pub mod normal;
pub mod quadrature;
pub mod templates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::infometrics::scheme_verification;
use crate::surjection::best_threshold;
use crate::{Error, NoiseChannel, Result, Surjection, TypeModel};

const UNIT_TOL: f64 = 1e-6;
/// Absolute tolerance on the induced rates.
pub const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub seq_length: usize,
    pub lambda_x: f64,
    pub lambda_q: f64,
    pub seed: u64,
}

impl EmbeddingConfig {
    pub fn new(dim: usize, seq_length: usize, lambda_x: f64, lambda_q: f64, seed: u64) -> Result<Self> {
        if dim < 2 || seq_length < 1 {
            return Err(Error::InvalidParameter(format!(
                "need d >= 2 and m >= 1, got d = {dim}, m = {seq_length}"
            )));
        }
        Ok(Self {
            dim,
            seq_length,
            lambda_x,
            lambda_q,
            seed,
        })
    }

    pub fn projector(&self) -> Projector {
        Projector::new(self.dim, self.seed)
    }

    pub fn embed_enrolled(&self, v: &[f64]) -> Result<Vec<u8>> {
        embed(v, self, self.lambda_x)
    }

    pub fn embed_query(&self, v: &[f64]) -> Result<Vec<u8>> {
        embed(v, self, self.lambda_q)
    }
}

/// Counter-based stream of projection directions: `U_i` depends only on
/// `(seed, i)`, so sequences of different lengths share prefixes.
#[derive(Debug, Clone)]
pub struct Projector {
    dim: usize,
    base: ChaCha8Rng,
}

const CHUNK: usize = 2048;

impl Projector {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn fill_direction(&self, index: u64, out: &mut [f64]) {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    pub fn direction(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.fill_direction(index, &mut out);
        out
    }

    /// `v . U_i` for `i in 0..m` and every vector, generating each `U_i` once.
    pub fn project_many(&self, vectors: &[&[f64]], m: usize) -> Result<Vec<Vec<f64>>> {
        for v in vectors {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "template dimension",
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        let chunks: Vec<Vec<Vec<f64>>> = (0..m.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(m);
                let mut u = vec![0.0; self.dim];
                let mut out = vec![Vec::with_capacity(hi - lo); vectors.len()];
                for i in lo..hi {
                    self.fill_direction(i as u64, &mut u);
                    for (o, v) in out.iter_mut().zip(vectors) {
                        o.push(dot(v, &u));
                    }
                }
                out
            })
            .collect();
        let mut out = vec![Vec::with_capacity(m); vectors.len()];
        for chunk in chunks {
            for (o, part) in out.iter_mut().zip(chunk) {
                o.extend(part);
            }
        }
        Ok(out)
    }

    /// Embed each vector with its own threshold over the same directions.
    pub fn embed_many(&self, vectors: &[&[f64]], thresholds: &[f64], m: usize) -> Result<Vec<Vec<u8>>> {
        if thresholds.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                what: "thresholds per vector",
                expected: vectors.len(),
                got: thresholds.len(),
            });
        }
        for v in vectors {
            check_unit(v)?;
        }
        Ok(self
            .project_many(vectors, m)?
            .into_iter()
            .zip(thresholds)
            .map(|(proj, &lambda)| proj.into_iter().map(|z| u8::from(z > lambda)).collect())
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitNorm(n));
    }
    Ok(())
}

/// `X(i) = [v . U_i > threshold]` for `i in 0..m`.
pub fn embed(v: &[f64], cfg: &EmbeddingConfig, threshold: f64) -> Result<Vec<u8>> {
    let mut out = cfg.projector().embed_many(&[v], &[threshold], cfg.seq_length)?;
    Ok(out.pop().expect("one vector"))
}

/// `p = 1 - Phi(lambda_x)`.
pub fn activation_prob(lambda_x: f64) -> f64 {
    normal::sf(lambda_x)
}

/// The threshold producing activation probability `p`.
pub fn threshold_for_activation(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    Ok(normal::quantile(1.0 - p))
}

fn check_correlation(c: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("correlation {c} outside [-1, 1]")));
    }
    Ok(())
}

/// `eta0 = P(q.U > lambda_q | x.U <= lambda_x)` when `q.x = c`.
pub fn induced_eta0(lambda_x: f64, lambda_q: f64, c: f64) -> Result<f64> {
    check_correlation(c)?;
    let keep = normal::cdf(lambda_x);
    if keep <= 0.0 {
        return Err(Error::Numerical(format!("P(X = 0) underflows at lambda_x = {lambda_x}")));
    }
    if c == 1.0 {
        return Ok(((keep - normal::cdf(lambda_q)) / keep).max(0.0));
    }
    if c == -1.0 {
        return Ok(normal::cdf((-lambda_q).min(lambda_x)) / keep);
    }
    let s = (1.0 - c * c).sqrt();
    let integral = quadrature::integrate_to(
        |x| normal::pdf(x) * normal::sf((lambda_q - c * x) / s),
        lambda_x,
        0.1 * RATE_TOL * keep,
    )?;
    Ok((integral / keep).clamp(0.0, 1.0))
}

/// `eta1 = P(q.U <= lambda_q | x.U > lambda_x)` when `q.x = c`.
pub fn induced_eta1(lambda_x: f64, lambda_q: f64, c: f64) -> Result<f64> {
    check_correlation(c)?;
    let p = normal::sf(lambda_x);
    if p <= 0.0 {
        return Err(Error::Numerical(format!("P(X = 1) underflows at lambda_x = {lambda_x}")));
    }
    if c == 1.0 {
        return Ok(((normal::cdf(lambda_q) - normal::cdf(lambda_x)) / p).max(0.0));
    }
    if c == -1.0 {
        return Ok(normal::sf((-lambda_q).max(lambda_x)) / p);
    }
    let s = (1.0 - c * c).sqrt();
    let integral = quadrature::integrate_from(
        |x| normal::pdf(x) * normal::cdf((lambda_q - c * x) / s),
        lambda_x,
        0.1 * RATE_TOL * p,
    )?;
    Ok((integral / p).clamp(0.0, 1.0))
}

/// `(p, eta0, eta1)` for a pair of thresholds and a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InducedChannel {
    pub p: f64,
    pub eta0: f64,
    pub eta1: f64,
}

impl InducedChannel {
    pub fn new(lambda_x: f64, lambda_q: f64, c: f64) -> Result<Self> {
        Ok(Self {
            p: activation_prob(lambda_x),
            eta0: induced_eta0(lambda_x, lambda_q, c)?,
            eta1: induced_eta1(lambda_x, lambda_q, c)?,
        })
    }

    pub fn channel(&self) -> Result<NoiseChannel> {
        NoiseChannel::binary(self.eta0, self.eta1)
    }
}

/// A unit-norm template and a query at prescribed correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub enrolled: Vec<f64>,
    pub query: Vec<f64>,
    pub correlation: f64,
}

pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `c x + sqrt(1 - c^2) w` with `w` uniform on the sphere orthogonal to `x`.
pub fn correlated_with<R: Rng + ?Sized>(x: &[f64], c: f64, rng: &mut R) -> Vec<f64> {
    let d = x.len();
    let w = loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let along = dot(&g, x);
        let w: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi - along * xi).collect();
        let n = norm(&w);
        if n > 1e-9 {
            break w.into_iter().map(|v| v / n).collect::<Vec<_>>();
        }
    };
    let s = (1.0 - c * c).max(0.0).sqrt();
    x.iter().zip(&w).map(|(xi, wi)| c * xi + s * wi).collect()
}

pub fn sample_pair(c: f64, dim: usize, seed: u64) -> Result<CorrelatedPair> {
    check_correlation(c)?;
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("d = {dim} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enrolled = random_unit_vector(dim, &mut rng);
    let query = correlated_with(&enrolled, c, &mut rng);
    Ok(CorrelatedPair {
        enrolled,
        query,
        correlation: c,
    })
}

/// Surjection families scanned by the threshold grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurjectionFamily {
    Identity,
    Majority,
    AllOne,
    /// The best threshold surjection for the point's `(p, eta0, eta1)`.
    BestThreshold,
}

impl SurjectionFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Majority => "majority",
            Self::AllOne => "all1",
            Self::BestThreshold => "best_threshold",
        }
    }
}

/// Candidate thresholds; every `(lambda_x, lambda_q)` pair is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_x: Vec<f64>,
    pub lambda_q: Vec<f64>,
}

impl GridSpec {
    /// `{min, min + step, ..., max}` on both axes.
    pub fn uniform(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || max < min {
            return Err(Error::InvalidParameter(format!(
                "bad grid [{min}, {max}] step {step}"
            )));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        // round to the step's decimal to keep 0.0 exactly on the grid
        let axis: Vec<f64> = (0..count)
            .map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9)
            .collect();
        Ok(Self {
            lambda_x: axis.clone(),
            lambda_q: axis,
        })
    }

    pub fn single(lambda_x: f64, lambda_q: f64) -> Self {
        Self {
            lambda_x: vec![lambda_x],
            lambda_q: vec![lambda_q],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda_x.len() * self.lambda_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for GridSpec {
    /// `{-2.0, -1.9, ..., 2.0}` on both axes.
    fn default() -> Self {
        Self::uniform(-2.0, 2.0, 0.1).expect("valid default grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda_x: f64,
    pub lambda_q: f64,
    pub p: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub verification: f64,
}

/// `V` of the binary scheme induced by one threshold pair.
pub fn evaluate_point(
    c: f64,
    n: usize,
    family: SurjectionFamily,
    lambda_x: f64,
    lambda_q: f64,
) -> Result<GridPoint> {
    let induced = InducedChannel::new(lambda_x, lambda_q, c)?;
    let chan = induced.channel()?;
    let verification = match family {
        SurjectionFamily::BestThreshold => best_threshold(induced.p, n, &chan)?.1,
        _ => {
            let tm = TypeModel::binary(induced.p, n)?;
            let r = match family {
                SurjectionFamily::Identity => Surjection::identity(n + 1),
                SurjectionFamily::Majority => Surjection::majority(n),
                SurjectionFamily::AllOne => Surjection::all_one(n),
                SurjectionFamily::BestThreshold => unreachable!(),
            };
            scheme_verification(&tm, &r, &chan)?
        }
    };
    Ok(GridPoint {
        lambda_x,
        lambda_q,
        p: induced.p,
        eta0: induced.eta0,
        eta1: induced.eta1,
        verification,
    })
}

/// Maximize `V` over the grid; ties go to the smaller `lambda_x`, then the
/// smaller `lambda_q`.
pub fn grid_search(c: f64, n: usize, family: SurjectionFamily, grid: &GridSpec) -> Result<GridPoint> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut xs = grid.lambda_x.clone();
    let mut qs = grid.lambda_q.clone();
    xs.sort_by(f64::total_cmp);
    qs.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .flat_map(|&x| qs.iter().map(move |&q| (x, q)))
        .collect();
    let points: Vec<Result<GridPoint>> = pairs
        .par_iter()
        .map(|&(x, q)| evaluate_point(c, n, family, x, q))
        .collect();
    let mut best: Option<GridPoint> = None;
    for pt in points {
        let pt = pt?;
        if best.is_none_or(|b| pt.verification > b.verification) {
            best = Some(pt);
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(dim: usize, seed: u64) -> Vec<f64> {
        random_unit_vector(dim, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn embed_is_deterministic_and_prefix_stable() {
        let v = unit(16, 1);
        let a = embed(&v, &EmbeddingConfig::new(16, 300, 0.0, 0.0, 9).unwrap(), 0.0).unwrap();
        let b = embed(&v, &EmbeddingConfig::new(16, 300, 0.0, 0.0, 9).unwrap(), 0.0).unwrap();
        assert_eq!(a, b);
        let long = embed(&v, &EmbeddingConfig::new(16, 5000, 0.0, 0.0, 9).unwrap(), 0.0).unwrap();
        assert_eq!(&long[..300], &a[..]);
        let other = embed(&v, &EmbeddingConfig::new(16, 300, 0.0, 0.0, 10).unwrap(), 0.0).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn embed_rejects_non_unit() {
        let cfg = EmbeddingConfig::new(3, 10, 0.0, 0.0, 0).unwrap();
        assert!(matches!(embed(&[1.0, 1.0, 0.0], &cfg, 0.0), Err(Error::NotUnitNorm(_))));
        assert!(EmbeddingConfig::new(1, 10, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn ones_rate_at_zero_and_large_threshold() {
        let m = 1_000_000;
        let v = unit(8, 3);
        let cfg = EmbeddingConfig::new(8, m, 0.0, 0.0, 42).unwrap();
        let proj = cfg.projector().project_many(&[&v], m).unwrap().pop().unwrap();
        let ones = proj.iter().filter(|&&z| z > 0.0).count() as f64 / m as f64;
        let sigma = (0.25 / m as f64).sqrt();
        assert!((ones - 0.5).abs() <= 3.0 * sigma, "{ones}");
        let big = proj.iter().filter(|&&z| z > 10.0).count() as f64 / m as f64;
        assert!(big <= 1e-6);
    }

    #[test]
    fn activation_examples() {
        assert_eq!(activation_prob(0.0), 0.5);
        assert!((activation_prob(3.0) - 0.001_349_898).abs() < 1e-9);
        let p = std::f64::consts::LN_2 / 16.0;
        let lx = threshold_for_activation(p).unwrap();
        // Phi^-1(0.95668) by bisection on Phi
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal::cdf(mid) < 1.0 - p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lx - lo).abs() < 1e-8);
        assert!((activation_prob(lx) - p).abs() < 1e-10);
    }

    #[test]
    fn eta0_closed_form_oracles() {
        for c in [0.2, 0.5, 0.8, 0.95] {
            let e = induced_eta0(0.0, 0.0, c).unwrap();
            assert!((e - c.acos() / PI).abs() < 1e-8, "c={c}");
            let e1 = induced_eta1(0.0, 0.0, c).unwrap();
            assert!((e1 - c.acos() / PI).abs() < 1e-8);
        }
        assert!((induced_eta0(0.0, 0.0, 0.8).unwrap() - 0.204_832_764_699_133).abs() < 1e-9);
        // independence at c = 0
        for (lx, lq) in [(0.5, -0.3), (1.7, 1.9), (-1.0, 0.2)] {
            let e = induced_eta0(lx, lq, 0.0).unwrap();
            assert!((e - normal::sf(lq)).abs() < 1e-9);
            let e1 = induced_eta1(lx, lq, 0.0).unwrap();
            assert!((e1 - normal::cdf(lq)).abs() < 1e-9);
        }
        assert_eq!(induced_eta0(1.2, 1.2, 1.0).unwrap(), 0.0);
        assert_eq!(induced_eta1(1.2, 1.2, 1.0).unwrap(), 0.0);
        assert!(induced_eta0(1.2, 1.2, 0.999_999).unwrap() < 1e-2);
        assert!(induced_eta0(0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn eta_monotone_in_lambda_q() {
        for &(lx, c) in &[(0.0, 0.8), (1.5, 0.95), (-0.5, 0.6)] {
            let mut prev0 = f64::INFINITY;
            let mut prev1 = f64::NEG_INFINITY;
            for i in 0..=40 {
                let lq = -2.0 + 0.1 * i as f64;
                let e0 = induced_eta0(lx, lq, c).unwrap();
                let e1 = induced_eta1(lx, lq, c).unwrap();
                assert!(e0 < prev0 && e1 > prev1);
                prev0 = e0;
                prev1 = e1;
            }
        }
    }

    #[test]
    fn sample_pair_geometry() {
        let pair = sample_pair(1.0, 32, 5).unwrap();
        for (a, b) in pair.enrolled.iter().zip(&pair.query) {
            assert!((a - b).abs() < 1e-12);
        }
        let pair = sample_pair(0.0, 32, 5).unwrap();
        assert!(dot(&pair.enrolled, &pair.query).abs() < 1e-9);
        for c in [-0.4, 0.3, 0.83, 0.999] {
            let pair = sample_pair(c, 64, 17).unwrap();
            assert!((norm(&pair.enrolled) - 1.0).abs() < 1e-9);
            assert!((norm(&pair.query) - 1.0).abs() < 1e-9);
            assert!((dot(&pair.enrolled, &pair.query) - c).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_rate_matches_quadrature() {
        let m = 1_000_000;
        let pair = sample_pair(0.8, 32, 11).unwrap();
        let proj = Projector::new(32, 1234);
        let bits = proj
            .embed_many(&[&pair.enrolled, &pair.query], &[0.0, 0.0], m)
            .unwrap();
        let zeros = bits[0].iter().filter(|&&b| b == 0).count();
        let flips = bits[0]
            .iter()
            .zip(&bits[1])
            .filter(|(&x, &q)| x == 0 && q == 1)
            .count();
        let rate = flips as f64 / zeros as f64;
        let eta = induced_eta0(0.0, 0.0, 0.8).unwrap();
        let sigma = (eta * (1.0 - eta) / zeros as f64).sqrt();
        assert!((rate - eta).abs() <= 3.0 * sigma, "{rate} vs {eta}");
    }

    #[test]
    fn grid_search_examples() {
        let grid = GridSpec::default();
        assert_eq!(grid.len(), 41 * 41);
        assert!(grid.lambda_x.contains(&0.0));
        let best = grid_search(0.8, 15, SurjectionFamily::Identity, &grid).unwrap();
        assert_eq!((best.lambda_x, best.lambda_q), (0.0, 0.0));

        let best = grid_search(0.99, 15, SurjectionFamily::AllOne, &grid).unwrap();
        let n = 15.0;
        assert!(best.p > 0.5 / n && best.p < 2.0 / n, "p = {}", best.p);
        assert!(best.lambda_q >= best.lambda_x);

        let one = grid_search(0.7, 15, SurjectionFamily::Majority, &GridSpec::single(0.3, 0.4)).unwrap();
        assert_eq!((one.lambda_x, one.lambda_q), (0.3, 0.4));

        let empty = GridSpec { lambda_x: vec![], lambda_q: vec![0.0] };
        assert!(matches!(grid_search(0.7, 15, SurjectionFamily::Identity, &empty), Err(Error::EmptyGrid)));
    }

    #[test]
    fn best_threshold_family_dominates() {
        for (lx, lq) in [(0.0, 0.0), (1.5, 1.6)] {
            let bt = evaluate_point(0.95, 15, SurjectionFamily::BestThreshold, lx, lq).unwrap();
            for fam in [SurjectionFamily::Majority, SurjectionFamily::AllOne] {
                let v = evaluate_point(0.95, 15, fam, lx, lq).unwrap();
                assert!(bt.verification >= v.verification - 1e-15);
            }
        }
    }
}
