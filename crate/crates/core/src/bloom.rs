//! Bloom filter baseline.
//!
//! Enrolling an item into a Bloom filter sets `k` bits; viewed as a binary
//! sequence of length `m` with those `k` ones, the filter is the index-wise
//! OR of the `n` item sequences, i.e. the All-1 surjection applied to their
//! types. [`BloomFilter::item_sequence`] exposes that view.

use std::f64::consts::LN_2;
use std::hash::Hasher;

use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher13;

use crate::infometrics::required_length;
use crate::{ceil_tolerant, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomFilter {
    bits: Vec<bool>,
    hash_count: usize,
    seed: u64,
}

impl BloomFilter {
    pub fn new(m: usize, hash_count: usize, seed: u64) -> Result<Self> {
        if m == 0 || hash_count == 0 {
            return Err(Error::InvalidParameter(format!(
                "need m >= 1 and k >= 1, got m = {m}, k = {hash_count}"
            )));
        }
        Ok(Self {
            bits: vec![false; m],
            hash_count,
            seed,
        })
    }

    /// A filter of `m` bits with `k = optimal_k(m, n)`.
    pub fn with_optimal_k(m: usize, n: usize, seed: u64) -> Result<Self> {
        Self::new(m, optimal_k(m, n), seed)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hash_count(&self) -> usize {
        self.hash_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn hash(&self, salt: u64, item: &[u8]) -> u64 {
        let mut h = SipHasher13::new_with_keys(self.seed, salt);
        h.write(item);
        h.finish()
    }

    /// Double hashing: `g_j = h1 + j h2` over 64-bit words, then
    /// `index_j = mix(g_j) mod m`.
    ///
    /// Reducing the progression itself mod `m` makes probes of different
    /// items share steps when `m` is small (only `m` of them exist), which
    /// inflates the false-positive rate by a large factor at `m ~ 10^3`; the
    /// bijective mixer breaks that arithmetic structure.
    pub fn positions(&self, item: &[u8]) -> Vec<usize> {
        let m = self.bits.len() as u64;
        let h1 = self.hash(0x9e37_79b9_7f4a_7c15, item);
        let h2 = self.hash(0xc2b2_ae3d_27d4_eb4f, item);
        (0..self.hash_count as u64)
            .map(|j| (mix64(h1.wrapping_add(j.wrapping_mul(h2))) % m) as usize)
            .collect()
    }

    pub fn insert(&mut self, item: &[u8]) {
        for i in self.positions(item) {
            self.bits[i] = true;
        }
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        self.positions(item).into_iter().all(|i| self.bits[i])
    }

    /// The item as a binary sequence of length `m`, ones at its positions.
    pub fn item_sequence(&self, item: &[u8]) -> Vec<u8> {
        let mut seq = vec![0u8; self.bits.len()];
        for i in self.positions(item) {
            seq[i] = 1;
        }
        seq
    }

    /// `(1 - exp(-k n / m))^k`.
    pub fn expected_fp_rate(&self, n: usize) -> f64 {
        expected_fp_rate(self.bits.len(), n, self.hash_count)
    }
}

/// The splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn expected_fp_rate(m: usize, n: usize, k: usize) -> f64 {
    (1.0 - (-(k as f64) * n as f64 / m as f64).exp()).powi(k as i32)
}

/// `floor(ln 2 * m / n)`, at least 1.
pub fn optimal_k(m: usize, n: usize) -> usize {
    let n = n.max(1);
    ((LN_2 * m as f64 / n as f64).floor() as usize).max(1)
}

/// Required-length comparison between a Bloom filter and the All-1 scheme
/// for `n` items at false-positive target `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub epsilon: f64,
    /// From `2^-k <= epsilon` with `k = ln 2 * m / n`.
    pub bloom_bound: f64,
    /// From `m >= -ln(epsilon) / V` with `V = (ln 2)^2 / n`.
    pub scheme_bound: f64,
    pub bloom_m: u64,
    pub scheme_m: u64,
    pub bounds_coincide: bool,
    /// `epsilon = 1`: nothing needs to be stored.
    pub degenerate: bool,
    pub bloom_hash_count: usize,
    pub scheme_activation_prob: f64,
    pub bloom_model: String,
    pub scheme_model: String,
}

pub fn equivalence_report(n: usize, epsilon: f64) -> Result<EquivalenceReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    let nf = n as f64;
    let degenerate = epsilon == 1.0;
    // Bloom: P_fp = 2^-k at the optimal k, so k = log2(1/eps) and m = k n / ln 2.
    let k_needed = -epsilon.log2();
    let bloom_bound = k_needed * nf / LN_2;
    let verification = LN_2 * LN_2 / nf;
    let scheme_bound = -epsilon.ln() / verification;
    let bloom_m = ceil_tolerant(bloom_bound) as u64;
    let scheme_m = if degenerate {
        0
    } else {
        required_length(verification, epsilon)?
    };
    let bloom_hash_count = if bloom_m == 0 {
        0
    } else {
        optimal_k(bloom_m as usize, n)
    };
    Ok(EquivalenceReport {
        n,
        epsilon,
        bloom_bound,
        scheme_bound,
        bloom_m,
        scheme_m,
        bounds_coincide: (bloom_bound - scheme_bound).abs() <= 1e-9 * scheme_bound.max(1.0)
            && bloom_m == scheme_m,
        degenerate,
        bloom_hash_count,
        scheme_activation_prob: LN_2 / nf,
        bloom_model: "exactly k set bits per item (fixed-k hashing)".into(),
        scheme_model: "i.i.d. Bernoulli(p) bits per item, Binomial(m, p) ones".into(),
    })
}
