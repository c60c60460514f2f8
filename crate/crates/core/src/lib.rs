//! Privacy-preserving group membership verification over aggregated
//! discrete sequences.
//!
//! `n` enrolled sequences are folded index-wise into a single group
//! representation in two stages: the type (histogram) of the `n` symbols at
//! each index, then a surjection onto a smaller output alphabet. The crate
//! computes the exact information-theoretic figures of merit of such a
//! scheme (compactness `C = H(Y)`, security `S = H(X|Y)`, verification
//! `V = I(Y;Q)`), bridges real unit-norm templates to binary sequences with
//! a random-projection embedding, and runs Monte-Carlo verification
//! experiments next to a classic Bloom filter baseline.
//!
//! All entropies are in nats.

// index loops over small probability tables read better than zipped iterators;
// negated comparisons deliberately reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bloom;
pub mod channel;
pub mod embedding;
mod error;
pub mod infometrics;
pub mod membership;
pub mod source_model;
pub mod surjection;

pub use channel::NoiseChannel;
pub use error::{Error, Result};
pub use infometrics::{Metrics, SchemeDistributions};
pub use source_model::{SourceModel, TypeModel};
pub use surjection::{ProbabilisticSurjection, Surjection};

/// Version tag written into every exported CSV/JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// `ceil(x)` that forgives floating-point noise just above an integer, so
/// that bounds like `(log 2)^2 / (log 2)^2` land on `1` rather than `2`.
pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}
