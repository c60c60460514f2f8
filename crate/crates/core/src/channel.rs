//! Discrete memoryless channel from an enrolled symbol to a query symbol.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SourceModel};

const ROW_TOL: f64 = 1e-12;

/// `W(q|x)` with the 0-symmetry `W(s|0) = eta0` and `W(0|s) = eta1` for all
/// `s != 0`.
///
/// For alphabets larger than two the cross-error rate between distinct
/// nonzero symbols is a third parameter `eta2` (zero by default), which
/// leaves `W(s|s) = 1 - eta1 - (|X| - 2) eta2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    alphabet_size: usize,
    eta0: f64,
    eta1: f64,
    eta2: f64,
    /// `transition[x][q] = W(q|x)`
    transition: Vec<Vec<f64>>,
}

impl NoiseChannel {
    pub fn binary(eta0: f64, eta1: f64) -> Result<Self> {
        Self::symmetric(2, eta0, eta1, 0.0)
    }

    pub fn noiseless(alphabet_size: usize) -> Self {
        Self::symmetric(alphabet_size, 0.0, 0.0, 0.0).expect("identity channel is valid")
    }

    pub fn symmetric(alphabet_size: usize, eta0: f64, eta1: f64, eta2: f64) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "alphabet size must be >= 2, got {alphabet_size}"
            )));
        }
        let nonzero = (alphabet_size - 1) as f64;
        for (name, v) in [("eta0", eta0), ("eta1", eta1), ("eta2", eta2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if eta0 * nonzero > 1.0 + ROW_TOL {
            return Err(Error::InvalidParameter(format!(
                "eta0 = {eta0} exceeds 1/(|X|-1) = {}",
                1.0 / nonzero
            )));
        }
        let stay = 1.0 - eta1 - (nonzero - 1.0) * eta2;
        if stay < -ROW_TOL {
            return Err(Error::InvalidParameter(format!(
                "eta1 + (|X|-2) eta2 = {} exceeds 1",
                1.0 - stay
            )));
        }

        let k = alphabet_size;
        let mut transition = vec![vec![0.0; k]; k];
        transition[0][0] = (1.0 - nonzero * eta0).max(0.0);
        for s in 1..k {
            transition[0][s] = eta0;
            transition[s][0] = eta1;
            for q in 1..k {
                transition[s][q] = if q == s { stay.max(0.0) } else { eta2 };
            }
        }
        let chan = Self {
            alphabet_size,
            eta0,
            eta1,
            eta2,
            transition,
        };
        chan.check_rows()?;
        Ok(chan)
    }

    fn check_rows(&self) -> Result<()> {
        for (x, row) in self.transition.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::Numerical(format!("row {x} of W sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    /// `W(q|x)`
    pub fn w(&self, q: usize, x: usize) -> f64 {
        self.transition[x][q]
    }

    /// Row `x` of the transition matrix, `q -> W(q|x)`.
    pub fn row(&self, x: usize) -> &[f64] {
        &self.transition[x]
    }

    pub fn is_noiseless(&self) -> bool {
        self.eta0 == 0.0 && self.eta1 == 0.0 && self.eta2 == 0.0
    }

    /// Same channel with `eta0` replaced.
    pub fn with_eta0(&self, eta0: f64) -> Result<Self> {
        Self::symmetric(self.alphabet_size, eta0, self.eta1, self.eta2)
    }

    /// `P(Q = q) = sum_x P(X = x) W(q|x)`
    pub fn output_marginal(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.alphabet_size {
            return Err(Error::DimensionMismatch {
                what: "channel input distribution",
                expected: self.alphabet_size,
                got: input.len(),
            });
        }
        let mut out = vec![0.0; self.alphabet_size];
        for (x, &px) in input.iter().enumerate() {
            for (q, &w) in self.transition[x].iter().enumerate() {
                out[q] += px * w;
            }
        }
        Ok(out)
    }
}

/// Law of a query symbol, `P(Q = q)`.
pub fn query_marginal(model: &SourceModel, chan: &NoiseChannel) -> Result<Vec<f64>> {
    chan.output_marginal(&model.symbol_pmf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_examples() {
        let c = NoiseChannel::binary(0.0, 0.0).unwrap();
        assert_eq!(c.row(0), &[1.0, 0.0]);
        assert_eq!(c.row(1), &[0.0, 1.0]);
        assert!(c.is_noiseless());

        let c = NoiseChannel::binary(0.5, 0.5).unwrap();
        assert_eq!(c.row(0), &[0.5, 0.5]);
        assert_eq!(c.row(1), &[0.5, 0.5]);

        let c = NoiseChannel::binary(0.1, 0.2).unwrap();
        assert!((c.w(0, 0) - 0.9).abs() < 1e-15 && c.w(1, 0) == 0.1);
        assert!(c.w(0, 1) == 0.2 && (c.w(1, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_rates() {
        assert!(NoiseChannel::binary(-0.1, 0.0).is_err());
        assert!(NoiseChannel::binary(0.0, 1.5).is_err());
        assert!(NoiseChannel::symmetric(4, 0.4, 0.0, 0.0).is_err());
        assert!(NoiseChannel::symmetric(4, 0.2, 0.5, 0.3).is_err());
    }

    #[test]
    fn general_channel_symmetry() {
        let c = NoiseChannel::symmetric(4, 0.1, 0.2, 0.05).unwrap();
        for s in 1..4 {
            assert_eq!(c.w(s, 0), 0.1);
            assert_eq!(c.w(0, s), 0.2);
            assert!((c.w(s, s) - (1.0 - 0.2 - 2.0 * 0.05)).abs() < 1e-15);
        }
        assert!((c.w(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn query_marginal_examples() {
        let src = SourceModel::binary(0.2).unwrap();
        let q = query_marginal(&src, &NoiseChannel::noiseless(2)).unwrap();
        assert_eq!(q, src.symbol_pmf());

        let src = SourceModel::binary(0.5).unwrap();
        let q = query_marginal(&src, &NoiseChannel::binary(0.1, 0.1).unwrap()).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);

        let src = SourceModel::binary(0.2).unwrap();
        let q = query_marginal(&src, &NoiseChannel::binary(0.1, 0.3).unwrap()).unwrap();
        assert!((q[0] - 0.78).abs() < 1e-15 && (q[1] - 0.22).abs() < 1e-15);

        let src3 = SourceModel::new(3, 0.2).unwrap();
        assert!(query_marginal(&src3, &NoiseChannel::noiseless(2)).is_err());
    }

    proptest! {
        #[test]
        fn marginal_sums_to_one(k in 2usize..6, frac in 0.01f64..1.0, e0 in 0.0f64..1.0, e1 in 0.0f64..1.0) {
            let src = SourceModel::new(k, frac / k as f64).unwrap();
            let chan = NoiseChannel::symmetric(k, e0 / (k - 1) as f64, e1, 0.0).unwrap();
            let q = query_marginal(&src, &chan).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn uniform_preserved_by_symmetric_binary(eta in 0.0f64..1.0) {
            let src = SourceModel::binary(0.5).unwrap();
            let q = query_marginal(&src, &NoiseChannel::binary(eta, eta).unwrap()).unwrap();
            prop_assert!((q[0] - 0.5).abs() < 1e-15);
        }
    }
}
