//! Standard normal helpers.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Phi(x)` through `erfc`, accurate in the lower tail.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `1 - Phi(x)` without cancellation in the upper tail.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Phi^-1(u)` for `u` in `(0, 1)`.
pub fn quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}
