//! Scalar abstraction for probability values.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type usable as a transition probability.
///
/// Refinement compares probabilities for exact equality, so every
/// implementation exposes a bit-level key where `x == y` iff
/// `x.exact_key() == y.exact_key()` for the non-NaN values that can occur.
pub trait Probability:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + FromStr + Send + Sync + 'static
{
    /// Tolerance on `|sum - 1|` accepted for one distribution.
    fn sum_tolerance() -> Self;

    /// Bit pattern used for exact hashing and equality (`-0.0` folds onto `0.0`).
    fn exact_key(self) -> u64;
}

impl Probability for f64 {
    fn sum_tolerance() -> Self {
        1e-9
    }

    fn exact_key(self) -> u64 {
        if self == 0.0 {
            0
        } else {
            self.to_bits()
        }
    }
}

impl Probability for f32 {
    // f32 cannot resolve 1e-9 around 1.0.
    fn sum_tolerance() -> Self {
        1e-5
    }

    fn exact_key(self) -> u64 {
        if self == 0.0 {
            0
        } else {
            u64::from(self.to_bits())
        }
    }
}

/// Total order for non-NaN probabilities.
pub(crate) fn cmp_prob<P: Probability>(a: &P, b: &P) -> std::cmp::Ordering {
    a.partial_cmp(b).expect("probabilities are never NaN")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_zero_folds() {
        assert_eq!((-0.0f64).exact_key(), 0.0f64.exact_key());
        assert_eq!((-0.0f32).exact_key(), 0.0f32.exact_key());
    }

    #[test]
    fn distinct_values_have_distinct_keys() {
        assert_ne!(0.12345f64.exact_key(), 0.12349f64.exact_key());
        assert_ne!((0.1f64 + 0.2).exact_key(), 0.3f64.exact_key());
    }
}
