//! Scalar abstraction for the numeric core.
//!
//! Everything in this crate is generic over [`Scalar`], which is any IEEE
//! float-like type. `f64` is the type the default tolerances are written
//! for; `f32` works but meets the probability tolerances only up to its
//! own machine epsilon (see [`Tolerances`]).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    ///
    /// Panics only if the target type cannot represent any finite value of
    /// the constant, which does not happen for `f32`/`f64`.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Widening conversion used for RNG sampling and report output.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Numeric tolerances for validation and invariant checks.
///
/// The defaults encode the contract for `f64` (row sums within `1e-9`,
/// negativity clamp at `1e-12`); for wider-epsilon scalars they are floored
/// at a small multiple of the machine epsilon so that, e.g., an `f32`
/// uniform row still validates.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances<T> {
    /// Allowed deviation of a probability row sum from 1.
    pub row_sum: T,
    /// Magnitude below which a negative probability is treated as zero.
    pub nonneg: T,
    /// Condition-number estimate above which the interaction matrix is
    /// rejected as numerically singular.
    pub interaction_cond: T,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Tolerances {
            row_sum: T::c(1e-9).max(eps * T::c(64.0)),
            nonneg: T::c(1e-12).max(eps * T::c(16.0)),
            interaction_cond: T::c(1e12),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tolerances_match_f64_contract() {
        let tol = Tolerances::<f64>::default();
        assert_eq!(tol.row_sum, 1e-9);
        assert_eq!(tol.nonneg, 1e-12);
        assert_eq!(tol.interaction_cond, 1e12);
    }

    #[test]
    fn f32_tolerances_scale_with_epsilon() {
        let tol = Tolerances::<f32>::default();
        assert!(tol.row_sum >= f32::EPSILON);
        assert!(tol.row_sum < 1e-4);
    }
}
