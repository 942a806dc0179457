//! Scalar abstraction shared by every numerical module.
//!
//! The filters, metrics and graph routines are written once against
//! [`Scalar`] and instantiated for `f64` (the default used by the simulator
//! and CLI) and `f32`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(sum(exp(x)))` over a slice. Entries equal to `-inf` contribute
/// nothing; an empty or all `-inf` slice yields `-inf`.
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == S::neg_infinity() {
        return max;
    }
    if max == S::infinity() {
        return max;
    }
    let acc: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + acc.ln()
}

/// Shift log-weights in place so that they exponentiate to a probability
/// vector. Returns the removed normalizer.
pub fn normalize_log<S: Scalar>(values: &mut [S]) -> S {
    let norm = log_sum_exp(values);
    for v in values.iter_mut() {
        *v -= norm;
    }
    norm
}
