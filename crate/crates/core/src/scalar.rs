//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the solver can run in: `f32` or `f64`.
///
/// Everything in the solver is written against this trait; [`crate::Real`] is
/// the double-precision default used by the registry, the CLI and the tests.
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Display
    + LowerExp
    + Debug
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts a literal, rounding to the nearest representable value.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    /// Machine epsilon of the type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// Lossy conversion to `f64` for printing and serialization helpers.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Infinity norm; zero for empty vectors.
pub fn norm_inf<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// One norm; zero for empty vectors.
pub fn norm_1<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + x.abs())
}

/// Componentwise `max{0, -v}`.
pub fn neg_part<T: Scalar>(v: &DVector<T>) -> DVector<T> {
    v.map(|x| (-x).max(T::zero()))
}

pub(crate) fn all_finite_vec<T: Scalar>(v: &DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn all_finite_mat<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Symmetrizes in place as `(M + Mᵀ)/2`.
pub(crate) fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Formats a vector as `(a, b, c)` for error messages.
pub(crate) fn fmt_vec<T: Scalar>(v: &DVector<T>) -> String {
    // Shortest round-trip digits; exponent form outside [1e-3, 1e7).
    let parts: Vec<String> = v
        .iter()
        .map(|&x| {
            let a = x.abs();
            if a == T::zero() || (a >= T::lit(1e-3) && a < T::lit(1e7)) || !x.is_finite() {
                format!("{x}")
            } else {
                format!("{x:e}")
            }
        })
        .collect();
    format!("({})", parts.join(", "))
}
