//! Backtracking searches on the penalty function and on the violation.

use nalgebra::DVector;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LineSearchError<E> {
    #[error("no acceptable step after {0} backtracks")]
    Exhausted(usize),
    #[error("direction is not a descent direction (slope {0})")]
    NotDescent(f64),
    #[error(transparent)]
    Eval(E),
}

/// Accepted step of a backtracking search.
#[derive(Debug, Clone)]
pub struct Accepted<T, X> {
    pub alpha: T,
    pub value: T,
    /// Whatever the merit closure produced alongside the value.
    pub extra: X,
    pub backtracks: usize,
}

/// Finds the largest `α ∈ {1, τ, τ², …}` with
/// `φ(x + αd) - φ(x) ≤ σ α slope`, trying at most `max_backtracks + 1` steps.
///
/// `merit` returns the merit value at a trial point together with any data
/// the caller wants to keep for the accepted point.
#[allow(clippy::too_many_arguments)]
pub fn armijo_search<T, X, E, F>(
    mut merit: F,
    x: &DVector<T>,
    d: &DVector<T>,
    value_at_x: T,
    slope: T,
    sigma: T,
    tau: T,
    max_backtracks: usize,
) -> Result<Accepted<T, X>, LineSearchError<E>>
where
    T: Scalar,
    F: FnMut(&DVector<T>) -> Result<(T, X), E>,
{
    if slope.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Less) {
        return Err(LineSearchError::NotDescent(slope.as_f64()));
    }
    let mut alpha = T::one();
    for backtracks in 0..=max_backtracks {
        let trial = x + d * alpha;
        let (value, extra) = merit(&trial).map_err(LineSearchError::Eval)?;
        if value - value_at_x <= sigma * alpha * slope {
            return Ok(Accepted {
                alpha,
                value,
                extra,
                backtracks,
            });
        }
        alpha *= tau;
    }
    Err(LineSearchError::Exhausted(max_backtracks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn quad(x: &DVector<f64>) -> Result<(f64, ()), ()> {
        Ok((x[0] * x[0], ()))
    }

    #[test]
    fn full_step_on_parabola() {
        let acc = armijo_search(quad, &dvector![1.0], &dvector![-1.0], 1.0, -2.0, 0.01, 0.5, 50).unwrap();
        assert_eq!(acc.alpha, 1.0);
        assert_eq!(acc.backtracks, 0);
    }

    #[test]
    fn linear_merit_accepts_full_step() {
        let lin = |x: &DVector<f64>| -> Result<(f64, ()), ()> { Ok((3.0 * x[0], ())) };
        let acc = armijo_search(lin, &dvector![0.0], &dvector![-1.0], 0.0, -3.0, 0.99, 0.5, 5).unwrap();
        assert_eq!(acc.alpha, 1.0);
    }

    #[test]
    fn overshooting_step_backtracks() {
        // From x = 1 along d = -4 the full step lands at 9.
        let acc = armijo_search(quad, &dvector![1.0], &dvector![-4.0], 1.0, -8.0, 0.01, 0.5, 50).unwrap();
        assert_eq!(acc.alpha, 0.25);
        assert_eq!(acc.value, 0.0);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        let r = armijo_search(quad, &dvector![1.0], &dvector![1.0], 1.0, 2.0, 0.01, 0.5, 50);
        assert!(matches!(r, Err(LineSearchError::NotDescent(_))));
    }

    #[test]
    fn exhaustion_is_reported() {
        let flat = |_: &DVector<f64>| -> Result<(f64, ()), ()> { Ok((1.0, ())) };
        let r = armijo_search(flat, &dvector![0.0], &dvector![1.0], 1.0, -1.0, 0.01, 0.5, 3);
        assert_eq!(r.unwrap_err(), LineSearchError::Exhausted(3));
    }
}
