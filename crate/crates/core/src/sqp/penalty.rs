//! Penalty parameter update after an inner loop.

use crate::report::PenaltyBranch;
use crate::Scalar;

/// Function values at the inner-loop point and at the steered point.
#[derive(Debug, Clone, Copy)]
pub struct SteeredValues<T> {
    pub f_old: T,
    pub c_old: T,
    pub f_new: T,
    pub c_new: T,
}

/// Returns the next penalty parameter and the rule that produced it, or
/// `None` when the parameter stays (no steering step and a small inner step).
pub fn update_penalty<T: Scalar>(
    rho: T,
    steered: Option<SteeredValues<T>>,
    d_inner_norm: T,
    eps: T,
) -> Option<(T, PenaltyBranch)> {
    let three_halves = T::lit(1.5);
    match steered {
        Some(v) => {
            let p_old = rho * v.f_old + v.c_old;
            let p_new = rho * v.f_new + v.c_new;
            if p_new > p_old {
                let ratio = (v.c_old - v.c_new) / (v.f_new - v.f_old);
                if ratio.is_finite() && ratio > T::zero() {
                    Some(((T::lit(0.01) * rho).min(ratio), PenaltyBranch::Ratio))
                } else {
                    log::warn!("degenerate penalty ratio {ratio}; using 0.01·rho");
                    Some((T::lit(0.01) * rho, PenaltyBranch::Fallback))
                }
            } else {
                Some((
                    (T::lit(0.1) * rho).min(rho.powf(three_halves)),
                    PenaltyBranch::Steered,
                ))
            }
        }
        None if d_inner_norm > eps => Some((
            (T::lit(0.01) * rho).min(rho.powf(three_halves)),
            PenaltyBranch::InnerDirection,
        )),
        None => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_branch() {
        let v = SteeredValues {
            f_old: 0.0,
            c_old: 1.0,
            f_new: 10.0,
            c_new: 0.5,
        };
        assert_eq!(update_penalty(1.0, Some(v), 0.0, 1e-8), Some((0.01, PenaltyBranch::Ratio)));
        // Ratio smaller than 0.01ρ wins.
        let v = SteeredValues { f_new: 1000.0, ..v };
        let (rho, branch) = update_penalty(1.0, Some(v), 0.0, 1e-8).unwrap();
        assert_eq!(branch, PenaltyBranch::Ratio);
        assert!(f64::abs(rho - 5e-4) < 1e-18);
    }

    #[test]
    fn steered_without_increase() {
        let v = SteeredValues {
            f_old: 1.0,
            c_old: 1.0,
            f_new: 1.0,
            c_new: 0.5,
        };
        let (rho, branch) = update_penalty(0.01, Some(v), 0.0, 1e-8).unwrap();
        assert_eq!(branch, PenaltyBranch::Steered);
        assert!(f64::abs(rho - 0.001) < 1e-15);
        // Large parameters shrink by 10.
        assert_eq!(update_penalty(1000.0, Some(v), 0.0, 1e-8).unwrap().0, 100.0);
    }

    #[test]
    fn inner_direction_branch() {
        let (rho, branch) = update_penalty(1e-4, None, 1.0, 1e-8).unwrap();
        assert_eq!(branch, PenaltyBranch::InnerDirection);
        assert!(f64::abs(rho - 1e-6) < 1e-20);
        assert_eq!(update_penalty(1e-4, None, 1e-9, 1e-8), None);
    }

    #[test]
    fn degenerate_ratio_falls_back() {
        // Penalty rose through f alone while c did not change.
        let v = SteeredValues {
            f_old: 0.0,
            c_old: 1.0,
            f_new: 1.0,
            c_new: 1.0,
        };
        assert_eq!(
            update_penalty(1.0, Some(v), 0.0, 1e-8),
            Some((0.01, PenaltyBranch::Fallback))
        );
    }
}
