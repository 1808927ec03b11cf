//! Stationarity measures and the classification of terminal points.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::nlp::{EvalError, Evaluation, Evaluator, NlpProblem};
use crate::scalar::{neg_part, norm_inf};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StationarityMeasures<T> {
    /// `‖ρ∇f - ∇h μ - ∇g λ‖∞`.
    pub e_dual: T,
    /// `max{‖μ∘h + |h|‖∞, ‖λ∘g + max{0,-g}‖∞}`.
    pub e_compl: T,
    /// `max{‖h‖∞, ‖max{0,-g}‖∞}`.
    pub e_feas: T,
}

/// Measures from an evaluation that carries derivatives.
pub fn measures_at<T: Scalar>(
    eval: &Evaluation<T>,
    mu: &DVector<T>,
    lambda: &DVector<T>,
    rho_prev: T,
) -> StationarityMeasures<T> {
    let der = eval.derivs();
    let dual = &der.grad_f * rho_prev - &der.jac_h * mu - &der.jac_g * lambda;
    let ch = mu.component_mul(&eval.h) + eval.h.abs();
    let cg = lambda.component_mul(&eval.g) + neg_part(&eval.g);
    StationarityMeasures {
        e_dual: norm_inf(&dual),
        e_compl: norm_inf(&ch).max(norm_inf(&cg)),
        e_feas: norm_inf(&eval.h).max(norm_inf(&neg_part(&eval.g))),
    }
}

/// Evaluates the problem at `x` (outside any solve's counters) and returns the measures.
pub fn measures<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x: &DVector<T>,
    mu: &DVector<T>,
    lambda: &DVector<T>,
    rho_prev: T,
) -> Result<StationarityMeasures<T>, EvalError> {
    let eval = Evaluator::new(problem).evaluate(x, true)?;
    Ok(measures_at(&eval, mu, lambda, rho_prev))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StationarityKind {
    #[serde(rename = "KKT")]
    Kkt,
    #[serde(rename = "DL-stationary")]
    DlStationary,
    #[serde(rename = "singular-stationary")]
    SingularStationary,
    #[serde(rename = "DZ-stationary")]
    DzStationary,
    #[serde(rename = "unclassified")]
    Unclassified,
}

impl fmt::Display for StationarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kkt => "KKT",
            Self::DlStationary => "DL-stationary",
            Self::SingularStationary => "singular-stationary",
            Self::DzStationary => "DZ-stationary",
            Self::Unclassified => "unclassified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Classification<T> {
    pub kind: StationarityKind,
    pub rho_final: T,
    pub feasible: bool,
    /// Whether the penalty parameter was judged to have gone to zero.
    pub rho_vanished: bool,
}

/// Thresholds used by [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassifyThresholds<T> {
    /// `e_feas ≤ feas_tol` counts as feasible.
    pub feas_tol: T,
    /// `ρ ≤ rho_min` always counts as vanished.
    pub rho_min: T,
    pub rho0: T,
    /// `ρ` also counts as vanished once it has dropped this many decades
    /// below `rho0` while `e_feas` stopped changing.
    pub decay_decades: T,
    /// Relative change of `e_feas` between the last two records that counts
    /// as stalled.
    pub stall_tol: T,
}

/// Labels a terminal point.
///
/// `feas_history` holds `e_feas` of the recorded outer iterates, oldest first.
/// Unconverged runs are always [`StationarityKind::Unclassified`].
pub fn classify<T: Scalar>(
    m: &StationarityMeasures<T>,
    rho_final: T,
    converged: bool,
    feas_history: &[T],
    th: &ClassifyThresholds<T>,
) -> Classification<T> {
    let feasible = m.e_feas <= th.feas_tol;
    let stalled = match feas_history {
        [.., prev, last] => (*last - *prev).abs() <= th.stall_tol * T::one().max(last.abs()),
        _ => false,
    };
    let decayed = rho_final <= th.rho0 * T::lit(10.0).powf(-th.decay_decades);
    let rho_vanished = rho_final <= th.rho_min || (decayed && stalled);
    let kind = match (converged, feasible, rho_vanished) {
        (false, _, _) => StationarityKind::Unclassified,
        (true, true, false) => StationarityKind::Kkt,
        (true, false, false) => StationarityKind::DlStationary,
        (true, true, true) => StationarityKind::SingularStationary,
        (true, false, true) => StationarityKind::DzStationary,
    };
    Classification {
        kind,
        rho_final,
        feasible,
        rho_vanished,
    }
}

/// Result of [`active_set_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Certificate<T: Scalar> {
    pub active_eq: Vec<usize>,
    pub active_ineq: Vec<usize>,
    /// Least-squares multipliers, equalities first.
    #[serde(with = "crate::serde_la::vector")]
    pub multipliers: DVector<T>,
    /// `min ‖∇f - A w‖∞` over the active gradients `A`, or `‖∇c‖∞` when the
    /// point is infeasible with nothing active.
    pub residual: T,
    /// Set for infeasible points with an empty active set.
    pub violation_interior: bool,
}

/// Checks whether `x` is stationary for `min f` subject to the constraints
/// that are active (`|value| ≤ tol`) at `x`, holding them as equalities.
pub fn active_set_certificate<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x: &DVector<T>,
    tol: T,
) -> Result<Certificate<T>, EvalError> {
    let eval = Evaluator::new(problem).evaluate(x, true)?;
    let der = eval.derivs();
    let active_eq: Vec<usize> = (0..eval.h.len()).filter(|&i| eval.h[i].abs() <= tol).collect();
    let active_ineq: Vec<usize> = (0..eval.g.len()).filter(|&i| eval.g[i].abs() <= tol).collect();
    let infeasible = eval.h.iter().any(|v| v.abs() > tol) || eval.g.iter().any(|v| *v < -tol);

    if active_eq.is_empty() && active_ineq.is_empty() {
        let residual = if infeasible {
            let mut grad_c = DVector::zeros(x.len());
            for i in 0..eval.h.len() {
                if eval.h[i] != T::zero() {
                    grad_c.axpy(eval.h[i].signum(), &der.jac_h.column(i), T::one());
                }
            }
            for i in 0..eval.g.len() {
                if eval.g[i] < T::zero() {
                    grad_c.axpy(-T::one(), &der.jac_g.column(i), T::one());
                }
            }
            norm_inf(&grad_c)
        } else {
            norm_inf(&der.grad_f)
        };
        return Ok(Certificate {
            active_eq,
            active_ineq,
            multipliers: DVector::zeros(0),
            residual,
            violation_interior: infeasible,
        });
    }

    let n = x.len();
    let k = active_eq.len() + active_ineq.len();
    let mut a = DMatrix::zeros(n, k);
    for (j, &i) in active_eq.iter().enumerate() {
        a.set_column(j, &der.jac_h.column(i));
    }
    for (j, &i) in active_ineq.iter().enumerate() {
        a.set_column(active_eq.len() + j, &der.jac_g.column(i));
    }
    let svd = a.clone().svd(true, true);
    let w = svd
        .solve(&der.grad_f, T::eps() * T::lit(1e2))
        .unwrap_or_else(|_| DVector::zeros(k));
    let residual = norm_inf(&(&der.grad_f - &a * &w));
    Ok(Certificate {
        active_eq,
        active_ineq,
        multipliers: w,
        residual,
        violation_interior: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::FnProblem;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn tp1() -> FnProblem<f64> {
        FnProblem::new("tp1", 2)
            .objective(|x| x[0] + x[1], |_| dvector![1.0, 1.0])
            .inequalities(
                2,
                |x: &DVector<f64>| dvector![x[1] - x[0] * x[0] - 1.0, 0.3 * (1.0 - x[1].exp())],
                |x: &DVector<f64>| dmatrix![-2.0 * x[0], 0.0; 1.0, -0.3 * x[1].exp()],
            )
    }

    fn thresholds() -> ClassifyThresholds<f64> {
        ClassifyThresholds {
            feas_tol: 1e-6,
            rho_min: 1e-12,
            rho0: 1.0,
            decay_decades: 6.0,
            stall_tol: 1e-6,
        }
    }

    #[test]
    fn tp1_start_measures() {
        let m = measures(&tp1(), &dvector![3.0, 2.0], &DVector::zeros(0), &dvector![1.0, 1.0], 1.0)
            .unwrap();
        assert_eq!(m.e_feas, 8.0);
        assert_eq!(m.e_compl, 0.0);
        assert!((m.e_dual - 7.0).abs() < 1e-12);
    }

    #[test]
    fn exact_kkt_point_has_zero_measures() {
        // min x² + 4x  s.t.  x - 1 = 0, solution x = 1 with μ = 6.
        let p = FnProblem::new("ex", 1)
            .objective(|x| x[0] * x[0] + 4.0 * x[0], |x| dvector![2.0 * x[0] + 4.0])
            .equalities(1, |x| dvector![x[0] - 1.0], |_| dmatrix![1.0]);
        let m = measures(&p, &dvector![1.0], &dvector![6.0], &DVector::zeros(0), 1.0).unwrap();
        assert_eq!((m.e_dual, m.e_compl, m.e_feas), (0.0, 0.0, 0.0));
    }

    #[test]
    fn classification_table() {
        let th = thresholds();
        let m = |e_feas| StationarityMeasures {
            e_dual: 0.0,
            e_compl: 0.0,
            e_feas,
        };
        let c = classify(&m(0.5), 0.01, true, &[120.0, 21.7, 0.5], &th);
        assert_eq!(c.kind, StationarityKind::DlStationary);
        let c = classify(&m(6.5e-20), 1e-30, true, &[1e-19, 6.5e-20], &th);
        assert_eq!(c.kind, StationarityKind::SingularStationary);
        let c = classify(&m(0.5155), 1e-9, true, &[0.5155, 0.5155], &th);
        assert_eq!(c.kind, StationarityKind::DzStationary);
        let c = classify(&m(0.0), 0.1, true, &[0.0], &th);
        assert_eq!(c.kind, StationarityKind::Kkt);
        let c = classify(&m(0.0), 0.1, false, &[0.0], &th);
        assert_eq!(c.kind, StationarityKind::Unclassified);
        // Decay without a stalled violation is not enough.
        let c = classify(&m(0.6), 1e-9, true, &[1.0, 0.6], &th);
        assert_eq!(c.kind, StationarityKind::DlStationary);
    }

    #[test]
    fn certificate_on_least_violation_point() {
        let p = FnProblem::<f64>::new("ex23", 2)
            .objective(|x| x[0] * x[0] + x[1] * x[1], |x| dvector![2.0 * x[0], 2.0 * x[1]])
            .inequalities(
                2,
                |x| dvector![-x[0] - x[1] + 1.0, x[0] + x[1] - 2.0],
                |_| dmatrix![-1.0, 1.0; -1.0, 1.0],
            );
        let cert = active_set_certificate(&p, &dvector![0.5, 0.5], 1e-6).unwrap();
        assert_eq!(cert.active_ineq, vec![0]);
        assert!(cert.residual < 1e-12);
        assert!((cert.multipliers[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_interior_violation() {
        let cert = active_set_certificate(&tp1(), &dvector![3.0, 2.0], 1e-6).unwrap();
        assert!(cert.violation_interior);
        // ∇c = -∇g₁ - ∇g₂ = (6, -1) + (0, 0.3e²)
        assert!((cert.residual - 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn dual_measure_is_homogeneous(a in 0.1..10.0f64, x0 in -3.0..3.0f64, x1 in -3.0..3.0f64,
                                       l0 in 0.0..2.0f64, l1 in 0.0..2.0f64) {
            let p = tp1();
            let x = dvector![x0, x1];
            let lam = dvector![l0, l1];
            let none = DVector::zeros(0);
            let base = measures(&p, &x, &none, &lam, 0.7).unwrap();
            let scaled = measures(&p, &x, &none, &(&lam * a), 0.7 * a).unwrap();
            prop_assert!((scaled.e_dual - a * base.e_dual).abs() <= 1e-12 * (1.0 + scaled.e_dual));
            prop_assert_eq!(scaled.e_feas, base.e_feas);
        }

        #[test]
        fn complementarity_vanishes_for_sign_multipliers(x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
            let p = tp1();
            let x = dvector![x0, x1];
            let g = p.ineq_values(&x);
            // λᵢ gᵢ = -max{0, -gᵢ}: λ = 1 on violated rows, 0 elsewhere.
            let lam = g.map(|v| if v < 0.0 { 1.0 } else { 0.0 });
            let m = measures(&p, &x, &DVector::zeros(0), &lam, 1.0).unwrap();
            prop_assert_eq!(m.e_compl, 0.0);
        }

        #[test]
        fn classify_is_total_and_pure(e in 0.0..1.0f64, rho in 1e-14..1.0f64) {
            let th = thresholds();
            let m = StationarityMeasures { e_dual: 0.0, e_compl: 0.0, e_feas: e };
            let a = classify(&m, rho, true, &[e], &th);
            let b = classify(&m, rho, true, &[e], &th);
            prop_assert_eq!(a, b);
            prop_assert!(a.kind != StationarityKind::Unclassified);
            prop_assert_eq!(a.feasible, e <= th.feas_tol);
            let feasible_kind = matches!(a.kind, StationarityKind::Kkt | StationarityKind::SingularStationary);
            prop_assert_eq!(feasible_kind, a.feasible);
        }
    }
}
