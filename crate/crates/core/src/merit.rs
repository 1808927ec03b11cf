//! The ℓ1 violation measure, the penalty merit function and their linearizations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::scalar::{neg_part, norm_1};
use crate::Scalar;

/// Merit data at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MeritSnapshot<T> {
    pub f: T,
    /// ℓ1 violation `c(x)`.
    pub c: T,
    pub rho: T,
    /// `rho * f + c`.
    pub p: T,
}

impl<T: Scalar> MeritSnapshot<T> {
    pub fn new(rho: T, f: T, c: T) -> Self {
        Self {
            f,
            c,
            rho,
            p: penalty_value(rho, f, c),
        }
    }
}

/// Slack variables lifted from constraint values: `y = |h|`, `z = max{0, -g}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SlackPair<T: Scalar> {
    #[serde(with = "crate::serde_la::vector")]
    pub y: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub z: DVector<T>,
}

impl<T: Scalar> SlackPair<T> {
    /// `‖y‖₁ + ‖z‖₁`, which equals the violation of the lifted point.
    pub fn total(&self) -> T {
        norm_1(&self.y) + norm_1(&self.z)
    }
}

/// `c = ‖h‖₁ + ‖max{0, -g}‖₁`.
pub fn violation<T: Scalar>(h: &DVector<T>, g: &DVector<T>) -> T {
    norm_1(h) + norm_1(&neg_part(g))
}

pub fn penalty_value<T: Scalar>(rho: T, f: T, c: T) -> T {
    rho * f + c
}

/// `c′(x; d) = ‖h + J_hᵀd‖₁ + ‖max{0, -(g + J_gᵀd)}‖₁`.
pub fn linearized_violation<T: Scalar>(
    h: &DVector<T>,
    g: &DVector<T>,
    jac_h: &DMatrix<T>,
    jac_g: &DMatrix<T>,
    d: &DVector<T>,
) -> T {
    let hl = h + jac_h.tr_mul(d);
    let gl = g + jac_g.tr_mul(d);
    violation(&hl, &gl)
}

pub fn slack_lift<T: Scalar>(h: &DVector<T>, g: &DVector<T>) -> SlackPair<T> {
    SlackPair {
        y: h.abs(),
        z: neg_part(g),
    }
}

/// `ρ ∇fᵀd + r`, the directional derivative estimate of the penalty function
/// along a QP direction whose model violation change is `r`.
pub fn directional_derivative<T: Scalar>(rho: T, grad_f: &DVector<T>, d: &DVector<T>, r: T) -> T {
    rho * grad_f.dot(d) + r
}
