//! Positive definite matrices for the subproblems.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{all_finite_mat, symmetrize};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// `B = I` throughout.
    Identity,
    /// Powell-damped BFGS on the penalty Lagrangian, reset to `I` when ρ changes.
    #[default]
    #[serde(alias = "bfgs")]
    DampedBfgs,
    /// Exact penalty Lagrangian Hessian plus the smallest shift `ξI` that
    /// makes it positive definite.
    Exact,
}

impl fmt::Display for HessianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HessianMode::Identity => "identity",
            HessianMode::DampedBfgs => "bfgs",
            HessianMode::Exact => "exact",
        })
    }
}

impl FromStr for HessianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(HessianMode::Identity),
            "bfgs" | "damped_bfgs" => Ok(HessianMode::DampedBfgs),
            "exact" => Ok(HessianMode::Exact),
            other => Err(format!(
                "unknown Hessian mode `{other}` (expected identity, bfgs or exact)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HessianError {
    #[error("exact Hessian mode needs second derivatives: {0}")]
    Capability(String),
    #[error("no shift up to {0:e} makes the Hessian positive definite")]
    Regularization(f64),
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::max_value().unwrap(), |a, &b| a.min(b))
}

/// Whether `m` factors and its spectrum stays above `floor`.
pub fn is_positive_definite<T: Scalar>(m: &DMatrix<T>, floor: T) -> bool {
    all_finite_mat(m) && Cholesky::new(m.clone()).is_some() && min_eigenvalue(m) >= floor
}

/// Powell-damped BFGS update with step `s` and gradient change `y`.
///
/// Returns `b` unchanged when the step is negligible or the update loses
/// positive definiteness in floating point.
pub fn damped_bfgs<T: Scalar>(b: &DMatrix<T>, s: &DVector<T>, y: &DVector<T>, floor: T) -> DMatrix<T> {
    if s.norm() < T::lit(1e-14) {
        return b.clone();
    }
    let bs = b * s;
    let sbs = s.dot(&bs);
    if sbs.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return b.clone();
    }
    let sy = s.dot(y);
    let theta = if sy >= T::lit(0.2) * sbs {
        T::one()
    } else {
        T::lit(0.8) * sbs / (sbs - sy)
    };
    let r = y * theta + &bs * (T::one() - theta);
    let sr = s.dot(&r);
    let mut next = b - (&bs * bs.transpose()) / sbs + (&r * r.transpose()) / sr;
    symmetrize(&mut next);
    if is_positive_definite(&next, floor) {
        next
    } else {
        b.clone()
    }
}

/// Adds `ξI` with the smallest `ξ ∈ {0, 1e-8, 1e-6, 1e-4, …}` so that the
/// result is positive definite with eigenvalues at least `floor`.
pub fn regularize<T: Scalar>(h: &DMatrix<T>, floor: T) -> Result<(DMatrix<T>, T), HessianError> {
    let n = h.nrows();
    let mut sym = h.clone();
    symmetrize(&mut sym);
    if !all_finite_mat(&sym) {
        return Err(HessianError::Regularization(0.0));
    }
    let mut xi = T::zero();
    let cap = T::lit(1e20);
    loop {
        let shifted = &sym + DMatrix::identity(n, n) * xi;
        if is_positive_definite(&shifted, floor) {
            return Ok((shifted, xi));
        }
        xi = if xi == T::zero() { T::lit(1e-8) } else { xi * T::lit(100.0) };
        if xi > cap {
            return Err(HessianError::Regularization(cap.as_f64()));
        }
    }
}

/// One update of `B` in the given mode.
///
/// `exact` is the penalty Lagrangian Hessian at the new point and is only
/// read in [`HessianMode::Exact`].
pub fn hessian_update<T: Scalar>(
    mode: HessianMode,
    b_prev: &DMatrix<T>,
    step: &DVector<T>,
    grad_change: &DVector<T>,
    exact: Option<&DMatrix<T>>,
    lambda_floor: T,
) -> Result<DMatrix<T>, HessianError> {
    let n = b_prev.nrows();
    match mode {
        HessianMode::Identity => Ok(DMatrix::identity(n, n)),
        HessianMode::DampedBfgs => Ok(damped_bfgs(b_prev, step, grad_change, lambda_floor)),
        HessianMode::Exact => {
            let h = exact.ok_or_else(|| HessianError::Capability("no Hessian supplied".into()))?;
            regularize(h, lambda_floor).map(|(b, _)| b)
        }
    }
}
