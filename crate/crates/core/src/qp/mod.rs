//! The convex subproblem solved at every SQP iteration.
//!
//! Given `B ≻ 0`, a linear term and linearized constraints, the subproblem is
//!
//! ```text
//! min  M(d) = linearᵀd + ½dᵀBd + ‖h + J_hᵀd‖₁ + ‖max{0, -(g + J_gᵀd)}‖₁
//! ```
//!
//! which is the same problem as the smooth QP in `(d, y⁺, z⁺)` with
//! `y⁺ ≥ ±(h + J_hᵀd)`, `z⁺ ≥ 0`, `z⁺ ≥ -(g + J_gᵀd)`. The solution carries the
//! multipliers `(u, v, s, t)` of that smooth form, which satisfy
//! `linear + Bd + J_h(u - v) - J_g s = 0`, `u + v = 1`, `s + t = 1`.

mod active_set;
pub mod oracle;
pub mod random;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merit::{linearized_violation, violation};
use crate::Scalar;

pub use active_set::QpSolver;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QpInstance<T: Scalar> {
    #[serde(with = "crate::serde_la::vector")]
    pub linear: DVector<T>,
    #[serde(with = "crate::serde_la::matrix")]
    pub b: DMatrix<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub h: DVector<T>,
    /// `n × mE`.
    #[serde(with = "crate::serde_la::matrix")]
    pub jac_h: DMatrix<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub g: DVector<T>,
    /// `n × mI`.
    #[serde(with = "crate::serde_la::matrix")]
    pub jac_g: DMatrix<T>,
}

impl<T: Scalar> QpInstance<T> {
    /// The steering variant with a zero linear term.
    pub fn steering(
        b: DMatrix<T>,
        h: DVector<T>,
        jac_h: DMatrix<T>,
        g: DVector<T>,
        jac_g: DMatrix<T>,
    ) -> Self {
        let n = b.nrows();
        Self {
            linear: DVector::zeros(n),
            b,
            h,
            jac_h,
            g,
            jac_g,
        }
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn m_eq(&self) -> usize {
        self.h.len()
    }

    pub fn m_ineq(&self) -> usize {
        self.g.len()
    }

    /// Violation of the linearized constraints at `d = 0`.
    pub fn base_violation(&self) -> T {
        violation(&self.h, &self.g)
    }

    pub fn linearized_violation(&self, d: &DVector<T>) -> T {
        linearized_violation(&self.h, &self.g, &self.jac_h, &self.jac_g, d)
    }

    /// `M(d)`.
    pub fn model_value(&self, d: &DVector<T>) -> T {
        self.quadratic_part(d) + self.linearized_violation(d)
    }

    /// `linearᵀd + ½dᵀBd`.
    pub fn quadratic_part(&self, d: &DVector<T>) -> T {
        self.linear.dot(d) + T::lit(0.5) * d.dot(&(&self.b * d))
    }

    pub(crate) fn check_dimensions(&self) -> Result<(), QpError<T>> {
        let n = self.n();
        let ok = self.b.nrows() == n
            && self.b.ncols() == n
            && self.jac_h.nrows() == n
            && self.jac_h.ncols() == self.m_eq()
            && self.jac_g.nrows() == n
            && self.jac_g.ncols() == self.m_ineq();
        if ok {
            Ok(())
        } else {
            Err(QpError::Dimension(format!(
                "n = {n}, B {}x{}, J_h {}x{} with {} values, J_g {}x{} with {} values",
                self.b.nrows(),
                self.b.ncols(),
                self.jac_h.nrows(),
                self.jac_h.ncols(),
                self.m_eq(),
                self.jac_g.nrows(),
                self.jac_g.ncols(),
                self.m_ineq()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QpSolution<T: Scalar> {
    #[serde(with = "crate::serde_la::vector")]
    pub d: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub y_plus: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub z_plus: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub u: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub v: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub s: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub t: DVector<T>,
    /// `‖y⁺‖₁ + ‖z⁺‖₁ - c`, the change of the linearized violation.
    pub r: T,
    /// `‖linear + Bd + J_h(u - v) - J_g s‖∞`.
    pub kkt_residual: T,
    /// Set when the gradients of the constraints that are tight at `d` are
    /// linearly dependent, so `(u, v, s)` is one of several valid choices.
    pub nonunique_multipliers: bool,
    pub iterations: usize,
    /// Indices of tight constraints at the solution, equalities first.
    pub working_set: Vec<usize>,
}

impl<T: Scalar> QpSolution<T> {
    /// `v - u`, the equality multiplier estimate used by the outer method.
    pub fn mu(&self) -> DVector<T> {
        &self.v - &self.u
    }

    /// `s`, the inequality multiplier estimate.
    pub fn lambda(&self) -> DVector<T> {
        self.s.clone()
    }
}

#[derive(Debug, Clone, Error)]
pub enum QpError<T: Scalar> {
    #[error("subproblem matrix B is not positive definite")]
    NotPositiveDefinite,
    #[error("inconsistent subproblem dimensions: {0}")]
    Dimension(String),
    #[error("subproblem data is not finite")]
    NonFinite,
    #[error("singular working-set system: {0}")]
    Singular(String),
    #[error("active-set iteration limit ({iterations}) reached")]
    Cycling {
        iterations: usize,
        best: Box<QpSolution<T>>,
    },
    #[error("enumeration budget exceeded: {0} patterns")]
    Budget(u128),
}

/// Solves one subproblem from a cold start.
pub fn solve<T: Scalar>(instance: &QpInstance<T>) -> Result<QpSolution<T>, QpError<T>> {
    QpSolver::new().solve(instance)
}

/// Solves `min ½dᵀBd + c′(x; d)` from a cold start.
pub fn solve_steering<T: Scalar>(
    b: &DMatrix<T>,
    h: &DVector<T>,
    jac_h: &DMatrix<T>,
    g: &DVector<T>,
    jac_g: &DMatrix<T>,
) -> Result<QpSolution<T>, QpError<T>> {
    solve(&QpInstance::steering(
        b.clone(),
        h.clone(),
        jac_h.clone(),
        g.clone(),
        jac_g.clone(),
    ))
}

/// Constraints of an instance stacked as one list, equalities first.
///
/// Constraint `k` has residual `r_k(d) = c_k + a_kᵀd` and penalty `φ_k(r)`,
/// with `φ = |r|` for equalities and `φ = max{0, -r}` for inequalities.
/// Both are `max{lo·r, hi·r}` with `(lo, hi) = (-1, 1)` or `(-1, 0)`.
pub(crate) struct Stacked<T: Scalar> {
    pub a: DMatrix<T>,
    pub c: DVector<T>,
    pub m_eq: usize,
}

impl<T: Scalar> Stacked<T> {
    pub fn new(inst: &QpInstance<T>) -> Self {
        let n = inst.n();
        let (me, mi) = (inst.m_eq(), inst.m_ineq());
        let mut a = DMatrix::zeros(n, me + mi);
        a.columns_mut(0, me).copy_from(&inst.jac_h);
        a.columns_mut(me, mi).copy_from(&inst.jac_g);
        let mut c = DVector::zeros(me + mi);
        c.rows_mut(0, me).copy_from(&inst.h);
        c.rows_mut(me, mi).copy_from(&inst.g);
        Self { a, c, m_eq: me }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn lo(&self, _k: usize) -> T {
        -T::one()
    }

    pub fn hi(&self, k: usize) -> T {
        if k < self.m_eq {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn residuals(&self, d: &DVector<T>) -> DVector<T> {
        &self.c + self.a.tr_mul(d)
    }

    /// Assembles a full solution from `d` and the stacked subgradient
    /// weights `w` (clamped into `[lo, hi]` here).
    pub fn solution(
        &self,
        inst: &QpInstance<T>,
        d: DVector<T>,
        mut w: DVector<T>,
        working_set: Vec<usize>,
        iterations: usize,
        tight_tol: T,
    ) -> QpSolution<T> {
        let me = self.m_eq;
        let mi = self.len() - me;
        for k in 0..self.len() {
            w[k] = w[k].max(self.lo(k)).min(self.hi(k));
        }
        let half = T::lit(0.5);
        let u = DVector::from_iterator(me, (0..me).map(|k| (T::one() + w[k]) * half));
        let v = u.map(|ui| T::one() - ui);
        let s = DVector::from_iterator(mi, (0..mi).map(|k| -w[me + k]));
        let t = s.map(|si| T::one() - si);

        let res = self.residuals(&d);
        let y_plus = res.rows(0, me).abs();
        let z_plus = crate::neg_part(&res.rows(me, mi).into_owned());
        let r = crate::norm_1(&y_plus) + crate::norm_1(&z_plus) - inst.base_violation();

        let stat = &inst.linear + &inst.b * &d + &self.a * &w;
        let kkt_residual = crate::norm_inf(&stat);

        let tight: Vec<usize> = (0..self.len())
            .filter(|&k| res[k].abs() <= tight_tol)
            .collect();
        let nonunique = !columns_independent(&self.a, &tight, rank_tol::<T>());

        QpSolution {
            d,
            y_plus,
            z_plus,
            u,
            v,
            s,
            t,
            r,
            kkt_residual,
            nonunique_multipliers: nonunique,
            iterations,
            working_set,
        }
    }
}

/// Relative singular-value threshold below which columns count as dependent.
pub(crate) fn rank_tol<T: Scalar>() -> T {
    T::eps().sqrt()
}

pub(crate) fn columns_independent<T: Scalar>(a: &DMatrix<T>, cols: &[usize], tol: T) -> bool {
    if cols.is_empty() {
        return true;
    }
    if cols.len() > a.nrows() {
        return false;
    }
    let sub = a.select_columns(cols);
    let mut scale = T::zero();
    for j in 0..sub.ncols() {
        let nj = sub.column(j).norm();
        if nj == T::zero() {
            return false;
        }
        scale = scale.max(nj);
    }
    let sv = sub.svd(false, false).singular_values;
    let smin = sv.iter().fold(T::max_value().unwrap(), |m, &x| m.min(x));
    smin > tol * scale
}
