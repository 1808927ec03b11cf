//! Primal active-set method on the piecewise quadratic model.
//!
//! Each constraint sits on one side of its kink (`r > 0` or `r < 0`, where the
//! penalty is linear) or in the working set (`r = 0` enforced). With the sides
//! fixed the model is a smooth equality-constrained QP; its multipliers say
//! which working constraint should leave and in which direction. The slacks
//! `y⁺`, `z⁺` never appear explicitly.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{columns_independent, rank_tol, QpError, QpInstance, QpSolution, Stacked};
use crate::scalar::{all_finite_mat, all_finite_vec, norm_inf};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Pos,
    Neg,
    Kink,
}

/// Reusable solver that warm-starts each solve from the previous working set.
#[derive(Debug, Clone)]
pub struct QpSolver<T: Scalar> {
    /// Target for the stationarity residual of the returned solution.
    pub kkt_tol: T,
    /// Iteration cap; `None` means `50·(n + m) + 100`.
    pub max_iterations: Option<usize>,
    warm: Option<Vec<usize>>,
}

impl<T: Scalar> Default for QpSolver<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> QpSolver<T> {
    pub fn new() -> Self {
        Self {
            kkt_tol: T::lit(1e-10).max(T::eps() * T::lit(1e3)),
            max_iterations: None,
            warm: None,
        }
    }

    /// Forgets the stored working set.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, inst: &QpInstance<T>) -> Result<QpSolution<T>, QpError<T>> {
        let warm = self.warm.take();
        let sol = run(inst, warm.as_deref(), self.max_iterations)?;
        if sol.kkt_residual > self.kkt_tol {
            log::debug!(
                "subproblem stationarity residual {} above {}",
                sol.kkt_residual,
                self.kkt_tol
            );
        }
        self.warm = Some(sol.working_set.clone());
        Ok(sol)
    }
}

struct Tolerances<T> {
    /// A residual this small counts as zero.
    tight: T,
    /// Multipliers may exceed their interval by this much.
    mult: T,
    /// Step length below which the region minimizer is considered reached.
    step: T,
    /// Relative threshold for a constraint to react to a step.
    slope: T,
}

impl<T: Scalar> Tolerances<T> {
    fn new(inst: &QpInstance<T>, st: &Stacked<T>) -> Self {
        let eps = T::eps();
        let scale = T::one() + norm_inf(&st.c) + norm_inf(&inst.linear);
        Self {
            tight: T::lit(1e3) * eps * scale,
            mult: eps.powf(T::lit(0.6)),
            step: T::lit(1e3) * eps,
            slope: T::lit(1e3) * eps,
        }
    }
}

/// Solves `min g0ᵀd + ½dᵀBd  s.t.  a_kᵀd = -c_k, k ∈ W` through the KKT system.
fn solve_eqp<T: Scalar>(
    b: &DMatrix<T>,
    g0: &DVector<T>,
    st: &Stacked<T>,
    work: &[usize],
) -> Option<(DVector<T>, DVector<T>)> {
    let n = b.nrows();
    let w = work.len();
    let mut kkt = DMatrix::zeros(n + w, n + w);
    kkt.view_mut((0, 0), (n, n)).copy_from(b);
    let mut rhs = DVector::zeros(n + w);
    rhs.rows_mut(0, n).copy_from(&(-g0));
    for (j, &k) in work.iter().enumerate() {
        let col = st.a.column(k);
        kkt.view_mut((0, n + j), (n, 1)).copy_from(&col);
        kkt.view_mut((n + j, 0), (1, n)).copy_from(&col.transpose());
        rhs[n + j] = -st.c[k];
    }
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    if !all_finite_vec(&sol) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, w).into_owned()))
}

fn slope<T: Scalar>(st: &Stacked<T>, side: Side, k: usize) -> T {
    match side {
        Side::Pos => st.hi(k),
        Side::Neg => st.lo(k),
        Side::Kink => T::zero(),
    }
}

fn reduced_gradient<T: Scalar>(inst: &QpInstance<T>, st: &Stacked<T>, sides: &[Side]) -> DVector<T> {
    let mut g0 = inst.linear.clone();
    for (k, &side) in sides.iter().enumerate() {
        let sl = slope(st, side, k);
        if sl != T::zero() {
            g0.axpy(sl, &st.a.column(k), T::one());
        }
    }
    g0
}

/// Assigns sides from the residual signs at `d`, adding near-zero residuals to
/// the working set while their gradients stay independent.
fn assign_sides<T: Scalar>(
    st: &Stacked<T>,
    d: &DVector<T>,
    work: &mut Vec<usize>,
    sides: &mut [Side],
    tol: &Tolerances<T>,
) {
    let res = st.residuals(d);
    for k in 0..st.len() {
        if work.contains(&k) {
            sides[k] = Side::Kink;
            continue;
        }
        if res[k].abs() <= tol.tight {
            let mut trial = work.clone();
            trial.push(k);
            if columns_independent(&st.a, &trial, rank_tol::<T>()) {
                work.push(k);
                sides[k] = Side::Kink;
                continue;
            }
        }
        sides[k] = if res[k] >= T::zero() { Side::Pos } else { Side::Neg };
    }
}

fn run<T: Scalar>(
    inst: &QpInstance<T>,
    warm: Option<&[usize]>,
    max_iterations: Option<usize>,
) -> Result<QpSolution<T>, QpError<T>> {
    inst.check_dimensions()?;
    if !(all_finite_mat(&inst.b)
        && all_finite_vec(&inst.linear)
        && all_finite_vec(&inst.h)
        && all_finite_vec(&inst.g)
        && all_finite_mat(&inst.jac_h)
        && all_finite_mat(&inst.jac_g))
    {
        return Err(QpError::NonFinite);
    }
    if Cholesky::new(inst.b.clone()).is_none() {
        return Err(QpError::NotPositiveDefinite);
    }

    let n = inst.n();
    let st = Stacked::new(inst);
    let m = st.len();
    let tol = Tolerances::new(inst, &st);
    let max_iter = max_iterations.unwrap_or(50 * (n + m) + 100);
    let stall_limit = 3 * (n + m);

    let mut d = DVector::zeros(n);
    let mut work: Vec<usize> = Vec::new();
    let mut sides = vec![Side::Pos; m];

    if let Some(prev) = warm {
        let mut cand_work: Vec<usize> = Vec::new();
        for &k in prev.iter().filter(|&&k| k < m) {
            cand_work.push(k);
            if !columns_independent(&st.a, &cand_work, rank_tol::<T>()) {
                cand_work.pop();
            }
        }
        if !cand_work.is_empty() {
            let mut cand_sides = vec![Side::Pos; m];
            let res0 = st.residuals(&d);
            for k in 0..m {
                cand_sides[k] = if cand_work.contains(&k) {
                    Side::Kink
                } else if res0[k] >= T::zero() {
                    Side::Pos
                } else {
                    Side::Neg
                };
            }
            let g0 = reduced_gradient(inst, &st, &cand_sides);
            if let Some((dc, _)) = solve_eqp(&inst.b, &g0, &st, &cand_work) {
                if inst.model_value(&dc) < inst.model_value(&d) {
                    d = dc;
                    work = cand_work;
                }
            }
        }
    }
    assign_sides(&st, &d, &mut work, &mut sides, &tol);

    let mut best_m = inst.model_value(&d);
    let mut stalled = 0usize;
    let mut last_nu = DVector::zeros(work.len());
    // Blockers whose gradients the working set already spans (numerically).
    // They cannot join, so they are left out of the ratio test until the
    // working set changes; otherwise a zero step would repeat forever.
    let mut spanned: Vec<usize> = Vec::new();

    for iter in 1..=max_iter {
        let g0 = reduced_gradient(inst, &st, &sides);
        let (target, nu) = solve_eqp(&inst.b, &g0, &st, &work)
            .ok_or_else(|| QpError::Singular(format!("working set {work:?}")))?;
        last_nu = nu.clone();
        let p = &target - &d;
        let bland = stalled >= stall_limit;

        if norm_inf(&p) <= tol.step * (T::one() + norm_inf(&d)) {
            d = target;
            // Most violated multiplier interval (lowest index under Bland's rule).
            let mut leave: Option<(usize, T)> = None;
            for (j, &k) in work.iter().enumerate() {
                let excess = (nu[j] - st.hi(k)).max(st.lo(k) - nu[j]);
                if excess <= tol.mult {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((jl, el)) => {
                        if bland {
                            k < work[jl]
                        } else {
                            excess > el
                        }
                    }
                };
                if better {
                    leave = Some((j, excess));
                }
            }
            match leave {
                None => {
                    return Ok(finish(inst, &st, d, &work, &nu, &sides, iter, &tol));
                }
                Some((j, _)) => {
                    spanned.clear();
                    let k = work.remove(j);
                    sides[k] = if nu[j] > st.hi(k) { Side::Pos } else { Side::Neg };
                    stalled += 1;
                    continue;
                }
            }
        }

        // Ratio test over constraints off the working set.
        let res = st.residuals(&d);
        let pnorm = p.norm();
        let mut alpha = T::one();
        let mut blocker: Option<usize> = None;
        for k in 0..m {
            if sides[k] == Side::Kink || spanned.contains(&k) {
                continue;
            }
            let ak = st.a.column(k);
            let rate = ak.dot(&p);
            if rate.abs() <= tol.slope * ak.norm() * pnorm {
                continue;
            }
            let ak_step = match sides[k] {
                Side::Pos if rate < T::zero() => res[k].max(T::zero()) / -rate,
                Side::Neg if rate > T::zero() => (-res[k]).max(T::zero()) / rate,
                _ => continue,
            };
            if ak_step < alpha {
                alpha = ak_step;
                blocker = Some(k);
            }
        }
        d.axpy(alpha, &p, T::one());

        if let Some(k) = blocker {
            let mut trial = work.clone();
            trial.push(k);
            if columns_independent(&st.a, &trial, rank_tol::<T>()) {
                work.push(k);
                sides[k] = Side::Kink;
                spanned.clear();
            } else {
                spanned.push(k);
            }
        }

        let m_now = inst.model_value(&d);
        if m_now < best_m - T::eps() * (T::one() + best_m.abs()) {
            best_m = m_now;
            stalled = 0;
        } else {
            stalled += 1;
        }
    }

    let mut padded = DVector::zeros(work.len());
    for j in 0..work.len().min(last_nu.len()) {
        padded[j] = last_nu[j];
    }
    let best = finish(inst, &st, d, &work, &padded, &sides, max_iter, &tol);
    Err(QpError::Cycling {
        iterations: max_iter,
        best: Box::new(best),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    inst: &QpInstance<T>,
    st: &Stacked<T>,
    d: DVector<T>,
    work: &[usize],
    nu: &DVector<T>,
    sides: &[Side],
    iterations: usize,
    tol: &Tolerances<T>,
) -> QpSolution<T> {
    let m = st.len();
    let mut w = DVector::zeros(m);
    for k in 0..m {
        w[k] = slope(st, sides[k], k);
    }
    for (j, &k) in work.iter().enumerate() {
        w[k] = nu[j];
    }
    let mut ws = work.to_vec();
    ws.sort_unstable();
    st.solution(inst, d, w, ws, iterations, tol.tight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve, solve_steering};
    use nalgebra::{dmatrix, dvector};

    fn none() -> (DVector<f64>, DMatrix<f64>) {
        (DVector::zeros(0), DMatrix::zeros(1, 0))
    }

    #[test]
    fn kkt_point_of_shifted_parabola() {
        let (g, jg) = none();
        let inst = QpInstance {
            linear: dvector![0.6],
            b: dmatrix![1.0],
            h: dvector![0.0],
            jac_h: dmatrix![1.0],
            g,
            jac_g: jg,
        };
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.d[0], 0.0);
        assert_eq!(sol.r, 0.0);
        assert!((sol.u[0] + sol.v[0] - 1.0).abs() < 1e-15);
        // 0.6 + (u - v) = 0
        assert!((sol.u[0] - sol.v[0] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn steering_cancels_affine_residual() {
        let (g, jg) = none();
        let sol = solve_steering(&dmatrix![1.0], &dvector![1.0], &dmatrix![1.0], &g, &jg).unwrap();
        assert!((sol.d[0] + 1.0).abs() < 1e-12);
        assert!((sol.r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn steering_at_violation_stationary_point() {
        let sol = solve_steering(
            &dmatrix![1.0],
            &DVector::zeros(0),
            &DMatrix::zeros(1, 0),
            &dvector![0.0, -3.0],
            &dmatrix![-2.0, 1.0],
        )
        .unwrap();
        assert!(f64::abs(sol.d[0]) < 1e-12);
        assert!(f64::abs(sol.r) < 1e-12);
    }

    #[test]
    fn unconstrained_direction_when_no_rows() {
        let inst = QpInstance {
            linear: dvector![1.0, -2.0],
            b: dmatrix![2.0, 0.0; 0.0, 4.0],
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(2, 0),
            g: DVector::zeros(0),
            jac_g: DMatrix::zeros(2, 0),
        };
        let sol = solve(&inst).unwrap();
        assert!((sol.d - dvector![-0.5, 0.5]).norm() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let inst = QpInstance {
            linear: dvector![0.0],
            b: dmatrix![-1.0],
            h: dvector![1.0],
            jac_h: dmatrix![1.0],
            g: DVector::zeros(0),
            jac_g: DMatrix::zeros(1, 0),
        };
        assert!(matches!(solve(&inst), Err(QpError::NotPositiveDefinite)));
    }

    #[test]
    fn dependent_tight_gradients_are_flagged() {
        // Two copies of the same tight inequality.
        let inst = QpInstance {
            linear: dvector![1.0],
            b: dmatrix![1.0],
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(1, 0),
            g: dvector![0.0, 0.0],
            jac_g: dmatrix![1.0, 1.0],
        };
        let sol = solve(&inst).unwrap();
        assert!(f64::abs(sol.d[0]) < 1e-12);
        assert!(sol.nonunique_multipliers);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn nearly_opposite_tight_gradients_terminate() {
        // Steering subproblem captured from a degenerate iterate: rows 0 and 2
        // are tight with almost opposite gradients.
        let inst = QpInstance {
            linear: dvector![0.0, 0.0],
            b: dmatrix![1.2722777541061603e-4, 0.0; 0.0, 0.17736440716387417],
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(2, 0),
            g: dvector![-3.61710661422876e-13, 1.0000712329533474, 0.0],
            jac_g: DMatrix::from_column_slice(
                2,
                3,
                &[-1.5222400673309266e-08, -1.0, 1.0, 0.0, 0.0, 1.0],
            ),
        };
        let sol = solve(&inst).unwrap();
        assert!(sol.kkt_residual < 1e-10);
        assert!(sol.r <= 1e-12);
    }

    #[test]
    fn warm_start_reuses_working_set() {
        let inst = QpInstance {
            linear: dvector![1.0, 1.0],
            b: DMatrix::identity(2, 2),
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(2, 0),
            g: dvector![-1.0, -1.0],
            jac_g: dmatrix![1.0, 0.0; 0.0, 1.0],
        };
        let mut solver = QpSolver::new();
        let cold = solver.solve(&inst).unwrap();
        let warm = solver.solve(&inst).unwrap();
        assert!((cold.d.clone() - warm.d).norm() < 1e-12);
        assert!(warm.iterations <= cold.iterations);
    }
}
