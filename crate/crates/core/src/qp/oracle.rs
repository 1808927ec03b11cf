//! Brute-force reference solver for small subproblems.
//!
//! Every constraint is assigned one of three states (residual pinned to zero,
//! positive branch, negative branch); each assignment with independent pinned
//! gradients gives an equality-constrained QP solved through the Schur
//! complement of `B`. The best candidate under the true model wins. A grid
//! search refined by coordinate-wise golden-section descent guards against
//! enumeration mistakes. This shares no code with the active-set solver beyond
//! the model evaluation.

use nalgebra::{Cholesky, DVector};

use super::{columns_independent, rank_tol, QpError, QpInstance, QpSolution, Stacked};
use crate::Scalar;

/// Largest number of patterns the oracle will enumerate.
pub const PATTERN_BUDGET: u128 = 3u128.pow(10);

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Pinned,
    Upper,
    Lower,
}

/// Minimizes the subproblem model by enumeration plus a grid of `resolution`
/// points per axis.
pub fn oracle_solve<T: Scalar>(
    inst: &QpInstance<T>,
    resolution: usize,
) -> Result<QpSolution<T>, QpError<T>> {
    inst.check_dimensions()?;
    let chol = Cholesky::new(inst.b.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let st = Stacked::new(inst);
    let m = st.len();
    let patterns = 3u128.checked_pow(m as u32).unwrap_or(u128::MAX);
    if patterns > PATTERN_BUDGET {
        return Err(QpError::Budget(patterns));
    }

    let mut best: Option<(T, DVector<T>, DVector<T>)> = None;
    let mut states = vec![State::Upper; m];
    for code in 0..patterns {
        let mut c = code;
        for state in states.iter_mut() {
            *state = match c % 3 {
                0 => State::Pinned,
                1 => State::Upper,
                _ => State::Lower,
            };
            c /= 3;
        }
        if let Some((d, w)) = pattern_candidate(inst, &st, &chol, &states) {
            let val = inst.model_value(&d);
            if best.as_ref().is_none_or(|(bv, _, _)| val < *bv) {
                best = Some((val, d, w));
            }
        }
    }
    let (mut best_val, mut best_d, mut best_w) =
        best.expect("the all-branch pattern always yields a candidate");

    if resolution >= 2 {
        let d = grid_search(inst, resolution);
        let val = inst.model_value(&d);
        if val < best_val - T::lit(1e-12) * (T::one() + best_val.abs()) {
            best_w = branch_weights(&st, &d);
            best_val = val;
            best_d = d;
        }
    }
    let _ = best_val;

    let tight = T::lit(1e3) * T::eps() * (T::one() + crate::norm_inf(&st.c));
    let working: Vec<usize> = {
        let res = st.residuals(&best_d);
        (0..m).filter(|&k| res[k].abs() <= tight).collect()
    };
    Ok(st.solution(inst, best_d, best_w, working, patterns as usize, tight))
}

fn branch_weights<T: Scalar>(st: &Stacked<T>, d: &DVector<T>) -> DVector<T> {
    let res = st.residuals(d);
    DVector::from_iterator(
        st.len(),
        (0..st.len()).map(|k| if res[k] > T::zero() { st.hi(k) } else { st.lo(k) }),
    )
}

/// Minimizer of the smooth model of one pattern, with its stacked weights.
fn pattern_candidate<T: Scalar>(
    inst: &QpInstance<T>,
    st: &Stacked<T>,
    chol: &Cholesky<T, nalgebra::Dyn>,
    states: &[State],
) -> Option<(DVector<T>, DVector<T>)> {
    let pinned: Vec<usize> = (0..states.len())
        .filter(|&k| states[k] == State::Pinned)
        .collect();
    if !columns_independent(&st.a, &pinned, rank_tol::<T>()) {
        return None;
    }
    let mut w = DVector::zeros(st.len());
    let mut g0 = inst.linear.clone();
    for (k, &s) in states.iter().enumerate() {
        let sl = match s {
            State::Upper => st.hi(k),
            State::Lower => st.lo(k),
            State::Pinned => continue,
        };
        w[k] = sl;
        g0 += st.a.column(k) * sl;
    }
    // d = -B⁻¹(g0 + Aν) with Aᵀd = -c  ⇒  (AᵀB⁻¹A)ν = c - AᵀB⁻¹g0.
    let binv_g = chol.solve(&g0);
    if pinned.is_empty() {
        return Some((-binv_g, w));
    }
    let a = st.a.select_columns(&pinned);
    let binv_a = chol.solve(&a);
    let schur = a.tr_mul(&binv_a);
    let c = DVector::from_iterator(pinned.len(), pinned.iter().map(|&k| st.c[k]));
    let rhs = c - a.tr_mul(&binv_g);
    let nu = Cholesky::new(schur)?.solve(&rhs);
    let d = -(binv_g + binv_a * &nu);
    for (j, &k) in pinned.iter().enumerate() {
        w[k] = nu[j];
    }
    Some((d, w))
}

/// Dense grid over a box known to contain the minimizer, then coordinate
/// descent with golden-section line searches.
fn grid_search<T: Scalar>(inst: &QpInstance<T>, resolution: usize) -> DVector<T> {
    let n = inst.n();
    // M(d) ≥ ½λ_min‖d‖² - (‖lin‖ + Σ‖a_k‖)‖d‖ + M-terms at 0, and M(0) ≥ M(d*),
    // so ‖d*‖ ≤ 2(‖lin‖ + Σ‖a_k‖)/λ_min.
    let lmin = inst.b.clone().symmetric_eigenvalues().min().max(T::eps());
    let mut slope = inst.linear.norm();
    for j in 0..inst.jac_h.ncols() {
        slope += inst.jac_h.column(j).norm();
    }
    for j in 0..inst.jac_g.ncols() {
        slope += inst.jac_g.column(j).norm();
    }
    let radius = T::lit(2.0) * slope / lmin + T::eps();

    let total = resolution.checked_pow(n as u32).unwrap_or(usize::MAX).min(200_000);
    let per_axis = if resolution.checked_pow(n as u32).is_none_or(|t| t > total) {
        ((total as f64).powf(1.0 / n as f64).floor() as usize).max(2)
    } else {
        resolution
    };
    let step = T::lit(2.0) * radius / T::lit((per_axis - 1) as f64);

    let mut best = DVector::zeros(n);
    let mut best_val = inst.model_value(&best);
    let mut idx = vec![0usize; n];
    let mut point = DVector::zeros(n);
    loop {
        for i in 0..n {
            point[i] = -radius + step * T::lit(idx[i] as f64);
        }
        let val = inst.model_value(&point);
        if val < best_val {
            best_val = val;
            best.copy_from(&point);
        }
        let mut axis = 0;
        while axis < n {
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
        if axis == n {
            break;
        }
    }

    let mut width = step;
    for _ in 0..60 {
        let before = best_val;
        for i in 0..n {
            let (t, val) = golden_section(
                |t| {
                    let mut p = best.clone();
                    p[i] += t;
                    inst.model_value(&p)
                },
                -width,
                width,
            );
            if val < best_val {
                best[i] += t;
                best_val = val;
            }
        }
        if before - best_val <= T::eps() * (T::one() + best_val.abs()) {
            width *= T::lit(0.5);
            if width < T::eps() * (T::one() + best.norm()) {
                break;
            }
        }
    }
    best
}

fn golden_section<T: Scalar>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> (T, T) {
    let ratio = T::lit(0.618_033_988_749_894_8);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DMatrix};

    #[test]
    fn unconstrained_instance() {
        let inst = QpInstance {
            linear: dvector![1.0, -2.0],
            b: dmatrix![2.0, 0.0; 0.0, 4.0],
            h: DVector::zeros(0),
            jac_h: DMatrix::zeros(2, 0),
            g: DVector::zeros(0),
            jac_g: DMatrix::zeros(2, 0),
        };
        let sol = oracle_solve(&inst, 21).unwrap();
        assert!((sol.d - dvector![-0.5, 0.5]).norm() < 1e-12);
    }

    #[test]
    fn feasible_zero_linear_instance() {
        let inst = QpInstance::steering(
            dmatrix![1.0, 0.0; 0.0, 1.0],
            dvector![0.0],
            dmatrix![1.0; 1.0],
            dvector![2.0],
            dmatrix![1.0; -1.0],
        );
        let sol = oracle_solve(&inst, 11).unwrap();
        assert!(sol.d.norm() < 1e-12);
        assert_eq!(sol.r, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let inst = QpInstance::steering(
            dmatrix![1.0],
            DVector::zeros(0),
            DMatrix::zeros(1, 0),
            DVector::from_element(11, 1.0),
            DMatrix::from_element(1, 11, 1.0),
        );
        assert!(matches!(oracle_solve(&inst, 3), Err(QpError::Budget(_))));
    }
}
