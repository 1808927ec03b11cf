use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use super::NlpProblem;
use crate::scalar::{all_finite_mat, all_finite_vec, fmt_vec, symmetrize};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("`{function}` returned a non-finite value at x = {x}")]
    NonFinite { function: &'static str, x: String },
    #[error("`{function}` returned {got} entries, expected {expected}")]
    Dimension {
        function: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("problem `{0}` does not provide second derivatives")]
pub struct CapabilityError(pub String);

/// Evaluation counters; one unit per full value evaluation of `(f, h, g)` and
/// one per full first-derivative evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub numf: usize,
    pub numg: usize,
}

#[derive(Debug, Clone)]
pub struct Derivatives<T: Scalar> {
    pub grad_f: DVector<T>,
    pub jac_h: DMatrix<T>,
    pub jac_g: DMatrix<T>,
}

/// Function values at `x`, plus first derivatives when they were requested.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Scalar> {
    pub x: DVector<T>,
    pub f: T,
    pub h: DVector<T>,
    pub g: DVector<T>,
    pub derivatives: Option<Derivatives<T>>,
}

impl<T: Scalar> Evaluation<T> {
    /// Panics if the evaluation was made without derivatives.
    pub fn derivs(&self) -> &Derivatives<T> {
        self.derivatives
            .as_ref()
            .expect("evaluation was requested without derivatives")
    }
}

/// Counting front end to a problem. Counters belong to one solve.
pub struct Evaluator<'p, T: Scalar> {
    problem: &'p dyn NlpProblem<T>,
    counts: EvalCounts,
}

impl<'p, T: Scalar> Evaluator<'p, T> {
    pub fn new(problem: &'p dyn NlpProblem<T>) -> Self {
        Self {
            problem,
            counts: EvalCounts::default(),
        }
    }

    pub fn problem(&self) -> &'p dyn NlpProblem<T> {
        self.problem
    }

    pub fn counts(&self) -> EvalCounts {
        self.counts
    }

    /// Returns the counters accumulated since the last call and resets them.
    pub fn take_counts(&mut self) -> EvalCounts {
        std::mem::take(&mut self.counts)
    }

    pub fn evaluate(
        &mut self,
        x: &DVector<T>,
        want_derivatives: bool,
    ) -> Result<Evaluation<T>, EvalError> {
        let p = self.problem;
        let n = p.num_vars();
        check_len("x", n, x.len())?;
        self.counts.numf += 1;
        let f = p.objective(x);
        if !f.is_finite() {
            return Err(non_finite("f", x));
        }
        let h = p.eq_values(x);
        check_len("h", p.num_eq(), h.len())?;
        if !all_finite_vec(&h) {
            return Err(non_finite("h", x));
        }
        let g = p.ineq_values(x);
        check_len("g", p.num_ineq(), g.len())?;
        if !all_finite_vec(&g) {
            return Err(non_finite("g", x));
        }
        let derivatives = if want_derivatives {
            Some(self.derivatives(x)?)
        } else {
            None
        };
        Ok(Evaluation {
            x: x.clone(),
            f,
            h,
            g,
            derivatives,
        })
    }

    /// Adds derivatives to an existing value evaluation.
    pub fn complete(&mut self, eval: &mut Evaluation<T>) -> Result<(), EvalError> {
        if eval.derivatives.is_none() {
            eval.derivatives = Some(self.derivatives(&eval.x)?);
        }
        Ok(())
    }

    fn derivatives(&mut self, x: &DVector<T>) -> Result<Derivatives<T>, EvalError> {
        let p = self.problem;
        let n = p.num_vars();
        self.counts.numg += 1;
        let grad_f = p.objective_grad(x);
        check_len("grad_f", n, grad_f.len())?;
        if !all_finite_vec(&grad_f) {
            return Err(non_finite("grad_f", x));
        }
        let jac_h = p.eq_jacobian(x);
        check_shape("jac_h", n, p.num_eq(), &jac_h)?;
        if !all_finite_mat(&jac_h) {
            return Err(non_finite("jac_h", x));
        }
        let jac_g = p.ineq_jacobian(x);
        check_shape("jac_g", n, p.num_ineq(), &jac_g)?;
        if !all_finite_mat(&jac_g) {
            return Err(non_finite("jac_g", x));
        }
        Ok(Derivatives {
            grad_f,
            jac_h,
            jac_g,
        })
    }
}

fn non_finite<T: Scalar>(function: &'static str, x: &DVector<T>) -> EvalError {
    EvalError::NonFinite {
        function,
        x: fmt_vec(x),
    }
}

fn check_len(function: &'static str, expected: usize, got: usize) -> Result<(), EvalError> {
    if expected == got {
        Ok(())
    } else {
        Err(EvalError::Dimension {
            function,
            expected,
            got,
        })
    }
}

fn check_shape<T: Scalar>(
    function: &'static str,
    rows: usize,
    cols: usize,
    m: &DMatrix<T>,
) -> Result<(), EvalError> {
    check_len(function, rows * cols, m.nrows() * m.ncols())?;
    check_len(function, cols, m.ncols())
}

/// Penalty Lagrangian Hessian `ρ∇²f + Σ(uᵢ − vᵢ)∇²hᵢ − Σ sᵢ∇²gᵢ`.
pub fn lagrangian_hessian<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x: &DVector<T>,
    rho: T,
    u: &DVector<T>,
    v: &DVector<T>,
    s: &DVector<T>,
) -> Result<DMatrix<T>, CapabilityError> {
    assert_eq!(u.len(), problem.num_eq(), "u has the wrong length");
    assert_eq!(v.len(), problem.num_eq(), "v has the wrong length");
    assert_eq!(s.len(), problem.num_ineq(), "s has the wrong length");
    let second = problem
        .second_derivatives(x)
        .ok_or_else(|| CapabilityError(problem.name().to_string()))?;
    let mut hess = second.objective * rho;
    for (i, hi) in second.eq.iter().enumerate() {
        hess += hi * (u[i] - v[i]);
    }
    for (i, gi) in second.ineq.iter().enumerate() {
        hess -= gi * s[i];
    }
    symmetrize(&mut hess);
    Ok(hess)
}

/// Result of comparing one function's analytic gradient with central differences.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionCheck<T: Scalar> {
    /// `"f"`, `"h[i]"` or `"g[i]"`.
    pub name: String,
    pub max_rel_error: T,
    pub flagged_components: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport<T: Scalar> {
    pub step: T,
    pub threshold: T,
    pub functions: Vec<FunctionCheck<T>>,
}

impl<T: Scalar> DerivativeReport<T> {
    pub fn passed(&self) -> bool {
        self.functions.iter().all(|c| c.flagged_components.is_empty())
    }

    pub fn max_rel_error(&self) -> T {
        self.functions
            .iter()
            .fold(T::zero(), |acc, c| acc.max(c.max_rel_error))
    }

    pub fn get(&self, name: &str) -> Option<&FunctionCheck<T>> {
        self.functions.iter().find(|c| c.name == name)
    }
}

/// Compares analytic first derivatives with central differences of width
/// `2·step`. A component is flagged when its relative error
/// `|a − fd| / max{1, |a|}` exceeds `100·step`.
pub fn check_derivatives<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x: &DVector<T>,
    step: T,
) -> Result<DerivativeReport<T>, EvalError> {
    assert!(step > T::zero(), "finite-difference step must be positive");
    let n = problem.num_vars();
    let mut ev = Evaluator::new(problem);
    let base = ev.evaluate(x, true)?;
    let d = base.derivs();
    let threshold = step * T::lit(100.0);
    let two_step = step + step;

    // fd[c][j]: derivative of function c (f, h.., g..) with respect to x_j.
    let m_eq = problem.num_eq();
    let m_ineq = problem.num_ineq();
    let count = 1 + m_eq + m_ineq;
    let mut fd = vec![vec![T::zero(); n]; count];
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let ep = ev.evaluate(&xp, false)?;
        let em = ev.evaluate(&xm, false)?;
        fd[0][j] = (ep.f - em.f) / two_step;
        for i in 0..m_eq {
            fd[1 + i][j] = (ep.h[i] - em.h[i]) / two_step;
        }
        for i in 0..m_ineq {
            fd[1 + m_eq + i][j] = (ep.g[i] - em.g[i]) / two_step;
        }
    }

    let mut functions = Vec::with_capacity(count);
    for (c, fd_row) in fd.iter().enumerate() {
        let (name, analytic): (String, Vec<T>) = if c == 0 {
            ("f".into(), d.grad_f.iter().copied().collect())
        } else if c <= m_eq {
            let i = c - 1;
            (format!("h[{i}]"), d.jac_h.column(i).iter().copied().collect())
        } else {
            let i = c - 1 - m_eq;
            (format!("g[{i}]"), d.jac_g.column(i).iter().copied().collect())
        };
        let mut max_rel_error = T::zero();
        let mut flagged_components = Vec::new();
        for j in 0..n {
            let a = analytic[j];
            let err = (a - fd_row[j]).abs() / T::one().max(a.abs());
            max_rel_error = max_rel_error.max(err);
            if err > threshold {
                flagged_components.push(j);
            }
        }
        functions.push(FunctionCheck {
            name,
            max_rel_error,
            flagged_components,
        });
    }
    Ok(DerivativeReport {
        step,
        threshold,
        functions,
    })
}
