//! Nonlinear program definitions.
//!
//! A problem is `min f(x)  s.t.  h(x) = 0, g(x) >= 0` with `x ∈ ℝⁿ`,
//! `h: ℝⁿ → ℝ^{mE}` and `g: ℝⁿ → ℝ^{mI}`. Jacobians are stored column-wise:
//! column `i` of the equality Jacobian is `∇hᵢ(x)`, so the matrices are `n × m`.

mod eval;
mod polynomial;

use nalgebra::{DMatrix, DVector};

use crate::Scalar;

pub use eval::{
    check_derivatives, lagrangian_hessian, CapabilityError, DerivativeReport, Derivatives,
    EvalCounts, EvalError, Evaluation, Evaluator, FunctionCheck,
};
pub use polynomial::{
    load_polynomial_problem, Expression, ParseError, PolynomialDocument, PolynomialProblem, Term,
};

/// Second derivatives of every problem function at one point.
#[derive(Debug, Clone)]
pub struct SecondDerivatives<T: Scalar> {
    pub objective: DMatrix<T>,
    pub eq: Vec<DMatrix<T>>,
    pub ineq: Vec<DMatrix<T>>,
}

/// A smooth nonlinear program with first derivatives and optional Hessians.
///
/// Implementations must be immutable: a single problem may be shared across
/// concurrent solves, and all counting state lives in [`Evaluator`].
pub trait NlpProblem<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;

    fn objective(&self, x: &DVector<T>) -> T;
    fn objective_grad(&self, x: &DVector<T>) -> DVector<T>;
    fn eq_values(&self, x: &DVector<T>) -> DVector<T>;
    /// `n × mE`, column `i` is `∇hᵢ(x)`.
    fn eq_jacobian(&self, x: &DVector<T>) -> DMatrix<T>;
    fn ineq_values(&self, x: &DVector<T>) -> DVector<T>;
    /// `n × mI`, column `i` is `∇gᵢ(x)`.
    fn ineq_jacobian(&self, x: &DVector<T>) -> DMatrix<T>;

    fn has_second_derivatives(&self) -> bool {
        false
    }

    /// `None` unless [`NlpProblem::has_second_derivatives`] is true.
    fn second_derivatives(&self, _x: &DVector<T>) -> Option<SecondDerivatives<T>> {
        None
    }
}

/// Checks the structural invariants `n > 0` and `max{mE, mI} > 0`.
pub fn validate_dimensions<T: Scalar>(problem: &dyn NlpProblem<T>) -> Result<(), String> {
    if problem.num_vars() == 0 {
        return Err(format!("problem `{}` has no variables", problem.name()));
    }
    if problem.num_eq() == 0 && problem.num_ineq() == 0 {
        return Err(format!(
            "problem `{}` has no constraints (mE = mI = 0)",
            problem.name()
        ));
    }
    Ok(())
}

type ScalarFn<T> = Box<dyn Fn(&DVector<T>) -> T + Send + Sync>;
type VectorFn<T> = Box<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
type MatrixFn<T> = Box<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;

/// Closure-backed problem, handy for one-off problems and tests.
///
/// ```
/// use l1sqp::nlp::{FnProblem, NlpProblem};
/// use nalgebra::{dmatrix, dvector};
///
/// let p = FnProblem::<f64>::new("shift", 1)
///     .objective(|x| x[0] * x[0], |x| dvector![2.0 * x[0]])
///     .equalities(1, |x| dvector![x[0] - 1.0], |_| dmatrix![1.0]);
/// assert_eq!(p.eq_values(&dvector![3.0])[0], 2.0);
/// ```
pub struct FnProblem<T: Scalar> {
    name: String,
    n: usize,
    m_eq: usize,
    m_ineq: usize,
    f: ScalarFn<T>,
    grad_f: VectorFn<T>,
    h: VectorFn<T>,
    jac_h: MatrixFn<T>,
    g: VectorFn<T>,
    jac_g: MatrixFn<T>,
}

impl<T: Scalar> FnProblem<T> {
    /// A problem with `f ≡ 0` and no constraints yet.
    pub fn new(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            n,
            m_eq: 0,
            m_ineq: 0,
            f: Box::new(|_| T::zero()),
            grad_f: Box::new(move |x| DVector::zeros(x.len())),
            h: Box::new(|_| DVector::zeros(0)),
            jac_h: Box::new(move |x| DMatrix::zeros(x.len(), 0)),
            g: Box::new(|_| DVector::zeros(0)),
            jac_g: Box::new(move |x| DMatrix::zeros(x.len(), 0)),
        }
    }

    pub fn objective(
        mut self,
        f: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        self.f = Box::new(f);
        self.grad_f = Box::new(grad);
        self
    }

    pub fn equalities(
        mut self,
        m: usize,
        h: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.m_eq = m;
        self.h = Box::new(h);
        self.jac_h = Box::new(jac);
        self
    }

    pub fn inequalities(
        mut self,
        m: usize,
        g: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.m_ineq = m;
        self.g = Box::new(g);
        self.jac_g = Box::new(jac);
        self
    }
}

impl<T: Scalar> NlpProblem<T> for FnProblem<T> {
    fn name(&self) -> &str {
        &self.name
    }
    fn num_vars(&self) -> usize {
        self.n
    }
    fn num_eq(&self) -> usize {
        self.m_eq
    }
    fn num_ineq(&self) -> usize {
        self.m_ineq
    }
    fn objective(&self, x: &DVector<T>) -> T {
        (self.f)(x)
    }
    fn objective_grad(&self, x: &DVector<T>) -> DVector<T> {
        (self.grad_f)(x)
    }
    fn eq_values(&self, x: &DVector<T>) -> DVector<T> {
        (self.h)(x)
    }
    fn eq_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        (self.jac_h)(x)
    }
    fn ineq_values(&self, x: &DVector<T>) -> DVector<T> {
        (self.g)(x)
    }
    fn ineq_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        (self.jac_g)(x)
    }
}
