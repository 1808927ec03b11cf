//! Problems described as sums of monomials and scaled exponentials.
//!
//! The JSON grammar is documented in `docs/problem-format.md`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NlpProblem, SecondDerivatives};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("invalid problem document at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid problem document at `{location}`: {message}")]
    Schema { location: String, message: String },
}

/// One summand: `coeff · Π xᵢ^{pᵢ}` or `scale · e^{x_{exp_of}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term {
    Monomial { coeff: f64, powers: Vec<u32> },
    Exp { exp_of: usize, scale: f64 },
}

pub type Expression = Vec<Term>;

/// Serialized form of a [`PolynomialProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialDocument {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub objective: Expression,
    #[serde(default)]
    pub equalities: Vec<Expression>,
    #[serde(default)]
    pub inequalities: Vec<Expression>,
    /// Starting point; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

/// A validated polynomial/exponential problem with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProblem {
    doc: PolynomialDocument,
}

/// Parses and validates a JSON problem document.
pub fn load_polynomial_problem(document: &str) -> Result<PolynomialProblem, ParseError> {
    let doc: PolynomialDocument =
        serde_json::from_str(document).map_err(|e| ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    PolynomialProblem::from_document(doc)
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn validate_expression(expr: &Expression, n: usize, at: &str) -> Result<(), ParseError> {
    for (k, term) in expr.iter().enumerate() {
        let loc = format!("{at}[{k}]");
        match term {
            Term::Monomial { coeff, powers } => {
                if !coeff.is_finite() {
                    return Err(schema(format!("{loc}.coeff"), "coefficient is not finite"));
                }
                if powers.len() != n {
                    return Err(schema(
                        format!("{loc}.powers"),
                        format!("expected {n} exponents, found {}", powers.len()),
                    ));
                }
            }
            Term::Exp { exp_of, scale } => {
                if !scale.is_finite() {
                    return Err(schema(format!("{loc}.scale"), "scale is not finite"));
                }
                if *exp_of >= n {
                    return Err(schema(
                        format!("{loc}.exp_of"),
                        format!("variable index {exp_of} out of range for n = {n}"),
                    ));
                }
            }
        }
    }
    Ok(())
}

impl PolynomialProblem {
    pub fn from_document(doc: PolynomialDocument) -> Result<Self, ParseError> {
        if doc.n == 0 {
            return Err(schema("n", "problem must have at least one variable"));
        }
        if doc.equalities.is_empty() && doc.inequalities.is_empty() {
            return Err(schema(
                "equalities/inequalities",
                "problem must have at least one constraint",
            ));
        }
        validate_expression(&doc.objective, doc.n, "objective")?;
        for (i, e) in doc.equalities.iter().enumerate() {
            validate_expression(e, doc.n, &format!("equalities[{i}]"))?;
        }
        for (i, e) in doc.inequalities.iter().enumerate() {
            validate_expression(e, doc.n, &format!("inequalities[{i}]"))?;
        }
        if let Some(x0) = &doc.x0 {
            if x0.len() != doc.n {
                return Err(schema(
                    "x0",
                    format!("expected {} entries, found {}", doc.n, x0.len()),
                ));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(schema("x0", "starting point is not finite"));
            }
        }
        Ok(Self { doc })
    }

    pub fn document(&self) -> &PolynomialDocument {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("document serializes")
    }

    pub fn x0<T: Scalar>(&self) -> DVector<T> {
        match &self.doc.x0 {
            Some(x0) => DVector::from_iterator(x0.len(), x0.iter().map(|&v| T::lit(v))),
            None => DVector::zeros(self.doc.n),
        }
    }
}

fn monomial_value<T: Scalar>(coeff: f64, powers: &[u32], x: &DVector<T>) -> T {
    let mut v = T::lit(coeff);
    for (i, &p) in powers.iter().enumerate() {
        if p > 0 {
            v *= x[i].powi(p as i32);
        }
    }
    v
}

/// `∂/∂x_j` of a monomial.
fn monomial_partial<T: Scalar>(coeff: f64, powers: &[u32], j: usize, x: &DVector<T>) -> T {
    if powers[j] == 0 {
        return T::zero();
    }
    let mut v = T::lit(coeff) * T::lit(powers[j] as f64);
    for (i, &p) in powers.iter().enumerate() {
        let e = if i == j { p - 1 } else { p };
        if e > 0 {
            v *= x[i].powi(e as i32);
        }
    }
    v
}

/// `∂²/∂x_j∂x_k` of a monomial.
fn monomial_second<T: Scalar>(
    coeff: f64,
    powers: &[u32],
    j: usize,
    k: usize,
    x: &DVector<T>,
) -> T {
    let mut exps: Vec<u32> = powers.to_vec();
    let mut factor = coeff;
    for idx in [j, k] {
        if exps[idx] == 0 {
            return T::zero();
        }
        factor *= exps[idx] as f64;
        exps[idx] -= 1;
    }
    monomial_value(factor, &exps, x)
}

fn expr_value<T: Scalar>(expr: &Expression, x: &DVector<T>) -> T {
    expr.iter().fold(T::zero(), |acc, term| {
        acc + match term {
            Term::Monomial { coeff, powers } => monomial_value(*coeff, powers, x),
            Term::Exp { exp_of, scale } => T::lit(*scale) * x[*exp_of].exp(),
        }
    })
}

fn expr_gradient<T: Scalar>(expr: &Expression, x: &DVector<T>) -> DVector<T> {
    let n = x.len();
    let mut grad = DVector::zeros(n);
    for term in expr {
        match term {
            Term::Monomial { coeff, powers } => {
                for j in 0..n {
                    grad[j] += monomial_partial(*coeff, powers, j, x);
                }
            }
            Term::Exp { exp_of, scale } => grad[*exp_of] += T::lit(*scale) * x[*exp_of].exp(),
        }
    }
    grad
}

fn expr_hessian<T: Scalar>(expr: &Expression, x: &DVector<T>) -> DMatrix<T> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    for term in expr {
        match term {
            Term::Monomial { coeff, powers } => {
                for j in 0..n {
                    for k in 0..n {
                        hess[(j, k)] += monomial_second(*coeff, powers, j, k, x);
                    }
                }
            }
            Term::Exp { exp_of, scale } => {
                hess[(*exp_of, *exp_of)] += T::lit(*scale) * x[*exp_of].exp()
            }
        }
    }
    hess
}

fn stack_values<T: Scalar>(exprs: &[Expression], x: &DVector<T>) -> DVector<T> {
    DVector::from_iterator(exprs.len(), exprs.iter().map(|e| expr_value(e, x)))
}

fn stack_gradients<T: Scalar>(exprs: &[Expression], x: &DVector<T>) -> DMatrix<T> {
    let mut jac = DMatrix::zeros(x.len(), exprs.len());
    for (i, e) in exprs.iter().enumerate() {
        jac.set_column(i, &expr_gradient(e, x));
    }
    jac
}

impl<T: Scalar> NlpProblem<T> for PolynomialProblem {
    fn name(&self) -> &str {
        &self.doc.name
    }
    fn num_vars(&self) -> usize {
        self.doc.n
    }
    fn num_eq(&self) -> usize {
        self.doc.equalities.len()
    }
    fn num_ineq(&self) -> usize {
        self.doc.inequalities.len()
    }
    fn objective(&self, x: &DVector<T>) -> T {
        expr_value(&self.doc.objective, x)
    }
    fn objective_grad(&self, x: &DVector<T>) -> DVector<T> {
        expr_gradient(&self.doc.objective, x)
    }
    fn eq_values(&self, x: &DVector<T>) -> DVector<T> {
        stack_values(&self.doc.equalities, x)
    }
    fn eq_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        stack_gradients(&self.doc.equalities, x)
    }
    fn ineq_values(&self, x: &DVector<T>) -> DVector<T> {
        stack_values(&self.doc.inequalities, x)
    }
    fn ineq_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        stack_gradients(&self.doc.inequalities, x)
    }
    fn has_second_derivatives(&self) -> bool {
        true
    }
    fn second_derivatives(&self, x: &DVector<T>) -> Option<SecondDerivatives<T>> {
        Some(SecondDerivatives {
            objective: expr_hessian(&self.doc.objective, x),
            eq: self.doc.equalities.iter().map(|e| expr_hessian(e, x)).collect(),
            ineq: self
                .doc
                .inequalities
                .iter()
                .map(|e| expr_hessian(e, x))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    const TP4: &str = r#"{
        "name": "tp4", "n": 1,
        "objective": [{"coeff": 1.0, "powers": [1]}],
        "inequalities": [
            [{"coeff": 1.0, "powers": [2]}, {"coeff": -1.0, "powers": [0]}],
            [{"coeff": 1.0, "powers": [1]}, {"coeff": -2.0, "powers": [0]}]
        ],
        "x0": [-4.0]
    }"#;

    #[test]
    fn tp4_document_evaluates_at_start() {
        let p = load_polynomial_problem(TP4).unwrap();
        let x = p.x0::<f64>();
        assert_eq!(x, dvector![-4.0]);
        assert_eq!(NlpProblem::<f64>::ineq_values(&p, &x), dvector![15.0, -6.0]);
        assert_eq!(NlpProblem::<f64>::objective(&p, &x), -4.0);
        let jac = NlpProblem::<f64>::ineq_jacobian(&p, &x);
        assert_eq!(jac.column(0)[0], -8.0);
        assert_eq!(jac.column(1)[0], 1.0);
    }

    #[test]
    fn no_constraints_is_rejected() {
        let doc = r#"{"name": "bare", "n": 2, "objective": []}"#;
        assert!(matches!(
            load_polynomial_problem(doc),
            Err(ParseError::Schema { .. })
        ));
    }

    #[test]
    fn empty_objective_is_zero() {
        let doc = r#"{"name": "z", "n": 2, "objective": [],
            "equalities": [[{"coeff": 1.0, "powers": [1, 0]}]]}"#;
        let p = load_polynomial_problem(doc).unwrap();
        let x = dvector![3.0, -1.0];
        assert_eq!(NlpProblem::<f64>::objective(&p, &x), 0.0);
        assert_eq!(NlpProblem::<f64>::objective_grad(&p, &x), dvector![0.0, 0.0]);
    }

    #[test]
    fn bad_exponent_count_has_location() {
        let doc = r#"{"name": "x", "n": 2,
            "inequalities": [[{"coeff": 1.0, "powers": [1, 0]}], [{"coeff": 1.0, "powers": [1]}]]}"#;
        match load_polynomial_problem(doc) {
            Err(ParseError::Schema { location, .. }) => {
                assert_eq!(location, "inequalities[1][0].powers")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_index_out_of_range() {
        let doc = r#"{"name": "x", "n": 2,
            "inequalities": [[{"exp_of": 2, "scale": 1.0}]]}"#;
        match load_polynomial_problem(doc) {
            Err(ParseError::Schema { location, .. }) => {
                assert_eq!(location, "inequalities[0][0].exp_of")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = load_polynomial_problem("{\n  \"name\": 3 }").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = r#"{"name": "x", "n": 1, "bogus": 1, "inequalities": [[]]}"#;
        assert!(matches!(
            load_polynomial_problem(doc),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn huge_coefficients_fail_to_parse() {
        let doc = r#"{"name": "x", "n": 1, "inequalities": [[{"coeff": 1e400, "powers": [1]}]]}"#;
        assert!(load_polynomial_problem(doc).is_err());
    }

    #[test]
    fn mixed_monomial_hessian() {
        // 3·x₀²·x₁ + 2·e^{x₁}
        let doc = r#"{"name": "m", "n": 2,
            "objective": [{"coeff": 3.0, "powers": [2, 1]}, {"exp_of": 1, "scale": 2.0}],
            "inequalities": [[{"coeff": 1.0, "powers": [0, 0]}]]}"#;
        let p = load_polynomial_problem(doc).unwrap();
        let x = dvector![0.5, -1.0];
        let sd = NlpProblem::<f64>::second_derivatives(&p, &x).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(sd.objective[(0, 0)], 6.0 * x[1]);
        assert_eq!(sd.objective[(0, 1)], 6.0 * x[0]);
        assert_eq!(sd.objective[(1, 0)], 6.0 * x[0]);
        assert!((sd.objective[(1, 1)] - 2.0 * e).abs() < 1e-15);
        let g = NlpProblem::<f64>::objective_grad(&p, &x);
        assert!((g[0] - 6.0 * x[0] * x[1]).abs() < 1e-15);
        assert!((g[1] - (3.0 * x[0] * x[0] + 2.0 * e)).abs() < 1e-15);
    }
}
