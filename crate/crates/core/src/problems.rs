//! Built-in test problems with reference solutions.
//!
//! Every problem is stored as a [`PolynomialProblem`], so exact second
//! derivatives are available and any entry can be written out as a problem
//! file with [`PolynomialProblem::to_json`].

use std::fmt;

use nalgebra::DVector;

use crate::nlp::{Expression, PolynomialDocument, PolynomialProblem, Term};
use crate::sqp::SolverConfig;
use crate::stationarity::StationarityKind;
use crate::Scalar;

/// A registry problem with its starting point and known answers.
#[derive(Debug, Clone)]
pub struct ReferenceEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub problem: PolynomialProblem,
    pub x0: DVector<f64>,
    pub rho0_override: Option<f64>,
    /// Expected limit. For `ex2_2` this is the preferred one of
    /// [`x_star_alternatives`](Self::x_star_alternatives).
    pub x_star: Option<DVector<f64>>,
    pub x_star_alternatives: Vec<DVector<f64>>,
    pub f_star: Option<f64>,
    /// `E_feas` at the expected limit.
    pub e_feas_star: Option<f64>,
    pub expected_class: StationarityKind,
    /// Total inner iterations of the reference run.
    pub reference_iterations: Option<usize>,
    /// Equality multiplier at the solution, where known.
    pub mu_star: Option<f64>,
    /// Penalty parameter at or below which the solution of the penalty
    /// problem is the constrained solution.
    pub rho_threshold: Option<f64>,
}

impl ReferenceEntry {
    /// `base` with this entry's overrides applied.
    pub fn config<T: Scalar>(&self, base: SolverConfig<T>) -> SolverConfig<T> {
        SolverConfig {
            rho0: self.rho0_override.map_or(base.rho0, T::lit),
            ..base
        }
    }

    pub fn x0_as<T: Scalar>(&self) -> DVector<T> {
        self.x0.map(T::lit)
    }

    /// Whether `x` lies within `tol` (max norm) of any recorded limit.
    pub fn near_reference(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.x_star
            .iter()
            .chain(&self.x_star_alternatives)
            .any(|xs| (x - xs).amax() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownProblem(pub String);

impl fmt::Display for UnknownProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown problem `{}`; valid names are: {}", self.0, NAMES.join(", "))
    }
}

impl std::error::Error for UnknownProblem {}

pub const NAMES: [&str; 8] = ["tp1", "tp2", "tp3", "tp4", "tp5", "ex2_1", "ex2_2", "ex2_3"];

/// Names and one-line descriptions, in registry order.
pub fn list() -> Vec<(&'static str, &'static str)> {
    NAMES
        .iter()
        .map(|n| (*n, get(n).expect("registered").description))
        .collect()
}

/// All entries in registry order.
pub fn all() -> Vec<ReferenceEntry> {
    NAMES.iter().map(|n| get(n).expect("registered")).collect()
}

fn mono(coeff: f64, powers: &[u32]) -> Term {
    Term::Monomial {
        coeff,
        powers: powers.to_vec(),
    }
}

fn build(name: &str, n: usize, objective: Expression, eq: Vec<Expression>, ineq: Vec<Expression>, x0: &[f64]) -> PolynomialProblem {
    PolynomialProblem::from_document(PolynomialDocument {
        name: name.to_string(),
        n,
        objective,
        equalities: eq,
        inequalities: ineq,
        x0: Some(x0.to_vec()),
    })
    .expect("registry documents are valid")
}

struct Draft {
    name: &'static str,
    description: &'static str,
    problem: PolynomialProblem,
    rho0_override: Option<f64>,
    x_star: Option<Vec<f64>>,
    f_star: Option<f64>,
    e_feas_star: Option<f64>,
    expected_class: StationarityKind,
    reference_iterations: Option<usize>,
}

impl Draft {
    fn finish(self) -> ReferenceEntry {
        ReferenceEntry {
            name: self.name,
            description: self.description,
            x0: self.problem.x0(),
            problem: self.problem,
            rho0_override: self.rho0_override,
            x_star: self.x_star.map(DVector::from_vec),
            x_star_alternatives: Vec::new(),
            f_star: self.f_star,
            e_feas_star: self.e_feas_star,
            expected_class: self.expected_class,
            reference_iterations: self.reference_iterations,
            mu_star: None,
            rho_threshold: None,
        }
    }
}

/// Looks up a registry entry by name.
pub fn get(name: &str) -> Result<ReferenceEntry, UnknownProblem> {
    use StationarityKind::*;
    let x1 = |c| mono(c, &[1, 0]);
    let x2 = |c| mono(c, &[0, 1]);
    let one2 = |c| mono(c, &[0, 0]);
    let entry = match name {
        // Least violation 0.3(e - 1) at (0, 1), attained on the second constraint.
        "tp1" => Draft {
            name: "tp1",
            description: "infeasible problem with a unique least-violation point (2 variables, 2 inequalities)",
            problem: build(
                "tp1",
                2,
                vec![x1(1.0), x2(1.0)],
                vec![],
                vec![
                    vec![x2(1.0), mono(-1.0, &[2, 0]), one2(-1.0)],
                    vec![one2(0.3), Term::Exp { exp_of: 1, scale: -0.3 }],
                ],
                &[3.0, 2.0],
            ),
            rho0_override: None,
            x_star: Some(vec![0.0, 1.0]),
            f_star: Some(1.0),
            e_feas_star: Some(0.3 * (std::f64::consts::E - 1.0)),
            expected_class: DzStationary,
            reference_iterations: Some(13),
        },
        "tp2" => Draft {
            name: "tp2",
            description: "infeasible problem with an isolated least-violation point (2 variables, 4 inequalities)",
            problem: build(
                "tp2",
                2,
                vec![x1(1.0), x2(1.0)],
                vec![],
                vec![
                    vec![mono(-1.0, &[2, 0]), x2(1.0), one2(-1.0)],
                    vec![mono(-1.0, &[2, 0]), x2(-1.0), one2(-1.0)],
                    vec![x1(1.0), mono(-1.0, &[0, 2]), one2(-1.0)],
                    vec![x1(-1.0), mono(-1.0, &[0, 2]), one2(-1.0)],
                ],
                &[3.0, 2.0],
            ),
            rho0_override: None,
            x_star: Some(vec![0.0, 0.0]),
            f_star: Some(0.0),
            e_feas_star: Some(1.0),
            expected_class: DzStationary,
            reference_iterations: Some(15),
        },
        "tp3" => Draft {
            name: "tp3",
            description: "infeasible problem whose limit has no active constraint gradients (2 variables, 3 inequalities)",
            problem: build(
                "tp3",
                2,
                vec![x1(1.0)],
                vec![],
                vec![
                    vec![x1(-0.5), mono(-0.5, &[0, 2]), one2(-0.5)],
                    vec![x1(1.0), mono(-1.0, &[0, 2])],
                    vec![x1(-1.0), mono(1.0, &[0, 2])],
                ],
                &[-20.0, 10.0],
            ),
            rho0_override: None,
            x_star: Some(vec![0.0, 0.0]),
            f_star: Some(0.0),
            e_feas_star: Some(0.5),
            expected_class: DlStationary,
            reference_iterations: Some(12),
        },
        "tp4" => Draft {
            name: "tp4",
            description: "feasible one-dimensional problem min x s.t. x^2 >= 1, x >= 2, started where solvers stall at x = -1",
            problem: build(
                "tp4",
                1,
                vec![mono(1.0, &[1])],
                vec![],
                vec![
                    vec![mono(1.0, &[2]), mono(-1.0, &[0])],
                    vec![mono(1.0, &[1]), mono(-2.0, &[0])],
                ],
                &[-4.0],
            ),
            rho0_override: None,
            x_star: Some(vec![-1.0]),
            f_star: Some(-1.0),
            e_feas_star: Some(3.0),
            expected_class: DlStationary,
            reference_iterations: Some(7),
        },
        // (1 - x1)^3 - x2 expanded; LICQ fails at the solution.
        "tp5" => Draft {
            name: "tp5",
            description: "feasible degenerate problem whose minimizer is a singular stationary point (2 variables, 3 inequalities)",
            problem: build(
                "tp5",
                2,
                vec![mono(1.0, &[2, 0]), x1(-4.0), one2(4.0), mono(1.0, &[0, 2])],
                vec![],
                vec![
                    vec![
                        one2(1.0),
                        x1(-3.0),
                        mono(3.0, &[2, 0]),
                        mono(-1.0, &[3, 0]),
                        x2(-1.0),
                    ],
                    vec![x1(1.0)],
                    vec![x2(1.0)],
                ],
                &[-2.0, -2.0],
            ),
            rho0_override: Some(1e3),
            x_star: Some(vec![1.0, 0.0]),
            f_star: Some(1.0),
            e_feas_star: Some(0.0),
            expected_class: SingularStationary,
            reference_iterations: Some(51),
        },
        "ex2_1" => {
            let mut e = Draft {
                name: "ex2_1",
                description: "feasible one-dimensional problem with one equality constraint and a KKT solution",
                problem: build(
                    "ex2_1",
                    1,
                    vec![mono(1.0, &[2]), mono(4.0, &[1])],
                    vec![vec![mono(1.0, &[1]), mono(-1.0, &[0])]],
                    vec![],
                    &[0.0],
                ),
                // Below the exactness threshold 1/6.
                rho0_override: Some(0.1),
                x_star: Some(vec![1.0]),
                f_star: Some(5.0),
                e_feas_star: Some(0.0),
                expected_class: Kkt,
                reference_iterations: None,
            }
            .finish();
            e.mu_star = Some(6.0);
            e.rho_threshold = Some(1.0 / 6.0);
            return Ok(e);
        }
        "ex2_2" => {
            let mut e = Draft {
                name: "ex2_2",
                description: "infeasible one-dimensional problem with two equality constraints x = 1 and x = -1",
                problem: build(
                    "ex2_2",
                    1,
                    vec![mono(1.0, &[2]), mono(4.0, &[1])],
                    vec![
                        vec![mono(1.0, &[1]), mono(-1.0, &[0])],
                        vec![mono(1.0, &[1]), mono(1.0, &[0])],
                    ],
                    vec![],
                    &[-3.0],
                ),
                rho0_override: None,
                x_star: Some(vec![-1.0]),
                f_star: Some(-3.0),
                e_feas_star: Some(2.0),
                expected_class: DlStationary,
                reference_iterations: None,
            }
            .finish();
            e.x_star_alternatives = vec![DVector::from_vec(vec![1.0])];
            return Ok(e);
        }
        "ex2_3" => Draft {
            name: "ex2_3",
            description: "infeasible problem with inconsistent linear inequalities (2 variables, 2 inequalities)",
            problem: build(
                "ex2_3",
                2,
                vec![mono(1.0, &[2, 0]), mono(1.0, &[0, 2])],
                vec![],
                vec![
                    vec![x1(-1.0), x2(-1.0), one2(1.0)],
                    vec![x1(1.0), x2(1.0), one2(-2.0)],
                ],
                &[0.0, 0.0],
            ),
            rho0_override: None,
            x_star: Some(vec![0.5, 0.5]),
            f_star: Some(0.5),
            e_feas_star: Some(1.0),
            expected_class: DlStationary,
            reference_iterations: None,
        },
        other => return Err(UnknownProblem(other.to_string())),
    };
    Ok(entry.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{neg_part, norm_inf};
    use crate::nlp::{check_derivatives, NlpProblem};
    use crate::qp::solve_steering;
    use nalgebra::{dmatrix, dvector, DMatrix};

    #[test]
    fn lookups() {
        assert_eq!(get("tp3").unwrap().x0, dvector![-20.0, 10.0]);
        assert_eq!(get("tp5").unwrap().rho0_override, Some(1000.0));
        let e = get("ex2_1").unwrap();
        assert_eq!(NlpProblem::<f64>::objective(&e.problem, &dvector![1.0]), 5.0);
        let err = get("nosuch").unwrap_err().to_string();
        for n in NAMES {
            assert!(err.contains(n));
        }
    }

    #[test]
    fn listing() {
        let l = list();
        assert_eq!(l.len(), 8);
        assert_eq!(l.iter().map(|(n, _)| *n).collect::<Vec<_>>(), NAMES);
        assert!(l[0].1.contains("infeasible"));
        assert!(l[6].1.contains("two equality constraints"));
    }

    #[test]
    fn reference_violations() {
        for name in ["tp1", "tp2", "tp3", "ex2_2", "ex2_3"] {
            let e = get(name).unwrap();
            let xs = e.x_star.clone().unwrap();
            let h = e.problem.eq_values(&xs);
            let c = norm_inf(&h).max(norm_inf(&neg_part(&e.problem.ineq_values(&xs))));
            assert!((c - e.e_feas_star.unwrap()).abs() <= 1e-6, "{name}: {c}");
        }
        let e = get("tp1").unwrap();
        assert!((e.e_feas_star.unwrap() - 0.5155).abs() < 1e-4);
    }

    #[test]
    fn derivatives_at_start_and_reference() {
        for e in all() {
            let mut points = vec![e.x0.clone()];
            points.extend(e.x_star.clone());
            for x in points {
                let rep = check_derivatives::<f64>(&e.problem, &x, 1e-6).unwrap();
                assert!(rep.max_rel_error() <= 1e-4, "{} at {x}: {rep:?}", e.name);
            }
        }
    }

    #[test]
    fn ex2_1_solution_is_violation_stationary() {
        let e = get("ex2_1").unwrap();
        let x = dvector![1.0];
        for b in [0.01, 1.0, 250.0] {
            let sol = solve_steering(
                &dmatrix![b],
                &e.problem.eq_values(&x),
                &e.problem.eq_jacobian(&x),
                &DVector::zeros(0),
                &DMatrix::zeros(1, 0),
            )
            .unwrap();
            assert!(sol.d.amax() <= 1e-12);
        }
    }

    #[test]
    fn registry_config_overrides() {
        let c = get("tp5").unwrap().config(SolverConfig::<f64>::default());
        assert_eq!(c.rho0, 1000.0);
        let c = get("tp1").unwrap().config(SolverConfig::<f32>::default());
        assert_eq!(c.rho0, 1.0);
    }
}
