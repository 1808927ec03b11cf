//! Exact ℓ1-penalty SQP with infeasibility detection.
//!
//! The solver minimizes `f(x)` subject to `h(x) = 0`, `g(x) >= 0` by running an
//! SQP method on the penalty function `ρ f(x) + c(x)`, where
//! `c(x) = ‖h(x)‖₁ + ‖max{0, -g(x)}‖₁`. When the constraints cannot be satisfied
//! it converges to a point of least ℓ1 violation and labels it.
//!
//! ```
//! use l1sqp::{problems, solve, Config, StationarityKind};
//!
//! let entry = problems::get("tp4").unwrap();
//! let report = solve(&entry.problem, &entry.x0, &entry.config(Config::default()));
//! assert_eq!(report.classification.unwrap().kind, StationarityKind::DlStationary);
//! ```
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the registry and CLI.

pub mod merit;
pub mod nlp;
pub mod problems;
pub mod qp;
pub mod report;
mod scalar;
mod serde_la;
pub mod sqp;
pub mod stationarity;

pub use scalar::{neg_part, norm_1, norm_inf, Scalar};

pub use nlp::{NlpProblem, PolynomialProblem};
pub use report::{OuterRecord, SolveReport, Status};
pub use sqp::{solve, HessianMode, SolverConfig};
pub use stationarity::{Classification, StationarityKind, StationarityMeasures};

pub type Real = f64;
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Config = SolverConfig<f64>;
pub type Report = SolveReport<f64>;

pub type ConfigF32 = SolverConfig<f32>;
pub type ReportF32 = SolveReport<f32>;
