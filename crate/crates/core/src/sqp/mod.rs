//! The penalty SQP method: inner loop at fixed ρ, steering and penalty
//! update between inner loops, and the overall driver.

mod driver;
pub mod hessian;
pub mod line_search;
pub mod penalty;

use serde::{Deserialize, Serialize};

use crate::stationarity::ClassifyThresholds;
use crate::Scalar;

pub use driver::{inner_loop, solve, steering_step, Failure, InnerOutcome, SolverState, SteeringOutcome};
pub use hessian::{hessian_update, HessianMode};
pub use line_search::armijo_search;
pub use penalty::{update_penalty, SteeredValues};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolverConfig<T> {
    /// Initial penalty parameter.
    pub rho0: T,
    /// Armijo constant.
    pub sigma: T,
    /// Backtracking factor.
    pub tau: T,
    /// Outer stopping tolerance on the step norms.
    pub eps: T,
    /// Inner-loop exit tolerance on `r`; `eps` when absent.
    pub inner_eps: Option<T>,
    /// Subproblems per inner loop.
    pub max_inner: usize,
    pub max_outer: usize,
    pub max_backtracks: usize,
    pub hessian: HessianMode,
    /// Penalty parameters at or below this count as zero when classifying.
    pub rho_min: T,
    /// Lower bound applied to every penalty update.
    pub rho_floor: T,
    /// Largest `E_feas` of a point labeled feasible.
    pub feas_tol: T,
    /// Smallest eigenvalue allowed in `B`.
    pub lambda_floor: T,
    /// Decades of decay below `rho0` that, together with a stalled violation,
    /// also count as a vanished penalty parameter.
    pub decay_decades: T,
    /// Relative change in `E_feas` treated as stalled.
    pub stall_tol: T,
    /// Restart `B` from the identity after every penalty update in `bfgs`
    /// mode instead of carrying it over (updated along the steering step).
    #[serde(default)]
    pub reset_hessian: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            rho0: T::one(),
            sigma: T::lit(0.01),
            tau: T::lit(0.5),
            eps: T::lit(1e-8),
            inner_eps: None,
            max_inner: 200,
            max_outer: 100,
            max_backtracks: 50,
            hessian: HessianMode::DampedBfgs,
            rho_min: T::lit(1e-12),
            rho_floor: T::lit(1e-30),
            feas_tol: T::lit(1e-6),
            lambda_floor: T::lit(1e-8),
            decay_decades: T::lit(6.0),
            stall_tol: T::lit(1e-6),
            reset_hessian: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn inner_tolerance(&self) -> T {
        self.inner_eps.unwrap_or(self.eps)
    }

    pub fn thresholds(&self) -> ClassifyThresholds<T> {
        ClassifyThresholds {
            feas_tol: self.feas_tol,
            rho_min: self.rho_min,
            rho0: self.rho0,
            decay_decades: self.decay_decades,
            stall_tol: self.stall_tol,
        }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<(), String> {
        let zero = T::zero();
        let one = T::one();
        let open_unit = |name: &str, v: T| {
            if v > zero && v < one {
                Ok(())
            } else {
                Err(format!("{name} must lie in (0, 1), got {v}"))
            }
        };
        let positive = |name: &str, v: T| {
            if v > zero && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        positive("rho0", self.rho0)?;
        open_unit("sigma", self.sigma)?;
        open_unit("tau", self.tau)?;
        positive("eps", self.eps)?;
        if let Some(e) = self.inner_eps {
            positive("inner_eps", e)?;
        }
        positive("rho_min", self.rho_min)?;
        positive("rho_floor", self.rho_floor)?;
        positive("feas_tol", self.feas_tol)?;
        positive("lambda_floor", self.lambda_floor)?;
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err("iteration limits must be at least 1".into());
        }
        Ok(())
    }
}
