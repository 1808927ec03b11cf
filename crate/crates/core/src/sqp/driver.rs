use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::hessian::{damped_bfgs, regularize, HessianMode};
use super::line_search::{armijo_search, LineSearchError};
use super::penalty::{update_penalty, SteeredValues};
use super::SolverConfig;
use crate::merit::{directional_derivative, penalty_value, slack_lift, violation, SlackPair};
use crate::nlp::{lagrangian_hessian, validate_dimensions, EvalError, Evaluation, Evaluator, NlpProblem};
use crate::qp::{QpError, QpInstance, QpSolution, QpSolver};
use crate::report::{
    InnerExit, InnerStep, OuterRecord, PenaltyUpdate, SolveReport, Status, SteeringRecord, Trace,
};
use crate::scalar::norm_inf;
use crate::stationarity::{classify, measures_at};
use crate::Scalar;

/// Why a solve stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    fn new(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::new(Status::EvaluationFailure, e.to_string())
    }
}

/// Multipliers of the last subproblem, kept for exact Hessians.
#[derive(Debug, Clone)]
struct QpMultipliers<T: Scalar> {
    u: DVector<T>,
    v: DVector<T>,
    s: DVector<T>,
}

/// Mutable state of one solve between outer iterations.
#[derive(Debug, Clone)]
pub struct SolverState<T: Scalar> {
    pub k: usize,
    /// Current point with derivatives.
    pub eval: Evaluation<T>,
    pub slack: SlackPair<T>,
    pub mu: DVector<T>,
    pub lambda: DVector<T>,
    pub b: DMatrix<T>,
    pub rho: T,
    mult: QpMultipliers<T>,
}

impl<T: Scalar> SolverState<T> {
    pub fn x(&self) -> &DVector<T> {
        &self.eval.x
    }

    fn move_to(&mut self, eval: Evaluation<T>) {
        self.slack = slack_lift(&eval.h, &eval.g);
        self.eval = eval;
    }
}

#[derive(Debug, Clone)]
pub struct InnerOutcome<T: Scalar> {
    /// Subproblem solved at the returned point.
    pub last: QpSolution<T>,
    /// `‖d_ℓ‖∞` of that subproblem.
    pub d_norm: T,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SteeringOutcome<T: Scalar> {
    pub d_norm: T,
    pub r: T,
    /// The steered point and its step length, when a step was taken.
    pub steered: Option<(Evaluation<T>, T)>,
}

/// `ρ∇f + J_h(u - v) - J_g s`.
fn lagrangian_gradient<T: Scalar>(eval: &Evaluation<T>, rho: T, m: &QpMultipliers<T>) -> DVector<T> {
    let der = eval.derivs();
    &der.grad_f * rho + &der.jac_h * (&m.u - &m.v) - &der.jac_g * &m.s
}

fn exact_matrix<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x: &DVector<T>,
    rho: T,
    m: &QpMultipliers<T>,
    floor: T,
) -> Result<DMatrix<T>, Failure> {
    let h = lagrangian_hessian(problem, x, rho, &m.u, &m.v, &m.s)
        .map_err(|e| Failure::new(Status::EvaluationFailure, e.0))?;
    regularize(&h, floor)
        .map(|(b, _)| b)
        .map_err(|e| Failure::new(Status::SubproblemFailure, e.to_string()))
}

/// `B` at the start of an inner loop: `I`, or the shifted exact Hessian.
fn fresh_matrix<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    config: &SolverConfig<T>,
    state: &SolverState<T>,
) -> Result<DMatrix<T>, Failure> {
    let n = state.x().len();
    match config.hessian {
        HessianMode::Identity | HessianMode::DampedBfgs => Ok(DMatrix::identity(n, n)),
        HessianMode::Exact => exact_matrix(problem, state.x(), state.rho, &state.mult, config.lambda_floor),
    }
}

fn qp_solve<T: Scalar>(solver: &mut QpSolver<T>, inst: &QpInstance<T>) -> Result<QpSolution<T>, Failure> {
    match solver.solve(inst) {
        Ok(sol) => Ok(sol),
        Err(QpError::Cycling { iterations, best }) => {
            log::warn!("subproblem stopped after {iterations} active-set iterations; using best iterate");
            solver.reset();
            Ok(*best)
        }
        Err(e) => Err(Failure::new(Status::SubproblemFailure, e.to_string())),
    }
}

fn subproblem<T: Scalar>(eval: &Evaluation<T>, linear: DVector<T>, b: &DMatrix<T>) -> QpInstance<T> {
    let der = eval.derivs();
    QpInstance {
        linear,
        b: b.clone(),
        h: eval.h.clone(),
        jac_h: der.jac_h.clone(),
        g: eval.g.clone(),
        jac_g: der.jac_g.clone(),
    }
}

fn line_search_failure<E: std::fmt::Display>(e: LineSearchError<E>, what: &str) -> Failure {
    match e {
        LineSearchError::Eval(e) => Failure::new(Status::EvaluationFailure, e.to_string()),
        other => Failure::new(Status::LineSearchFailure, format!("{what}: {other}")),
    }
}

/// Runs SQP iterations on `ρ f + c` at fixed `ρ = state.rho` until a
/// subproblem predicts a violation change `r ≥ -inner_eps`.
///
/// On return `state` holds the point at which that last subproblem was
/// solved; the last direction itself is not taken.
pub fn inner_loop<T: Scalar>(
    state: &mut SolverState<T>,
    ev: &mut Evaluator<'_, T>,
    config: &SolverConfig<T>,
    qp: &mut QpSolver<T>,
    trace: &mut Trace<T>,
) -> Result<InnerOutcome<T>, Failure> {
    let rho = state.rho;
    let problem = ev.problem();
    let inner_eps = config.inner_tolerance();
    for iteration in 1..=config.max_inner {
        let inst = subproblem(&state.eval, &state.eval.derivs().grad_f * rho, &state.b);
        let sol = qp_solve(qp, &inst)?;
        let d_norm = norm_inf(&sol.d);
        if sol.r >= -inner_eps {
            trace.inner_exits.push(InnerExit {
                outer: state.k,
                x: state.x().clone(),
                r: sol.r,
                d_norm,
                iterations: iteration,
            });
            return Ok(InnerOutcome {
                last: sol,
                d_norm,
                iterations: iteration,
            });
        }

        let p_before = penalty_value(rho, state.eval.f, state.slack.total());
        let dir_deriv = directional_derivative(rho, &state.eval.derivs().grad_f, &sol.d, sol.r);
        let accepted = armijo_search(
            |x: &DVector<T>| {
                let e = ev.evaluate(x, false)?;
                let p = penalty_value(rho, e.f, violation(&e.h, &e.g));
                Ok::<_, EvalError>((p, e))
            },
            state.x(),
            &sol.d,
            p_before,
            dir_deriv,
            config.sigma,
            config.tau,
            config.max_backtracks,
        )
        .map_err(|e| line_search_failure(e, "penalty line search"))?;

        let mut next = accepted.extra;
        ev.complete(&mut next)?;
        let mult = QpMultipliers {
            u: sol.u.clone(),
            v: sol.v.clone(),
            s: sol.s.clone(),
        };
        let b_next = match config.hessian {
            HessianMode::Identity => state.b.clone(),
            HessianMode::DampedBfgs => {
                let step = &next.x - state.x();
                let y = lagrangian_gradient(&next, rho, &mult) - lagrangian_gradient(&state.eval, rho, &mult);
                damped_bfgs(&state.b, &step, &y, config.lambda_floor)
            }
            HessianMode::Exact => exact_matrix(problem, &next.x, rho, &mult, config.lambda_floor)?,
        };
        let x_before = state.x().clone();
        let dbd = sol.d.dot(&(&state.b * &sol.d));
        state.move_to(next);
        state.b = b_next;
        state.mult = mult;
        trace.inner_steps.push(InnerStep {
            outer: state.k,
            rho,
            x_before,
            x_after: state.x().clone(),
            d_norm,
            p_before,
            p_after: accepted.value,
            alpha: accepted.alpha,
            backtracks: accepted.backtracks,
            dir_deriv,
            dbd,
            slack: state.slack.clone(),
        });
    }
    Err(Failure::new(
        Status::MaxIterations,
        format!("inner loop did not finish within {} subproblems", config.max_inner),
    ))
}

/// Solves `min ½dᵀBd + c′(x; d)` at the current point and, if the step is not
/// negligible, backtracks on `c` until `c(x + αd) - c(x) ≤ σ α r`.
pub fn steering_step<T: Scalar>(
    state: &SolverState<T>,
    ev: &mut Evaluator<'_, T>,
    config: &SolverConfig<T>,
    qp: &mut QpSolver<T>,
    trace: &mut Trace<T>,
) -> Result<SteeringOutcome<T>, Failure> {
    let n = state.x().len();
    let inst = subproblem(&state.eval, DVector::zeros(n), &state.b);
    let sol = qp_solve(qp, &inst)?;
    let d_norm = norm_inf(&sol.d);
    let c_before = state.slack.total();
    let mut record = SteeringRecord {
        outer: state.k,
        d_norm,
        r: sol.r,
        f_before: state.eval.f,
        c_before,
        alpha: None,
        f_after: None,
        c_after: None,
        x_after: None,
    };
    if d_norm <= config.eps {
        trace.steering.push(record);
        return Ok(SteeringOutcome {
            d_norm,
            r: sol.r,
            steered: None,
        });
    }
    let accepted = armijo_search(
        |x: &DVector<T>| {
            let e = ev.evaluate(x, false)?;
            Ok::<_, EvalError>((violation(&e.h, &e.g), e))
        },
        state.x(),
        &sol.d,
        c_before,
        sol.r,
        config.sigma,
        config.tau,
        config.max_backtracks,
    )
    .map_err(|e| line_search_failure(e, "steering line search"))?;
    record.alpha = Some(accepted.alpha);
    record.f_after = Some(accepted.extra.f);
    record.c_after = Some(accepted.value);
    record.x_after = Some(accepted.extra.x.clone());
    trace.steering.push(record);
    Ok(SteeringOutcome {
        d_norm,
        r: sol.r,
        steered: Some((accepted.extra, accepted.alpha)),
    })
}

struct Run<'p, T: Scalar> {
    problem: &'p dyn NlpProblem<T>,
    config: SolverConfig<T>,
    ev: Evaluator<'p, T>,
    records: Vec<OuterRecord<T>>,
    trace: Trace<T>,
    total_inner: usize,
    state: Option<SolverState<T>>,
}

impl<'p, T: Scalar> Run<'p, T> {
    fn start(&mut self, x0: &DVector<T>) -> Result<(), Failure> {
        let invalid = |m: String| Failure::new(Status::EvaluationFailure, m);
        self.config.validate().map_err(invalid)?;
        validate_dimensions(self.problem).map_err(invalid)?;
        let n = self.problem.num_vars();
        if x0.len() != n {
            return Err(invalid(format!("starting point has {} entries, expected {n}", x0.len())));
        }
        if self.config.hessian == HessianMode::Exact && !self.problem.has_second_derivatives() {
            return Err(invalid(format!(
                "exact Hessian mode needs second derivatives, which `{}` does not provide",
                self.problem.name()
            )));
        }
        let eval = self.ev.evaluate(x0, true)?;
        let (me, mi) = (eval.h.len(), eval.g.len());
        let mu = DVector::from_element(me, T::one());
        let lambda = DVector::from_element(mi, T::one());
        let rho = self.config.rho0;
        let m = measures_at(&eval, &mu, &lambda, rho);
        let counts = self.ev.take_counts();
        self.records.push(OuterRecord {
            k: 0,
            x: eval.x.clone(),
            f: eval.f,
            e_dual: m.e_dual,
            e_compl: m.e_compl,
            e_feas: m.e_feas,
            iter_sb: None,
            rho,
            numf: counts.numf,
            numg: counts.numg,
        });
        // μ = v - u = 1 and λ = s = 1.
        let mult = QpMultipliers {
            u: DVector::zeros(me),
            v: DVector::from_element(me, T::one()),
            s: DVector::from_element(mi, T::one()),
        };
        let mut state = SolverState {
            k: 0,
            slack: slack_lift(&eval.h, &eval.g),
            eval,
            mu,
            lambda,
            b: DMatrix::identity(n, n),
            rho,
            mult,
        };
        state.b = fresh_matrix(self.problem, &self.config, &state)?;
        self.state = Some(state);
        Ok(())
    }

    fn iterate(&mut self) -> Result<Status, Failure> {
        let config = self.config.clone();
        let mut inner_qp = QpSolver::new();
        let mut steer_qp = QpSolver::new();
        let state = self.state.as_mut().expect("started");
        for _ in 0..config.max_outer {
            let inner = inner_loop(state, &mut self.ev, &config, &mut inner_qp, &mut self.trace)?;
            self.total_inner += inner.iterations;
            let counts = self.ev.take_counts();
            let mu = inner.last.mu();
            let lambda = inner.last.lambda();
            let m = measures_at(&state.eval, &mu, &lambda, state.rho);
            let x_k = state.x().clone();
            let f_k = state.eval.f;
            state.mu = mu;
            state.lambda = lambda;

            let steer = steering_step(state, &mut self.ev, &config, &mut steer_qp, &mut self.trace)?;
            let steered_values = steer.steered.as_ref().map(|(e, _)| SteeredValues {
                f_old: state.eval.f,
                c_old: state.slack.total(),
                f_new: e.f,
                c_new: violation(&e.h, &e.g),
            });
            let update = update_penalty(state.rho, steered_values, inner.d_norm, config.eps);
            state.mult = QpMultipliers {
                u: inner.last.u.clone(),
                v: inner.last.v.clone(),
                s: inner.last.s.clone(),
            };
            let before_steer = state.eval.clone();
            let steered = steer.steered.is_some();
            if let Some((mut e, _)) = steer.steered {
                self.ev.complete(&mut e)?;
                state.move_to(e);
            }
            if let Some((rho_rule, branch)) = update {
                let floored = rho_rule < config.rho_floor;
                let rho_new = rho_rule.max(config.rho_floor);
                self.trace.penalty_updates.push(PenaltyUpdate {
                    outer: state.k,
                    rho_before: state.rho,
                    rho_after: rho_new,
                    branch,
                    floored,
                });
                state.rho = rho_new;
                state.b = match config.hessian {
                    HessianMode::DampedBfgs if !config.reset_hessian => {
                        if steered {
                            let step = state.x() - &before_steer.x;
                            let y = lagrangian_gradient(&state.eval, state.rho, &state.mult)
                                - lagrangian_gradient(&before_steer, state.rho, &state.mult);
                            damped_bfgs(&state.b, &step, &y, config.lambda_floor)
                        } else {
                            state.b.clone()
                        }
                    }
                    _ => fresh_matrix(self.problem, &config, state)?,
                };
            }

            state.k += 1;
            self.records.push(OuterRecord {
                k: state.k,
                x: x_k,
                f: f_k,
                e_dual: m.e_dual,
                e_compl: m.e_compl,
                e_feas: m.e_feas,
                iter_sb: Some(inner.iterations),
                rho: state.rho,
                numf: counts.numf,
                numg: counts.numg,
            });
            if steer.d_norm.max(inner.d_norm) <= config.eps {
                return Ok(Status::Converged);
            }
        }
        Ok(Status::MaxIterations)
    }
}

/// Runs the method from `x0` and returns the full report.
///
/// Failures are reported through [`SolveReport::status`] and
/// [`SolveReport::message`]; the report then describes the last point reached.
pub fn solve<T: Scalar>(
    problem: &dyn NlpProblem<T>,
    x0: &DVector<T>,
    config: &SolverConfig<T>,
) -> SolveReport<T> {
    let started = Instant::now();
    let mut run = Run {
        problem,
        config: config.clone(),
        ev: Evaluator::new(problem),
        records: Vec::new(),
        trace: Trace::default(),
        total_inner: 0,
        state: None,
    };
    let outcome = run.start(x0).and_then(|_| run.iterate());
    let (status, message) = match outcome {
        Ok(Status::MaxIterations) => (
            Status::MaxIterations,
            Some(format!("no convergence within {} outer iterations", config.max_outer)),
        ),
        Ok(s) => (s, None),
        Err(f) => (f.status, Some(f.message)),
    };

    let converged = status == Status::Converged;
    let last = run.records.last().cloned();
    let (final_x, final_f) = match (&last, &run.state) {
        (Some(r), _) if converged => (r.x.clone(), r.f),
        (_, Some(s)) => (s.x().clone(), s.eval.f),
        (Some(r), None) => (r.x.clone(), r.f),
        (None, None) => (x0.clone(), T::lit(f64::NAN)),
    };
    let (final_mu, final_lambda, rho_final) = match &run.state {
        Some(s) => (s.mu.clone(), s.lambda.clone(), s.rho),
        None => (DVector::zeros(0), DVector::zeros(0), config.rho0),
    };
    let final_measures = last.as_ref().map(|r| r.measures());
    let classification = match (&final_measures, converged) {
        (Some(m), true) => {
            let history: Vec<T> = run.records.iter().map(|r| r.e_feas).collect();
            Some(classify(m, rho_final, true, &history, &config.thresholds()))
        }
        _ => None,
    };

    SolveReport {
        problem: problem.name().to_string(),
        config: config.clone(),
        records: run.records,
        status,
        classification,
        total_inner: run.total_inner,
        final_x,
        final_f,
        final_mu,
        final_lambda,
        final_measures,
        rho_final,
        message,
        trace: run.trace,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}
