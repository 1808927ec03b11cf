//! Checks shared by the oracle test and the acceptance runner.

use l1sqp::norm_inf;
use l1sqp::qp::oracle::oracle_solve;
use l1sqp::qp::random::{random_instance, InstanceShape};
use l1sqp::qp::{solve, QpInstance, QpSolution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ORACLE_SEED: u64 = 20240611;
pub const ORACLE_CASES: usize = 200;
pub const ORACLE_RESOLUTION: usize = 15;

#[derive(Debug, Default)]
pub struct OracleSummary {
    pub cases: usize,
    pub worst_model_gap: f64,
    pub worst_direction_gap: f64,
    pub worst_complementarity: f64,
    pub worst_kkt: f64,
    pub failures: Vec<String>,
}

pub fn complementarity(inst: &QpInstance<f64>, sol: &QpSolution<f64>) -> f64 {
    let rh = &inst.h + inst.jac_h.tr_mul(&sol.d);
    let rg = &inst.g + inst.jac_g.tr_mul(&sol.d);
    let mut worst = 0.0f64;
    for i in 0..rh.len() {
        worst = worst
            .max((sol.u[i] * (sol.y_plus[i] - rh[i])).abs())
            .max((sol.v[i] * (sol.y_plus[i] + rh[i])).abs());
    }
    for i in 0..rg.len() {
        worst = worst
            .max((sol.s[i] * (sol.z_plus[i] + rg[i])).abs())
            .max((sol.t[i] * sol.z_plus[i]).abs());
    }
    worst
}

fn multipliers_in_box(sol: &QpSolution<f64>) -> bool {
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    let eq = (0..sol.u.len())
        .all(|i| unit(sol.u[i]) && unit(sol.v[i]) && sol.u[i] + sol.v[i] == 1.0);
    let ineq = (0..sol.s.len())
        .all(|i| unit(sol.s[i]) && unit(sol.t[i]) && sol.s[i] + sol.t[i] == 1.0);
    eq && ineq
}

/// Compares the active-set solver with the brute-force oracle on seeded
/// random instances.
pub fn oracle_comparison(seed: u64, cases: usize) -> OracleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = OracleSummary {
        cases,
        ..Default::default()
    };
    for case in 0..cases {
        let inst: QpInstance<f64> = random_instance(&mut rng, InstanceShape::default());
        let fast = match solve(&inst) {
            Ok(s) => s,
            Err(e) => {
                out.failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let slow = oracle_solve(&inst, ORACLE_RESOLUTION).expect("oracle within budget");
        let dm = (inst.model_value(&fast.d) - inst.model_value(&slow.d)).abs();
        let dd = norm_inf(&(&fast.d - &slow.d));
        let c = complementarity(&inst, &fast);
        out.worst_model_gap = out.worst_model_gap.max(dm);
        out.worst_direction_gap = out.worst_direction_gap.max(dd);
        out.worst_complementarity = out.worst_complementarity.max(c);
        out.worst_kkt = out.worst_kkt.max(fast.kkt_residual);
        if dm > 1e-6 {
            out.failures.push(format!("case {case}: model gap {dm:e}"));
        }
        if dd > 1e-4 {
            out.failures.push(format!("case {case}: direction gap {dd:e}"));
        }
        if !multipliers_in_box(&fast) {
            out.failures.push(format!("case {case}: multiplier identities violated"));
        }
        if c > 1e-10 {
            out.failures.push(format!("case {case}: complementarity {c:e}"));
        }
        if fast.kkt_residual > 1e-9 {
            out.failures.push(format!("case {case}: kkt residual {:e}", fast.kkt_residual));
        }
        let decrease = inst.quadratic_part(&fast.d) + fast.r;
        if decrease > 1e-12 {
            out.failures.push(format!("case {case}: model increase {decrease:e}"));
        }
    }
    out
}
