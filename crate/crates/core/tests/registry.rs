use std::path::PathBuf;

use l1sqp::nlp::{check_derivatives, lagrangian_hessian, load_polynomial_problem};
use l1sqp::report::{export, import_json, render_table, ExportFormat};
use l1sqp::{problems, solve, Config, ConfigF32, NlpProblem, Vector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

#[test]
fn problem_files_match_registry() {
    for entry in problems::all() {
        let path = problem_dir().join(format!("{}.json", entry.name));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text.trim_end(), entry.problem.to_json(), "{} is stale", path.display());
        let loaded = load_polynomial_problem(&text).unwrap();
        assert_eq!(loaded, entry.problem);
        assert_eq!(loaded.x0::<f64>(), entry.x0);
    }
}

#[test]
fn gradients_agree_with_differences_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for entry in problems::all() {
        for _ in 0..100 {
            let x = DVector::from_fn(entry.x0.len(), |i, _| entry.x0[i] + rng.gen_range(-2.0..2.0));
            let rep = check_derivatives::<f64>(&entry.problem, &x, 1e-6).unwrap();
            assert!(rep.passed(), "{} at {x}: {rep:?}", entry.name);
        }
    }
}

/// Central differences of the analytic gradients.
fn fd_hessian(grad: impl Fn(&Vector) -> Vector, x: &Vector) -> DMatrix<f64> {
    let n = x.len();
    let h = 1e-5;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        out.set_column(j, &((grad(&xp) - grad(&xm)) / (2.0 * h)));
    }
    out
}

#[test]
fn second_derivatives_agree_with_differenced_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for entry in problems::all() {
        let p = &entry.problem;
        for _ in 0..20 {
            let x = DVector::from_fn(entry.x0.len(), |i, _| entry.x0[i] + rng.gen_range(-1.0..1.0));
            let sd = NlpProblem::<f64>::second_derivatives(p, &x).unwrap();
            let tol = |m: &DMatrix<f64>| 1e-5 * (1.0 + m.amax());
            let fd = fd_hessian(|y| p.objective_grad(y), &x);
            assert!((&sd.objective - &fd).amax() < tol(&fd), "{} objective", entry.name);
            for (i, hi) in sd.eq.iter().enumerate() {
                let fd = fd_hessian(|y| p.eq_jacobian(y).column(i).into_owned(), &x);
                assert!((hi - &fd).amax() < tol(&fd), "{} h[{i}]", entry.name);
            }
            for (i, gi) in sd.ineq.iter().enumerate() {
                let fd = fd_hessian(|y| p.ineq_jacobian(y).column(i).into_owned(), &x);
                assert!((gi - &fd).amax() < tol(&fd), "{} g[{i}]", entry.name);
            }
        }
    }
}

proptest! {
    #[test]
    fn lagrangian_hessian_is_linear_in_weights(
        idx in 0usize..8,
        shift in prop::collection::vec(-1.0f64..1.0, 2),
        w1 in prop::collection::vec(-2.0f64..2.0, 32),
        w2 in prop::collection::vec(-2.0f64..2.0, 32),
    ) {
        let entry = problems::all().swap_remove(idx);
        let p = &entry.problem;
        let n = entry.x0.len();
        let (me, mi) = (NlpProblem::<f64>::num_eq(p), NlpProblem::<f64>::num_ineq(p));
        prop_assume!(1 + 2 * me + mi <= 32);
        let x = DVector::from_fn(n, |i, _| entry.x0[i] + shift[i % 2]);
        let split = |w: &[f64]| {
            (
                w[0],
                DVector::from_fn(me, |i, _| w[1 + i]),
                DVector::from_fn(me, |i, _| w[1 + me + i]),
                DVector::from_fn(mi, |i, _| w[1 + 2 * me + i]),
            )
        };
        let (r1, u1, v1, s1) = split(&w1);
        let (r2, u2, v2, s2) = split(&w2);
        let h1 = lagrangian_hessian::<f64>(p, &x, r1, &u1, &v1, &s1).unwrap();
        let h2 = lagrangian_hessian::<f64>(p, &x, r2, &u2, &v2, &s2).unwrap();
        let h12 = lagrangian_hessian::<f64>(p, &x, r1 + r2, &(&u1 + &u2), &(&v1 + &v2), &(&s1 + &s2)).unwrap();
        let sum = h1 + h2;
        prop_assert!((&h12 - &sum).amax() <= 1e-12 * (1.0 + sum.amax()));
        prop_assert_eq!(h12.transpose(), h12.clone());
    }
}

#[test]
fn json_export_round_trips() {
    let entry = problems::get("tp3").unwrap();
    let report = solve(&entry.problem, &entry.x0, &entry.config(Config::default()));
    let text = export(&report, ExportFormat::Json);
    let back = import_json::<f64>(&text).unwrap();
    assert_eq!(export(&back, ExportFormat::Json), text);
    assert_eq!(back.final_x, report.final_x);
    assert_eq!(back.records.len(), report.records.len());
    // Vectors are plain arrays.
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["final_x"].as_array().unwrap().iter().all(|c| c.is_f64()));
}

#[test]
fn csv_has_one_row_per_record_and_is_deterministic() {
    let entry = problems::get("tp3").unwrap();
    let config = entry.config(Config::default());
    let a = export(&solve(&entry.problem, &entry.x0, &config), ExportFormat::Csv);
    let b = export(&solve(&entry.problem, &entry.x0, &config), ExportFormat::Csv);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "k,f,e_dual,e_compl,e_feas,iter_sb,rho,numf,numg,x1,x2");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,"));
    // Row 0 has no subproblem count.
    assert_eq!(lines[1].split(',').nth(5), Some(""));
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), 11);
    }
}

#[test]
fn table_renders_without_records() {
    let entry = problems::get("tp4").unwrap();
    let mut report = solve(&entry.problem, &entry.x0, &entry.config(Config::default()));
    report.records.clear();
    let table = render_table(&report);
    assert!(table.starts_with("problem: tp4\n"));
    assert!(table.contains("E_dual"));
    assert!(table.contains("inner iterations needed"));
}

#[test]
fn single_precision_run_matches_double_on_tp4() {
    let entry = problems::get("tp4").unwrap();
    let r64 = solve(&entry.problem, &entry.x0, &entry.config(Config::default()));
    let config = ConfigF32 {
        eps: 1e-4,
        ..entry.config(ConfigF32::default())
    };
    let r32 = solve(&entry.problem, &entry.x0_as::<f32>(), &config);
    assert!(r32.converged(), "{:?}", r32.message);
    assert_eq!(r32.outcome(), r64.outcome());
    assert!((r32.final_x[0] as f64 - r64.final_x[0]).abs() < 1e-3);
}
