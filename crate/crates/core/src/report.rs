//! Solve reports: per-outer-iteration records, the inner trace, and rendering
//! as a text table, CSV or JSON.

use std::fmt::{self, Write as _};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::merit::SlackPair;
use crate::sqp::SolverConfig;
use crate::stationarity::{Classification, StationarityMeasures};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Converged,
    MaxIterations,
    LineSearchFailure,
    EvaluationFailure,
    /// The QP solver failed (factorization, singular working set, cycling).
    SubproblemFailure,
}

impl Status {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::MaxIterations => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Running => "running",
            Status::Converged => "converged",
            Status::MaxIterations => "iteration limit reached",
            Status::LineSearchFailure => "line search failed",
            Status::EvaluationFailure => "function evaluation failed",
            Status::SubproblemFailure => "subproblem solve failed",
        })
    }
}

/// One table row. Row `k ≥ 1` describes the point returned by the `k`-th
/// inner loop, measured with that loop's penalty parameter and multipliers;
/// `rho` is the parameter after the update that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OuterRecord<T: Scalar> {
    pub k: usize,
    #[serde(with = "crate::serde_la::vector")]
    pub x: DVector<T>,
    pub f: T,
    pub e_dual: T,
    pub e_compl: T,
    pub e_feas: T,
    /// Subproblems solved by the inner loop; `None` for the starting row.
    pub iter_sb: Option<usize>,
    pub rho: T,
    pub numf: usize,
    pub numg: usize,
}

impl<T: Scalar> OuterRecord<T> {
    pub fn measures(&self) -> StationarityMeasures<T> {
        StationarityMeasures {
            e_dual: self.e_dual,
            e_compl: self.e_compl,
            e_feas: self.e_feas,
        }
    }
}

/// One accepted inner step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InnerStep<T: Scalar> {
    pub outer: usize,
    pub rho: T,
    #[serde(with = "crate::serde_la::vector")]
    pub x_before: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub x_after: DVector<T>,
    pub d_norm: T,
    pub p_before: T,
    pub p_after: T,
    pub alpha: T,
    pub backtracks: usize,
    /// `ρ∇fᵀd + r`.
    pub dir_deriv: T,
    /// `dᵀBd`.
    pub dbd: T,
    /// Slacks stored with `x_after`.
    pub slack: SlackPair<T>,
}

/// End of an inner loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InnerExit<T: Scalar> {
    pub outer: usize,
    #[serde(with = "crate::serde_la::vector")]
    pub x: DVector<T>,
    pub r: T,
    pub d_norm: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SteeringRecord<T: Scalar> {
    pub outer: usize,
    pub d_norm: T,
    pub r: T,
    pub f_before: T,
    pub c_before: T,
    /// Present when a steering step was taken.
    pub alpha: Option<T>,
    pub f_after: Option<T>,
    pub c_after: Option<T>,
    #[serde(with = "crate::serde_la::option_vector")]
    pub x_after: Option<DVector<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyBranch {
    /// Steered and the penalty value rose: ratio rule.
    Ratio,
    /// Steered without a penalty increase: `min{0.1ρ, ρ^1.5}`.
    Steered,
    /// No steering step but the inner direction was not small: `min{0.01ρ, ρ^1.5}`.
    InnerDirection,
    /// Ratio rule with a degenerate denominator: `0.01ρ`.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PenaltyUpdate<T> {
    pub outer: usize,
    pub rho_before: T,
    pub rho_after: T,
    pub branch: PenaltyBranch,
    /// The rule's value was below the configured floor and was raised to it.
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Trace<T: Scalar> {
    pub inner_steps: Vec<InnerStep<T>>,
    pub inner_exits: Vec<InnerExit<T>>,
    pub steering: Vec<SteeringRecord<T>>,
    pub penalty_updates: Vec<PenaltyUpdate<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolveReport<T: Scalar> {
    pub problem: String,
    pub config: SolverConfig<T>,
    pub records: Vec<OuterRecord<T>>,
    pub status: Status,
    /// Present exactly when the run converged.
    pub classification: Option<Classification<T>>,
    pub total_inner: usize,
    #[serde(with = "crate::serde_la::vector")]
    pub final_x: DVector<T>,
    pub final_f: T,
    #[serde(with = "crate::serde_la::vector")]
    pub final_mu: DVector<T>,
    #[serde(with = "crate::serde_la::vector")]
    pub final_lambda: DVector<T>,
    pub final_measures: Option<StationarityMeasures<T>>,
    pub rho_final: T,
    /// Diagnostic for failed runs.
    pub message: Option<String>,
    pub trace: Trace<T>,
    pub wall_time_secs: f64,
}

impl<T: Scalar> SolveReport<T> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Every accepted point in order: the start, then per outer iteration its
    /// inner steps followed by the steered point.
    pub fn iterate_path(&self) -> Vec<DVector<T>> {
        let mut path: Vec<DVector<T>> = self.records.first().map(|r| r.x.clone()).into_iter().collect();
        let outers = self.records.len().saturating_sub(1);
        for k in 0..outers {
            path.extend(
                self.trace
                    .inner_steps
                    .iter()
                    .filter(|s| s.outer == k)
                    .map(|s| s.x_after.clone()),
            );
            path.extend(
                self.trace
                    .steering
                    .iter()
                    .filter(|s| s.outer == k)
                    .filter_map(|s| s.x_after.clone()),
            );
        }
        path
    }

    /// Classification label, or the status for unconverged runs.
    pub fn outcome(&self) -> String {
        match &self.classification {
            Some(c) => c.kind.to_string(),
            None => self.status.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Table cell for a real number: integers bare, `|v| ≥ 1e-3` with four
/// decimals, smaller magnitudes in four-decimal scientific notation.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    if v.abs() >= 1e-3 {
        format!("{v:.4}")
    } else {
        format_sci(v)
    }
}

/// Penalty parameters keep a decimal point when integral (`1.0`, `100.0`).
fn format_rho(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format_number(v)
    }
}

/// `1.0000e-09` style: four-decimal mantissa, signed two-digit exponent.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.4e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

const HEADER: [&str; 9] = [
    "k", "f_k", "E_dual", "E_compl", "E_feas", "iter-sb", "rho_k", "numf_k", "numg_k",
];

/// Renders the trajectory as an aligned text table, one row per outer iteration.
pub fn render_table<T: Scalar>(report: &SolveReport<T>) -> String {
    let mut rows: Vec<[String; 9]> = Vec::with_capacity(report.records.len());
    for r in &report.records {
        rows.push([
            r.k.to_string(),
            format_number(r.f.as_f64()),
            format_number(r.e_dual.as_f64()),
            format_number(r.e_compl.as_f64()),
            format_number(r.e_feas.as_f64()),
            r.iter_sb.map_or_else(|| "-".to_string(), |n| n.to_string()),
            format_rho(r.rho.as_f64()),
            r.numf.to_string(),
            r.numg.to_string(),
        ]);
    }
    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };

    let mut out = String::new();
    let _ = writeln!(out, "problem: {}", report.problem);
    let _ = writeln!(out, "{}", line(&HEADER));
    let width = widths.iter().sum::<usize>() + 3 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(width));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", line(&cells));
    }
    let _ = writeln!(out, "{} inner iterations needed", report.total_inner);
    let _ = writeln!(out, "status: {}", report.status);
    if let Some(c) = &report.classification {
        let _ = writeln!(out, "classification: {}", c.kind);
    }
    if let Some(msg) = &report.message {
        let _ = writeln!(out, "message: {msg}");
    }
    let _ = writeln!(out, "final x: {}", crate::scalar::fmt_vec(&report.final_x));
    let _ = writeln!(out, "# wall time: {:.3} s", report.wall_time_secs);
    out
}

fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = [
        "k", "f", "e_dual", "e_compl", "e_feas", "iter_sb", "rho", "numf", "numg",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.join(",")
}

/// CSV (one row per record, shortest round-trip numbers, no timing) or JSON
/// (the whole report).
pub fn export<T: Scalar>(report: &SolveReport<T>, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ExportFormat::Csv => {
            let n = report.final_x.len();
            let mut out = csv_header(n);
            out.push('\n');
            for r in &report.records {
                let mut cells = vec![
                    r.k.to_string(),
                    format!("{:e}", r.f),
                    format!("{:e}", r.e_dual),
                    format!("{:e}", r.e_compl),
                    format!("{:e}", r.e_feas),
                    r.iter_sb.map_or_else(String::new, |n| n.to_string()),
                    format!("{:e}", r.rho),
                    r.numf.to_string(),
                    r.numg.to_string(),
                ];
                cells.extend(r.x.iter().map(|v| format!("{v:e}")));
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
    }
}

/// Parses a JSON export back into a report.
pub fn import_json<T: Scalar + serde::de::DeserializeOwned>(
    text: &str,
) -> serde_json::Result<SolveReport<T>> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(format_number(5.0), "5");
        assert_eq!(format_number(-4.0), "-4");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.80321), "-0.8032");
        assert_eq!(format_number(0.99999), "1.0000");
        assert_eq!(format_number(5.0886e-9), "5.0886e-09");
        assert_eq!(format_number(2.1018e-4), "2.1018e-04");
        assert_eq!(format_number(1e-30), "1.0000e-30");
        assert_eq!(format_rho(1.0), "1.0");
        assert_eq!(format_rho(0.01), "0.0100");
        assert_eq!(format_rho(1e-9), "1.0000e-09");
        assert_eq!(format_sci(1.5e120), "1.5000e+120");
    }
}
