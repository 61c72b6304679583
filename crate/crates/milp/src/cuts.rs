//! Cutting-plane loop: solve, ask an oracle for violated linear cuts, append
//! them and re-solve from the previous basis.

use log::debug;

use crate::problem::{Constraint, LinearProgram};
use crate::report::{SolveReport, Status};
use crate::simplex::{solve_lp_warm, LpOptions};
use crate::{MilpError, Result};

/// Oracle answer for one LP point.
#[derive(Debug, Clone, Default)]
pub struct Separation {
    pub cuts: Vec<Constraint>,
    /// Largest violation of the nonlinear constraints at the queried point.
    pub max_violation: f64,
}

pub trait ViolationOracle {
    fn separate(&mut self, x: &[f64]) -> Separation;
}

impl<F: FnMut(&[f64]) -> Separation> ViolationOracle for F {
    fn separate(&mut self, x: &[f64]) -> Separation {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct CutLoopOptions {
    /// Stop once the oracle reports a violation below this.
    pub tol: f64,
    pub max_rounds: usize,
    pub lp: LpOptions,
}

impl Default for CutLoopOptions {
    fn default() -> Self {
        let lp = LpOptions::default();
        Self {
            tol: lp.tolerances.cone,
            max_rounds: 200,
            lp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CutLoopReport {
    pub report: SolveReport,
    /// Number of LP re-solves after the first one.
    pub rounds: usize,
    pub cuts_added: usize,
    /// LP objective after every solve; non-decreasing since cuts only tighten.
    pub objective_trace: Vec<f64>,
    pub final_violation: f64,
    /// The program including every appended cut.
    pub program: LinearProgram,
}

/// Run the loop on `lp`. A non-optimal LP status ends the loop and is
/// returned as-is; running out of rounds with a violated point is an error.
pub fn solve_with_cuts(
    mut lp: LinearProgram,
    oracle: &mut impl ViolationOracle,
    opts: &CutLoopOptions,
) -> Result<CutLoopReport> {
    let mut basis = None;
    let mut trace = Vec::new();
    let mut cuts_added = 0;
    let mut round = 0;
    loop {
        let (report, b) = solve_lp_warm(&lp, basis.as_ref(), &opts.lp)?;
        if report.status != Status::Optimal {
            return Ok(CutLoopReport {
                report,
                rounds: round,
                cuts_added,
                objective_trace: trace,
                final_violation: f64::INFINITY,
                program: lp,
            });
        }
        trace.push(report.objective);
        let sep = oracle.separate(&report.x);
        debug!(
            "cut round {round}: objective {:.10e}, violation {:.3e}, {} cuts",
            report.objective,
            sep.max_violation,
            sep.cuts.len()
        );
        if sep.max_violation < opts.tol || sep.cuts.is_empty() {
            return Ok(CutLoopReport {
                report,
                rounds: round,
                cuts_added,
                objective_trace: trace,
                final_violation: sep.max_violation,
                program: lp,
            });
        }
        if round >= opts.max_rounds {
            return Err(MilpError::CutNonconvergence {
                rounds: round,
                violation: sep.max_violation,
            });
        }
        cuts_added += sep.cuts.len();
        lp.constraints.extend(sep.cuts);
        basis = Some(b);
        round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Sense, VarKind};

    #[test]
    fn circle_outer_approximation_converges() {
        // max x + y on the unit disc, approximated by tangent cuts.
        let mut lp = LinearProgram::new("disc");
        let x = lp.add_variable("x", VarKind::Continuous, -2.0, 2.0, -1.0);
        let y = lp.add_variable("y", VarKind::Continuous, -2.0, 2.0, -1.0);
        let mut oracle = |p: &[f64]| {
            let r = (p[x] * p[x] + p[y] * p[y]).sqrt();
            let viol = (r - 1.0).max(0.0);
            let mut cuts = Vec::new();
            if viol > 0.0 {
                cuts.push(Constraint {
                    name: format!("t{}", r),
                    tag: "disc".into(),
                    coeffs: vec![(x, p[x] / r), (y, p[y] / r)],
                    sense: Sense::Le,
                    rhs: 1.0,
                });
            }
            Separation { cuts, max_violation: viol }
        };
        let opts = CutLoopOptions { tol: 1e-7, ..Default::default() };
        let out = solve_with_cuts(lp, &mut oracle, &opts).unwrap();
        assert!((out.report.objective + 2f64.sqrt()).abs() < 1e-6, "{}", out.rounds);
        assert!(out.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn round_limit_is_an_error() {
        let mut lp = LinearProgram::new("never");
        let x = lp.add_variable("x", VarKind::Continuous, 0.0, 1.0, -1.0);
        let mut oracle = |_: &[f64]| Separation {
            cuts: vec![Constraint {
                name: "noop".into(),
                tag: String::new(),
                coeffs: vec![(x, 1.0)],
                sense: Sense::Le,
                rhs: 5.0,
            }],
            max_violation: 1.0,
        };
        let opts = CutLoopOptions { max_rounds: 3, ..Default::default() };
        let err = solve_with_cuts(lp, &mut oracle, &opts).unwrap_err();
        assert!(matches!(err, MilpError::CutNonconvergence { rounds: 3, .. }));
    }
}
