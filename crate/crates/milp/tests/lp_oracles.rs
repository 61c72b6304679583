//! LP oracles: strong duality on random programs, redundant-row deletion,
//! pure LPs through branch-and-bound and the cutting-plane loop.

use gridharden_milp::{
    solve_lp, solve_milp, solve_with_cuts, Constraint, CutLoopOptions, LinearProgram, LpOptions, MilpOptions,
    Sense, Separation, Status, VarKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feasible, bounded program with `m` rows and `n` columns: rows are
/// built around a known interior point, every column with an infinite upper
/// bound has a nonnegative cost.
fn random_lp(seed: u64, m: usize, n: usize) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = LinearProgram::new(format!("rand{seed}"));
    let mut x0 = Vec::with_capacity(n);
    for j in 0..n {
        let lower = if rng.random_bool(0.2) { -rng.random_range(0.0..3.0) } else { 0.0 };
        let (upper, cost) = if rng.random_bool(0.25) {
            (f64::INFINITY, rng.random_range(0.0..5.0))
        } else {
            (lower + rng.random_range(0.5..8.0), rng.random_range(-5.0..5.0))
        };
        lp.add_variable(format!("x{j}"), VarKind::Continuous, lower, upper, cost);
        let hi = if upper.is_finite() { upper } else { lower + 4.0 };
        x0.push(rng.random_range(lower..hi));
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.3) {
                coeffs.push((j, rng.random_range(-4.0..4.0)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.random_range(0..n), 1.0));
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let (sense, rhs) = match rng.random_range(0..3) {
            0 => (Sense::Le, act + rng.random_range(0.0..2.0)),
            1 => (Sense::Ge, act - rng.random_range(0.0..2.0)),
            _ => (Sense::Eq, act),
        };
        lp.add_constraint(format!("r{i}"), "rand", coeffs, sense, rhs);
    }
    lp
}

/// Dual objective `b'y + sum_j (bound picked by the sign of d_j) * d_j`.
/// Reduced costs within round-off of zero are paired with the primal value,
/// which keeps free and half-bounded columns finite.
fn dual_objective(lp: &LinearProgram, y: &[f64], d: &[f64], x: &[f64]) -> f64 {
    let rows: f64 = lp.constraints.iter().zip(y).map(|(c, yi)| c.rhs * yi).sum();
    let bounds: f64 = lp
        .variables
        .iter()
        .zip(d)
        .zip(x)
        .map(|((v, &dj), &xj)| {
            if dj > 1e-9 {
                dj * v.lower
            } else if dj < -1e-9 {
                dj * v.upper
            } else {
                dj * xj
            }
        })
        .sum();
    rows + bounds + lp.objective_offset
}

fn check_optimality(lp: &LinearProgram, seed: u64) {
    let r = solve_lp(lp, &LpOptions::default()).unwrap();
    assert_eq!(r.status, Status::Optimal, "seed {seed}");
    assert!(lp.max_violation(&r.x) <= 1e-7, "seed {seed}: violation {}", lp.max_violation(&r.x));
    let y = r.duals.as_ref().unwrap();
    let d = r.reduced_costs.as_ref().unwrap();
    let scale = 1.0 + r.objective.abs();
    // Dual sign feasibility and complementary slackness on rows.
    for (c, &yi) in lp.constraints.iter().zip(y) {
        match c.sense {
            Sense::Le => assert!(yi <= 1e-9, "seed {seed}: <= row dual {yi}"),
            Sense::Ge => assert!(yi >= -1e-9, "seed {seed}: >= row dual {yi}"),
            Sense::Eq => {}
        }
        let slack = (c.activity(&r.x) - c.rhs).abs();
        assert!(yi.abs() * slack <= 1e-7 * scale, "seed {seed}: row {} slack {slack} dual {yi}", c.name);
    }
    // Reduced-cost signs match the bound each column sits at.
    for (j, (v, &dj)) in lp.variables.iter().zip(d).enumerate() {
        let at_lo = (r.x[j] - v.lower).abs() <= 1e-9;
        let at_hi = (r.x[j] - v.upper).abs() <= 1e-9;
        if dj > 1e-9 {
            assert!(at_lo, "seed {seed}: x{j} has d={dj} but is not at its lower bound");
        } else if dj < -1e-9 {
            assert!(at_hi, "seed {seed}: x{j} has d={dj} but is not at its upper bound");
        }
    }
    let dual = dual_objective(lp, y, d, &r.x);
    assert!(
        (dual - r.objective).abs() <= 1e-7 * scale,
        "seed {seed}: primal {} dual {dual}",
        r.objective
    );
}

#[test]
fn random_20x30_strong_duality() {
    for seed in 0..200 {
        check_optimality(&random_lp(seed, 20, 30), seed);
    }
}

#[test]
fn random_larger_programs_strong_duality() {
    for seed in 1000..1020 {
        check_optimality(&random_lp(seed, 120, 150), seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_duality_holds(seed in any::<u64>(), m in 1usize..25, n in 1usize..25) {
        check_optimality(&random_lp(seed, m, n), seed);
    }
}

/// Adding scaled copies and sums of existing rows must not move the optimum.
#[test]
fn redundant_rows_do_not_change_objective() {
    for seed in 0..50 {
        let lp = random_lp(seed, 12, 18);
        let base = solve_lp(&lp, &LpOptions::default()).unwrap();
        assert_eq!(base.status, Status::Optimal);

        let mut dup = lp.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for k in 0..8 {
            let src = &lp.constraints[rng.random_range(0..lp.num_rows())];
            let s = rng.random_range(0.5..3.0);
            dup.add_constraint(
                format!("dup{k}"),
                "redundant",
                src.coeffs.iter().map(|&(j, a)| (j, a * s)).collect(),
                src.sense,
                src.rhs * s,
            );
        }
        // Sum of two equality rows is itself redundant (and degenerate).
        let eqs: Vec<&Constraint> = lp.constraints.iter().filter(|c| c.sense == Sense::Eq).collect();
        if eqs.len() >= 2 {
            let mut merged = std::collections::BTreeMap::new();
            for &(j, a) in eqs[0].coeffs.iter().chain(&eqs[1].coeffs) {
                *merged.entry(j).or_insert(0.0) += a;
            }
            let coeffs = merged.into_iter().filter(|&(_, a)| a != 0.0).collect();
            dup.add_constraint("sum", "redundant", coeffs, Sense::Eq, eqs[0].rhs + eqs[1].rhs);
        }
        let r = solve_lp(&dup, &LpOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal, "seed {seed}");
        let tol = 1e-7 * (1.0 + base.objective.abs());
        assert!((r.objective - base.objective).abs() <= tol, "seed {seed}: {} vs {}", r.objective, base.objective);
    }
}

#[test]
fn pure_lp_through_branch_and_bound_equals_solve_lp() {
    for seed in 0..30 {
        let lp = random_lp(seed, 15, 20);
        let a = solve_lp(&lp, &LpOptions::default()).unwrap();
        let b = solve_milp(&lp, &MilpOptions::default()).unwrap();
        assert_eq!(b.status, Status::Optimal);
        assert_eq!(b.nodes, 1);
        assert!((a.objective - b.objective).abs() <= 1e-9 * (1.0 + a.objective.abs()), "seed {seed}");
    }
}

/// min l  s.t. P = 0.6, v = 1, P^2 <= l v, separated by tangent cuts.
fn cone_toy() -> LinearProgram {
    let mut lp = LinearProgram::new("cone");
    let p = lp.add_variable("P", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let v = lp.add_variable("v", VarKind::Continuous, 0.0, 10.0, 0.0);
    let _l = lp.add_variable("l", VarKind::Continuous, 0.0, 100.0, 1.0);
    lp.add_constraint("p", "fix", vec![(p, 1.0)], Sense::Eq, 0.6);
    lp.add_constraint("v", "fix", vec![(v, 1.0)], Sense::Eq, 1.0);
    lp
}

/// Cuts for `P^2 <= l v` via the rotated-cone form `||(2P, l - v)|| <= l + v`.
fn cone_oracle(x: &[f64]) -> Separation {
    let (p, v, l) = (x[0], x[1], x[2]);
    let norm = ((2.0 * p).powi(2) + (l - v).powi(2)).sqrt();
    let violation = (p * p - l * v).max(0.0);
    if norm - (l + v) <= 1e-12 || norm == 0.0 {
        return Separation { cuts: Vec::new(), max_violation: violation };
    }
    // Gradient cut: (2P*2P + (l-v)(l-v'))/norm <= l + v, linearized at x.
    let gp = 4.0 * p / norm;
    let gl = (l - v) / norm;
    let cut = Constraint {
        name: String::new(),
        tag: "cone".into(),
        coeffs: vec![(0, gp), (1, -gl - 1.0), (2, gl - 1.0)],
        sense: Sense::Le,
        rhs: 0.0,
    };
    Separation { cuts: vec![cut], max_violation: violation }
}

#[test]
fn cone_cut_loop_converges_to_analytic_value() {
    let mut oracle = cone_oracle;
    let out = solve_with_cuts(cone_toy(), &mut oracle, &CutLoopOptions::default()).unwrap();
    assert_eq!(out.report.status, Status::Optimal);
    assert!((out.report.x[2] - 0.36).abs() <= 1e-6, "l = {}", out.report.x[2]);
    for w in out.objective_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "objective decreased: {:?}", out.objective_trace);
    }
    // Every returned point satisfies all appended cuts.
    for c in &out.program.constraints {
        assert!(c.violation(&out.report.x) <= 1e-9, "cut {} violated", c.name);
    }
}

#[test]
fn silent_oracle_matches_plain_solve() {
    for seed in 0..10 {
        let lp = random_lp(seed, 10, 12);
        let plain = solve_lp(&lp, &LpOptions::default()).unwrap();
        let mut oracle = |_: &[f64]| Separation::default();
        let out = solve_with_cuts(lp, &mut oracle, &CutLoopOptions::default()).unwrap();
        assert_eq!(out.rounds, 0);
        assert_eq!(out.report.x, plain.x);
        assert_eq!(out.report.objective, plain.objective);
    }
}
