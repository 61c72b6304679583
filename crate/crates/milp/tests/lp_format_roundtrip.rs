//! LP-format export and re-import preserve the program exactly.

use gridharden_milp::lp_format::{self, WriteOptions};
use gridharden_milp::{solve_milp, LinearProgram, MilpOptions, Sense, VarKind};
use proptest::prelude::*;

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        -1e6..1e6f64,
        (-1e-3..1e-3f64).prop_filter("nonzero", |v| *v != 0.0),
        Just(1.0 / 3.0),
        Just(-0.1),
    ]
}

#[derive(Debug, Clone)]
struct VarSpec {
    kind: VarKind,
    lower: f64,
    upper: f64,
    obj: f64,
}

fn var_spec() -> impl Strategy<Value = VarSpec> {
    (any::<bool>(), coef(), 0u8..4, coef()).prop_map(|(binary, a, shape, obj)| {
        if binary {
            return VarSpec { kind: VarKind::Binary, lower: 0.0, upper: 1.0, obj };
        }
        let (lower, upper) = match shape {
            0 => (0.0, f64::INFINITY),
            1 => (f64::NEG_INFINITY, f64::INFINITY),
            2 => (a.min(0.0), a.max(0.0) + 1.0),
            _ => (f64::NEG_INFINITY, a),
        };
        VarSpec { kind: VarKind::Continuous, lower, upper, obj }
    })
}

fn program() -> impl Strategy<Value = LinearProgram> {
    prop::collection::vec(var_spec(), 1..12).prop_flat_map(|vars| {
        let n = vars.len();
        let row = (prop::collection::btree_map(0..n, coef(), 1..=n), 0u8..3, coef());
        (Just(vars), prop::collection::vec(row, 0..10), coef()).prop_map(|(vars, rows, offset)| {
            let mut lp = LinearProgram::new("prop");
            lp.objective_offset = offset;
            for (j, v) in vars.iter().enumerate() {
                lp.add_variable(format!("x{j}"), v.kind, v.lower, v.upper, v.obj);
            }
            for (i, (coeffs, sense, rhs)) in rows.into_iter().enumerate() {
                let sense = [Sense::Le, Sense::Ge, Sense::Eq][sense as usize];
                lp.add_constraint(format!("r{i}"), "", coeffs.into_iter().collect(), sense, rhs);
            }
            lp
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn write_then_parse_is_identity(lp in program()) {
        let text = lp_format::write(&lp).unwrap();
        let back = lp_format::parse(&text).unwrap();
        prop_assert_eq!(&back, &lp);
        prop_assert_eq!(lp_format::write(&back).unwrap(), text);
    }

    #[test]
    fn numbers_survive_formatting(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(lp_format::format_number(v).parse::<f64>().unwrap(), v);
    }
}

#[test]
fn tag_comments_are_ignored_on_read() {
    let mut lp = LinearProgram::new("tags");
    let x = lp.add_variable("x", VarKind::Binary, 0.0, 1.0, -1.0);
    let y = lp.add_variable("y", VarKind::Continuous, 0.0, 4.0, 2.0);
    lp.add_constraint("c", "ug-budget", vec![(x, 3.0), (y, 1.0)], Sense::Le, 5.0);
    let text = lp_format::write_with(&lp, WriteOptions { tag_comments: true }).unwrap();
    assert!(text.contains("\\ [ug-budget]"));
    assert!(text.contains("Binaries"));
    let back = lp_format::parse(&text).unwrap();
    lp.constraints[0].tag.clear();
    assert_eq!(back, lp);
}

#[test]
fn reimported_milp_has_identical_optimum() {
    let mut lp = LinearProgram::new("reimport");
    let w = [12.0, 7.0, 11.0, 8.0, 9.0];
    let v = [24.0, 13.0, 23.0, 15.0, 16.0];
    let coeffs = (0..5)
        .map(|i| (lp.add_variable(format!("x{i}"), VarKind::Binary, 0.0, 1.0, -v[i]), w[i]))
        .collect();
    lp.add_constraint("cap", "capacity", coeffs, Sense::Le, 26.0);
    let back = lp_format::parse(&lp_format::write(&lp).unwrap()).unwrap();
    let a = solve_milp(&lp, &MilpOptions::default()).unwrap();
    let b = solve_milp(&back, &MilpOptions::default()).unwrap();
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.objective, -51.0);
}
