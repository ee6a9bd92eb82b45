use diffbal::calculus::{ad_closed_loop, ad_standard, jacobian, Field, MatrixField, VectorField};
use diffbal::expr::{BinOp, Expr};
use diffbal::systems::{registry, ClosedLoop, SystemModel};
use proptest::prelude::*;

fn arb_poly(vars: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-8i32..8).prop_map(|k| Expr::Const(k as f64 / 4.0)),
        (0..vars).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), 1u32..4).prop_map(|(e, k)| Expr::Pow(Box::new(e), k)),
            (inner.clone(), inner, proptest::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]))
                .prop_map(|(a, b, op)| Expr::binary(op, a, b)),
        ]
    })
}

fn arb_field(n: usize) -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(arb_poly(n), n).prop_map(move |e| VectorField::new(n, e).unwrap())
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, n)
}

fn combine(a: f64, v: &VectorField, b: f64, w: &VectorField) -> VectorField {
    let exprs = v
        .exprs()
        .iter()
        .zip(w.exprs())
        .map(|(p, q)| {
            Expr::binary(
                BinOp::Add,
                Expr::binary(BinOp::Mul, Expr::Const(a), p.clone()),
                Expr::binary(BinOp::Mul, Expr::Const(b), q.clone()),
            )
        })
        .collect();
    VectorField::new(v.dim_in(), exprs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_central_differences(f in arb_field(3), x in point(3)) {
        let j = jacobian(&f, &x).unwrap();
        let h = 1e-5;
        for c in 0..3 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[c] += h;
            minus[c] -= h;
            let fp = f.eval_f64(&plus).unwrap();
            let fm = f.eval_f64(&minus).unwrap();
            for r in 0..3 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let scale = 1.0f64.max(j[(r, c)].abs()).max(fp[r].abs());
                prop_assert!((j[(r, c)] - fd).abs() <= 1e-6 * scale, "{} vs {}", j[(r, c)], fd);
            }
        }
    }

    #[test]
    fn standard_bracket_is_bilinear_and_antisymmetric(
        f in arb_field(2), v in arb_field(2), w in arb_field(2),
        a in -3.0f64..3.0, b in -3.0f64..3.0, x in point(2),
    ) {
        let lhs = ad_standard(&f, &combine(a, &v, b, &w), &x).unwrap();
        let av = ad_standard(&f, &v, &x).unwrap();
        let aw = ad_standard(&f, &w, &x).unwrap();
        let swapped = ad_standard(&v, &f, &x).unwrap();
        for i in 0..2 {
            let want = a * av[i] + b * aw[i];
            prop_assert!((lhs[i] - want).abs() <= 1e-9 * (1.0 + want.abs() + (a * av[i]).abs() + (b * aw[i]).abs()));
            prop_assert!((av[i] + swapped[i]).abs() <= 1e-9 * (1.0 + av[i].abs()));
        }
    }

    #[test]
    fn closed_loop_bracket_is_bilinear(
        v in arb_field(2), w in arb_field(2),
        a in -3.0f64..3.0, b in -3.0f64..3.0, x in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let sys = registry("paper_sec5").unwrap();
        let lhs = ad_closed_loop(&sys, &combine(a, &v, b, &w), &x).unwrap();
        let av = ad_closed_loop(&sys, &v, &x).unwrap();
        let aw = ad_closed_loop(&sys, &w, &x).unwrap();
        for i in 0..2 {
            let want = a * av[i] + b * aw[i];
            prop_assert!((lhs[i] - want).abs() <= 1e-9 * (1.0 + (a * av[i]).abs() + (b * aw[i]).abs()));
        }
    }

    #[test]
    fn closed_loop_bracket_reduces_without_feedback_or_state_dependent_g(
        f in arb_field(2), v in arb_field(2), x in point(2),
    ) {
        let g = MatrixField::parse(2, 2, 1, &["1", "-2"]).unwrap();
        let h = VectorField::parse(2, &["x1"]).unwrap();
        let k = VectorField::parse(2, &["0"]).unwrap();
        let sys = SystemModel::new("plain", f.clone(), g, h, Some(k)).unwrap();
        let closed = ad_closed_loop(&sys, &v, &x).unwrap();
        let standard = ad_standard(&f, &v, &x).unwrap();
        for i in 0..2 {
            prop_assert!((closed[i] - standard[i]).abs() <= 1e-12 * (1.0 + standard[i].abs()));
        }
    }
}

#[test]
fn closed_loop_jacobian_at_origin() {
    let sys = registry("paper_sec5").unwrap();
    let j = jacobian(&ClosedLoop(&sys), &[0.0, 0.0]).unwrap();
    assert_eq!(j.as_slice(), &[0.5, 1.0, 0.0, 0.5]);
    let frozen = sys.frozen_jacobian(&[0.3, -0.2]).unwrap();
    let g = sys.g_matrix(&[0.3, -0.2]).unwrap();
    let sum = &frozen + frozen.transpose() + &g * g.transpose();
    assert!(sum.norm() < 1e-14);
}
