use diffbal::calculus::{Field, VectorField};
use diffbal::expr::{BinOp, Expr};
use diffbal::integrate::{
    flow_with_jacobian, improper_time_integral, integrate_backward, integrate_ivp, Direction,
    ImproperOptions, OdeOptions,
};
use diffbal::systems::{registry, ClosedLoop, Drift};
use diffbal::Error;
use proptest::prelude::*;

fn arb_poly(vars: usize) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-4i32..4).prop_map(|k| Expr::Const(k as f64 / 4.0)),
        (0..vars).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (inner.clone(), inner, proptest::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]))
            .prop_map(|(a, b, op)| Expr::binary(op, a, b))
    })
}

/// `-x + eps p(x)`: contracting near the origin.
fn arb_contracting(n: usize) -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(arb_poly(n), n).prop_map(move |ps| {
        let exprs = ps
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                Expr::binary(
                    BinOp::Add,
                    Expr::Neg(Box::new(Expr::Var(i))),
                    Expr::binary(BinOp::Mul, Expr::Const(0.1), p),
                )
            })
            .collect();
        VectorField::new(n, exprs).unwrap()
    })
}

fn opts() -> OdeOptions {
    OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..OdeOptions::default()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn flow(field: &VectorField, x0: &[f64], t: f64) -> diffbal::Result<Vec<f64>> {
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&field.eval_f64(y)?);
        Ok(())
    };
    Ok(integrate_ivp(&rhs, x0, (0.0, t), opts())?.last_state().to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn flows_compose(
        f in arb_contracting(2),
        x0 in proptest::collection::vec(-0.5f64..0.5, 2),
        t in 0.1f64..1.5, s in 0.1f64..1.5,
    ) {
        let direct = flow(&f, &x0, t + s);
        prop_assume!(direct.is_ok());
        let mid = flow(&f, &x0, t).unwrap();
        let composed = flow(&f, &mid, s).unwrap();
        let direct = direct.unwrap();
        let scale = 1.0 + direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(dist(&direct, &composed) <= 10.0 * opts().rtol * scale,
            "{:?} vs {:?}", direct, composed);
    }

    #[test]
    fn flow_jacobians_chain(
        f in arb_contracting(2),
        x0 in proptest::collection::vec(-0.5f64..0.5, 2),
        t in 0.1f64..1.0, s in 0.1f64..1.0,
    ) {
        let whole = flow_with_jacobian(&f, &x0, (0.0, t + s), opts());
        prop_assume!(whole.is_ok());
        let (_, phi_ts) = whole.unwrap();
        let (traj_t, phi_t) = flow_with_jacobian(&f, &x0, (0.0, t), opts()).unwrap();
        let (_, phi_s) = flow_with_jacobian(&f, traj_t.last_state(), (0.0, s), opts()).unwrap();
        let chained = phi_s.last() * phi_t.last();
        prop_assert!((phi_ts.last() - chained).amax() <= 1e-6);
    }
}

#[test]
fn backward_then_forward_returns() {
    for name in ["paper_sec5", "linear_2x2", "linear_scalar"] {
        let sys = registry(name).unwrap();
        let field = Drift(&sys);
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&field.eval_f64(y)?);
            Ok(())
        };
        let x0: Vec<f64> = (0..sys.n()).map(|i| 0.2 - 0.1 * i as f64).collect();
        // the drift contracts forward, so go forward then come back
        let fwd = integrate_ivp(&rhs, &x0, (0.0, 3.0), opts()).unwrap();
        let back = integrate_backward(&rhs, fwd.last_state(), 3.0, opts()).unwrap();
        assert!(dist(&back.eval(-3.0), &x0) <= 1e-6, "{name}");
        assert_eq!(back.last_state(), fwd.last_state());
        assert_eq!(back.t_start(), -3.0);
    }
    // the closed loop contracts backward
    let sys = registry("paper_sec5").unwrap();
    let field = ClosedLoop(&sys);
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&field.eval_f64(y)?);
        Ok(())
    };
    let back = integrate_backward(&rhs, &[0.2, -0.1], 3.0, opts()).unwrap();
    let fwd = integrate_ivp(&rhs, &back.states()[0], (0.0, 3.0), opts()).unwrap();
    assert!(dist(fwd.last_state(), &[0.2, -0.1]) <= 1e-6);
}

#[test]
fn flow_jacobian_matches_finite_differences() {
    let sys = registry("paper_sec5").unwrap();
    let field = Drift(&sys);
    let x0 = [0.1, -0.2];
    let (_, phi) = flow_with_jacobian(&field, &x0, (0.0, 2.0), opts()).unwrap();
    let h = 1e-5;
    let end = |x: &[f64]| {
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&field.eval_f64(y)?);
            Ok(())
        };
        integrate_ivp(&rhs, x, (0.0, 2.0), opts()).unwrap().last_state().to_vec()
    };
    for c in 0..2 {
        let mut p = x0.to_vec();
        let mut m = x0.to_vec();
        p[c] += h;
        m[c] -= h;
        let (ep, em) = (end(&p), end(&m));
        for r in 0..2 {
            let fd = (ep[r] - em[r]) / (2.0 * h);
            assert!((phi.last()[(r, c)] - fd).abs() < 1e-6);
        }
    }
}

#[test]
fn scalar_linear_flow_is_exponential() {
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = -0.7 * y[0];
        Ok(())
    };
    let traj = integrate_ivp(&rhs, &[2.0], (0.0, 5.0), opts()).unwrap();
    for t in [0.3f64, 1.7, 4.2, 5.0] {
        let want = 2.0 * (-0.7 * t).exp();
        assert!((traj.eval(t)[0] - want).abs() < 1e-8);
    }
}

#[test]
fn finite_time_escape_is_reported() {
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[0] * y[0];
        Ok(())
    };
    match integrate_ivp(&rhs, &[1.0], (0.0, 2.0), OdeOptions::default()) {
        Err(Error::BlowUp { time, .. }) => assert!(time > 0.9 && time <= 1.0 + 1e-6),
        Err(Error::StepUnderflow { time, .. }) => assert!(time > 0.9 && time <= 1.0 + 1e-6),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn improper_integrals_of_known_functions() {
    let opts = ImproperOptions::with_tol(1e-10);
    let r = improper_time_integral(&|t| Ok(t * (-t).exp()), Direction::Forward, &opts).unwrap();
    assert!((r.value - 1.0).abs() < 1e-8);
    let r = improper_time_integral(&|t| Ok(t.exp() * (3.0 * t).cos().powi(2)), Direction::Backward, &opts)
        .unwrap();
    // int_{-inf}^0 e^t cos^2(3t) dt = 1/2 + 1/(2 * 37)
    assert!((r.value - (0.5 + 1.0 / 74.0)).abs() < 1e-8, "{r:?}");
    let err = improper_time_integral(&|_| Ok(1.0), Direction::Forward, &ImproperOptions::default());
    assert!(matches!(err, Err(Error::Divergence { .. })));
}
