use diffbal::energy::{
    diff_controllability_fb, diff_observability, incr_controllability_fb, incr_observability,
    incr_observability_limit, path_energy_integral, LinePath, DEFAULT_GL_ORDER, DEFAULT_LADDER,
};
use diffbal::integrate::{ImproperOptions, OdeOptions};
use diffbal::systems::registry;
use diffbal::Error;

fn tight() -> ImproperOptions {
    ImproperOptions {
        tol: 1e-13,
        ode: OdeOptions {
            rtol: 1e-12,
            atol: 1e-15,
            ..OdeOptions::default()
        },
        ..ImproperOptions::default()
    }
}

#[test]
fn differential_energies_are_quadratic_in_the_tangent() {
    let sys = registry("paper_sec5").unwrap();
    let opts = tight();
    for (x0, d) in [([0.1, 0.1], [1.0, 0.0]), ([-0.2, 0.15], [0.3, -0.8])] {
        let base_o = diff_observability(&sys, &x0, &d, &opts).unwrap().value;
        let base_c = diff_controllability_fb(&sys, &x0, &d, &opts).unwrap().value;
        for a in [2.0, 10.0, -1.0] {
            let scaled: Vec<f64> = d.iter().map(|v| a * v).collect();
            let eo = diff_observability(&sys, &x0, &scaled, &opts).unwrap().value;
            let ec = diff_controllability_fb(&sys, &x0, &scaled, &opts).unwrap().value;
            assert!((eo - a * a * base_o).abs() <= 1e-8 * eo.abs(), "{eo} vs {}", a * a * base_o);
            assert!((ec - a * a * base_c).abs() <= 1e-8 * ec.abs(), "{ec} vs {}", a * a * base_c);
        }
    }
}

#[test]
fn incremental_energies_are_symmetric() {
    let sys = registry("paper_sec5").unwrap();
    let opts = ImproperOptions::with_tol(1e-10);
    let (a, b) = ([0.05, -0.1], [-0.08, 0.02]);
    let o1 = incr_observability(&sys, &a, &b, &opts).unwrap();
    let o2 = incr_observability(&sys, &b, &a, &opts).unwrap();
    assert!((o1.value - o2.value).abs() <= o1.error_estimate + o2.error_estimate + 1e-12);
    let c1 = incr_controllability_fb(&sys, &a, &b, &opts).unwrap();
    let c2 = incr_controllability_fb(&sys, &b, &a, &opts).unwrap();
    assert!((c1.value - c2.value).abs() <= c1.error_estimate + c2.error_estimate + 1e-12);
    assert_eq!(incr_observability(&sys, &a, &a, &opts).unwrap().value, 0.0);
}

#[test]
fn example_controllability_energy_is_half_the_squared_norm() {
    // R = I certifies E_dC(x, v) = |v|^2 / 2 at every x
    let sys = registry("paper_sec5").unwrap();
    let opts = ImproperOptions::with_tol(1e-10);
    for (x, v) in [([0.0, 0.0], [1.0, 0.0]), ([0.3, -0.2], [0.4, 0.9]), ([-0.5, 0.5], [0.0, 1.0])] {
        let e = diff_controllability_fb(&sys, &x, &v, &opts).unwrap();
        let want = 0.5 * (v[0] * v[0] + v[1] * v[1]);
        assert!((e.value - want).abs() <= 1e-8, "{} vs {want}", e.value);
        assert!(e.error_estimate < 1e-7);
    }
}

#[test]
fn path_integral_of_linear_energy_is_exact() {
    let sys = registry("linear_2x2").unwrap();
    let opts = ImproperOptions::with_tol(1e-11);
    let energy = |x: &[f64], v: &[f64]| diff_observability(&sys, x, v, &opts);
    let path = LinePath::new(&[0.2, -0.1], &[-0.3, 0.4]).unwrap();
    let along = path_energy_integral(&energy, &path, DEFAULT_GL_ORDER).unwrap();
    let direct = incr_observability(&sys, &[0.2, -0.1], &[-0.3, 0.4], &opts).unwrap();
    assert!((along.value - direct.value).abs() < 1e-9);
    let zero = LinePath::new(&[0.1, 0.1], &[0.1, 0.1]).unwrap();
    assert_eq!(path_energy_integral(&energy, &zero, DEFAULT_GL_ORDER).unwrap().value, 0.0);
}

#[test]
fn quadratic_limit_reports_its_table() {
    let sys = registry("linear_scalar").unwrap();
    let lim = incr_observability_limit(&sys, &[0.3], &[1.0], &DEFAULT_LADDER, &ImproperOptions::default(), 1e-6)
        .unwrap();
    assert_eq!(lim.table.len(), DEFAULT_LADDER.len());
    assert_eq!(lim.extrapolants.len(), DEFAULT_LADDER.len() - 2);
    // E_dO = d^2 / 4 for f = -x, h = x
    assert!((lim.limit - 0.25).abs() < 1e-7);
}

#[test]
fn dimension_errors_are_reported() {
    let sys = registry("paper_sec5").unwrap();
    let opts = ImproperOptions::default();
    assert!(matches!(diff_observability(&sys, &[0.0], &[1.0, 0.0], &opts), Err(Error::Dimension(_))));
    let open = registry("paper_sec5").unwrap().without_feedback();
    assert!(matches!(
        diff_controllability_fb(&open, &[0.0, 0.0], &[1.0, 0.0], &opts),
        Err(Error::MissingFeedback(_))
    ));
}
