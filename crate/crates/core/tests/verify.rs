use diffbal::calculus::{MatrixField, VectorField};
use diffbal::gramian::MatrixSource;
use diffbal::integrate::ImproperOptions;
use diffbal::sampling::Region;
use diffbal::systems::{registry, SystemModel};
use diffbal::verify::{
    check_cor7, check_thm1, check_thm2, check_thm3, check_thm4, check_thm5, random_pairs,
    random_tangents, ImplicationStatus, TheoremId, Verdict, VerifyOptions,
};

fn with_tol(tol: f64) -> VerifyOptions {
    VerifyOptions {
        improper: ImproperOptions::with_tol(tol),
        ..VerifyOptions::default()
    }
}

#[test]
fn linear_systems_meet_every_check_with_equality() {
    for name in ["linear_scalar", "linear_2x2"] {
        let sys = registry(name).unwrap();
        let region = Region::cube(sys.n(), 1.0);
        let opts = with_tol(1e-12);
        let pairs = random_pairs(&region, 3, 1);
        let tangents = random_tangents(&region, 3, 2);
        for report in [
            check_thm1(&sys, &pairs, &opts).unwrap(),
            check_thm2(&sys, &tangents, &opts).unwrap(),
            check_thm3(&sys, &pairs, &opts).unwrap(),
            check_thm4(&sys, &tangents, &opts).unwrap(),
        ] {
            assert_eq!(report.verdict, Verdict::Pass, "{name}: {}", report.to_json());
            assert!(report.max_abs_margin() <= 1e-8, "{name} {:?}: {}", report.theorem, report.max_abs_margin());
        }
    }
}

fn blind() -> SystemModel {
    let f = VectorField::parse(2, &["-x1", "-x2 + x1^2"]).unwrap();
    let g = MatrixField::parse(2, 2, 1, &["0", "1"]).unwrap();
    let h = VectorField::parse(2, &["0"]).unwrap();
    SystemModel::new("blind", f, g, h, None).unwrap()
}

#[test]
fn tightening_tolerance_keeps_failures() {
    let sys = blind();
    let q = MatrixSource::Expr(MatrixField::parse(2, 2, 2, &["0", "0", "0", "0"]).unwrap());
    let region = Region::cube(2, 0.3);
    let mut seen_fail = false;
    for tol in [1e-6, 1e-8, 1e-10] {
        let r = check_thm5(&sys, &q, &region, 3, 4, &with_tol(tol)).unwrap();
        if seen_fail {
            assert_eq!(r.verdict, Verdict::Fail, "tol {tol}");
        }
        seen_fail |= r.verdict == Verdict::Fail;
    }
    assert!(seen_fail);
}

#[test]
fn unobservable_system_leaves_only_vacuous_implications() {
    let sys = blind();
    let q = MatrixSource::Expr(MatrixField::parse(2, 2, 2, &["0", "0", "0", "0"]).unwrap());
    let r = check_thm5(&sys, &q, &Region::cube(2, 0.3), 3, 4, &VerifyOptions::default()).unwrap();
    assert_eq!(r.items[0].verdict, Verdict::Pass);
    assert_eq!(r.items[1].verdict, Verdict::Fail);
    assert_eq!(r.items[2].verdict, Verdict::Fail);
    // items 1 and 2 do not both hold, nor 2 and 3, nor 3 and 1
    assert!(r.implications.iter().all(|i| i.status == ImplicationStatus::Vacuous));
}

#[test]
fn example_corollary_items_all_hold() {
    let sys = registry("paper_sec5").unwrap();
    let p = MatrixSource::Expr(sys.certificates().p.clone().unwrap());
    let r = check_cor7(&sys, &p, &Region::cube(2, 0.5), 5, 3, &VerifyOptions::default()).unwrap();
    assert_eq!(r.theorem, TheoremId::Cor7);
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
    assert!(r.implications.iter().all(|i| i.status == ImplicationStatus::Witnessed));
    assert_eq!(r.decay_fits.len(), 5);
    assert!(r.decay_fits.iter().all(|d| d.lambda > 0.0));
}

#[test]
fn indefinite_candidate_refutes_the_implication() {
    let sys = registry("paper_sec5").unwrap();
    let p = MatrixSource::Expr(MatrixField::parse(2, 2, 2, &["1", "0", "0", "-1"]).unwrap());
    let r = check_cor7(&sys, &p, &Region::cube(2, 0.5), 3, 3, &VerifyOptions::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    let refuted: Vec<_> = r
        .implications
        .iter()
        .filter(|i| i.status == ImplicationStatus::Refuted)
        .collect();
    assert_eq!(refuted.len(), 1);
    assert_eq!(refuted[0].consequent, "item3");
}

#[test]
fn example_observability_gramian_check() {
    let sys = registry("paper_sec5").unwrap();
    let opts = VerifyOptions::default();
    let imp = opts.improper;
    let q = MatrixSource::Numeric(Box::new(move |x: &[f64]| {
        Ok(diffbal::gramian::empirical_obs_gramian(&registry("paper_sec5").unwrap(), x, &imp)?.matrix)
    }));
    let small = VerifyOptions {
        grid_per_axis: 5,
        ..opts
    };
    let r = check_thm5(&sys, &q, &Region::cube(2, 0.3), 4, 5, &small).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
    assert!(r.notes.iter().any(|n| n.contains("uniqueness")));
}

#[test]
fn reports_are_deterministic_json() {
    let sys = registry("paper_sec5").unwrap();
    let pairs = random_pairs(&Region::cube(2, 0.1), 2, 9);
    let a = check_thm3(&sys, &pairs, &VerifyOptions::default()).unwrap().to_json();
    let b = check_thm3(&sys, &pairs, &VerifyOptions::default()).unwrap().to_json();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["theorem"], "thm3");
    assert_eq!(v["samples"].as_array().unwrap().len(), 2);
    assert!(v["samples"][0]["margin"].is_number());
}
