use std::path::PathBuf;

use dptco::costs::optimum_oracle;
use dptco::error::Error;
use dptco::linalg::norm;
use dptco::scenario::{Experiment, Scenario};
use dptco::sim_engine::formation_offset_wrap;

fn load(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    Scenario::load(&path).unwrap()
}

#[test]
fn example2_gradient_sum_vanishes_near_published_optimum() {
    let costs = load("example2").build_costs().unwrap();
    let g = costs.grad_sum(&[0.7263, 0.7183]).unwrap();
    assert!(norm(&g) < 5e-3, "{g:?}");
}

#[test]
fn example1_optimum_matches_closed_form() {
    let costs = load("example1").build_costs().unwrap();
    let cert = optimum_oracle(&costs, 1e-12, &[0.0, 0.0]).unwrap();
    let want = [-1.0 / 36.0, -2.0 / 36.0];
    assert!(
        norm(&[cert.z_star[0] - want[0], cert.z_star[1] - want[1]]) < 1e-9,
        "{:?}",
        cert.z_star
    );
}

#[test]
fn hexagon_offsets_sum_to_zero() {
    let offsets = load("example1").formation.unwrap();
    assert_eq!(offsets.len(), 6);
    for k in 0..2 {
        let s: f64 = offsets.iter().map(|o| o[k]).sum();
        assert!(s.abs() < 1e-15);
    }
    assert_eq!(offsets[0], vec![1.0, 0.0]);
}

#[test]
fn formation_wrap_examples() {
    assert_eq!(
        formation_offset_wrap(&[0.3, -0.4], &[0.0, 0.0]).unwrap(),
        vec![0.3, -0.4]
    );
    assert_eq!(
        formation_offset_wrap(&[0.5, 0.5], &[1.0, -1.0]).unwrap(),
        vec![1.5, -0.5]
    );
    assert!(matches!(
        formation_offset_wrap(&[0.5, 0.5], &[1.0]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn dc2_scenario_builds_without_override() {
    let sc = load("example1_dc2");
    assert!(!sc.acknowledge_criteria_override);
    let exp = Experiment::build(sc).unwrap();
    assert!(exp.criteria.iter().all(|c| c.report.pass));
    assert!(exp.overrides.is_empty());
}

#[test]
fn failing_generator_criterion_requires_acknowledgement() {
    let mut sc = load("generator_only");
    sc.acknowledge_criteria_override = false;
    let err = Experiment::build(sc).unwrap_err();
    assert!(matches!(err, Error::CriterionFailed(_)));
    assert!(err.to_string().contains("generator criterion"), "{err}");
}

#[test]
fn example2_constants_follow_from_the_working_box() {
    let exp = Experiment::build(load("example2")).unwrap();
    let c = exp.constants.cost;
    assert!(!c.analytic);
    assert!(c.rho_c > 0.0 && c.rho_c <= c.varrho_c);
    let g = exp.constants.generator;
    assert!((g.c_star - 1.0 / (4.0 * g.c3)).abs() < 1e-18);
    assert!((exp.constants.lambda2 - 1.0).abs() < 1e-12);
    assert!((exp.constants.lambda_n - 4.0).abs() < 1e-12);
}
