mod common;

use common::sine_problem;
use pertraj::certificates::{
    certify, lipschitz_bound, BoundMode, BoxRegion, CertificateRequest, Provenance, SamplingOptions,
};
use pertraj::reactor::{self, ReactorParams};
use pertraj::{solve_simple, IterationOptions};

#[test]
fn reactor_sampled_lipschitz_is_stable_under_refinement() {
    let model = reactor::build_reactor_model(&ReactorParams::default()).unwrap();
    let region = BoxRegion::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let coarse = lipschitz_bound(&model, &region, BoundMode::Sampled(SamplingOptions::default())).unwrap();
    let fine = lipschitz_bound(
        &model,
        &region,
        BoundMode::Sampled(SamplingOptions { per_axis: 41, random_points: 4000, seed: 1 }),
    )
    .unwrap();
    assert!(coarse.heuristic && fine.heuristic);
    assert_eq!(coarse.provenance, Provenance::Sampled);
    assert!(coarse.value > 0.0);
    assert!((fine.value - coarse.value).abs() <= 0.05 * fine.value);
}

#[test]
fn sampling_is_reproducible_for_a_seed() {
    let model = reactor::build_reactor_model(&ReactorParams::default()).unwrap();
    let region = BoxRegion::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let opts = SamplingOptions { seed: 42, ..Default::default() };
    let a = lipschitz_bound(&model, &region, BoundMode::Sampled(opts)).unwrap();
    let b = lipschitz_bound(&model, &region, BoundMode::Sampled(opts)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn certified_contraction_bounds_observed_ratios() {
    let eps = 0.05;
    let p = sine_problem(eps, 4000);
    let req = CertificateRequest {
        region: BoxRegion::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
        growth: None,
        lipschitz: BoundMode::User(eps),
        hessian: Some(BoundMode::User(eps)),
        radius: None,
    };
    let cert = certify(&p, &p.zero_trajectory(), &req).unwrap();
    assert!(cert.rigorous);
    let q = cert.contraction.q.unwrap();
    assert!(cert.contraction.contraction_ok);
    let r = solve_simple(&p, &IterationOptions::with_iterations(30)).unwrap();
    let gaps: Vec<f64> = r.history.iter().filter_map(|h| h.iterate_gap).collect();
    for w in gaps.windows(2) {
        if w[1] > 1e-13 {
            assert!(w[1] / w[0] <= q + 0.05);
        }
    }
}

#[test]
fn reactor_certificate_with_sampled_bounds_is_heuristic() {
    let p = reactor::reactor_problem(&ReactorParams::default(), 1.0, 10_000).unwrap();
    let req = CertificateRequest {
        region: BoxRegion::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap(),
        growth: None,
        lipschitz: BoundMode::Sampled(SamplingOptions::default()),
        hessian: Some(BoundMode::Sampled(SamplingOptions::default())),
        radius: None,
    };
    let cert = certify(&p, &p.zero_trajectory(), &req).unwrap();
    assert!(!cert.rigorous);
    assert!(cert.lipschitz.heuristic);
    assert!(serde_json::to_string(&cert).unwrap().contains("\"heuristic\":true"));
}
