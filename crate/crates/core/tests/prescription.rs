use ahcurv::geometry::{
    conformal_mean_curvature, conformal_mean_curvature_with, conformal_scalar_curvature, make_hyperbolic_exterior,
    MeanCurvatureConvention,
};
use ahcurv::grid::GridFunction;
use ahcurv::kappa;
use ahcurv::monotone;
use ahcurv::scalarcurv::{self, a_p, asymptotic_barriers, verify_decay, PrescribedBoundary, PrescriptionSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn convexity_inequality(n in 3usize..=10, u in -1.0..=0.0f64) {
        let p = kappa(n) + 1.0;
        let lhs = (1.0 + u).powf(p) - 1.0 - p * u;
        prop_assert!(lhs <= a_p(p) * u * u + 1e-12);
    }
}

fn decay_case(n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    let geom = make_hyperbolic_exterior(n, 1.0, 10.0, 1024).unwrap();
    let scal_hat = GridFunction::from_fn(&geom, |_, r| -nf * (nf - 1.0) * (1.0 + r.powf(delta)));
    let spec = PrescriptionSpec::new(&geom, scal_hat, PrescribedBoundary::Dirichlet(1.0))
        .unwrap()
        .with_delta(delta)
        .unwrap();
    let (phi, _) = scalarcurv::solve_prescription(&spec, 1e-12).unwrap();
    let check = verify_decay(&phi, delta);
    assert!(check.pass, "n = {n}, delta = {delta}: fitted {}", check.fit.delta_hat);
    check.fit.delta_hat
}

#[test]
fn decay_matches_prescribed_rate() {
    for (n, delta) in [(3, 1.0), (3, 2.0), (4, 1.0), (4, 2.0), (4, 3.0)] {
        decay_case(n, delta);
    }
}

#[test]
fn recovered_curvature_matches_target() {
    let geom = make_hyperbolic_exterior(3, 1.0, 10.0, 512).unwrap();
    let scal_hat = GridFunction::from_fn(&geom, |_, r| -6.0 * (1.0 + r * r));
    let spec = PrescriptionSpec::new(&geom, scal_hat.clone(), PrescribedBoundary::Dirichlet(1.0)).unwrap();
    let (phi, _) = scalarcurv::solve_prescription(&spec, 1e-12).unwrap();
    let s = conformal_scalar_curvature(&geom, &phi).unwrap();
    let h = geom.spacing();
    let err = s.scal.sub(&scal_hat).sup_abs();
    assert!(err <= 5.0 * h * h, "{err:e} vs {:e}", 5.0 * h * h);
    assert!(phi.values().iter().all(|&v| v > 0.0));
}

#[test]
fn round_trip_and_uniqueness() {
    let tol = 1e-11;
    let geom = make_hyperbolic_exterior(3, 1.0, 10.0, 256).unwrap();
    let scal_hat = GridFunction::from_fn(&geom, |_, r| -6.0 * (1.0 + 0.5 * r));
    let spec = PrescriptionSpec::new(&geom, scal_hat, PrescribedBoundary::Dirichlet(1.2)).unwrap();
    let (phi, _) = scalarcurv::solve_prescription(&spec, tol).unwrap();

    // re-solve from the curvature recomputed at interior nodes
    let s = conformal_scalar_curvature(&geom, &phi).unwrap();
    let spec2 = PrescriptionSpec::new(&geom, s.scal, PrescribedBoundary::Dirichlet(1.2)).unwrap();
    let (phi2, _) = scalarcurv::solve_prescription(&spec2, tol).unwrap();
    assert!(phi.sub(&phi2).sup_abs() <= 10.0 * tol);

    // a second admissible bracket
    let (lo, hi) = scalarcurv::default_bracket(&spec).unwrap();
    let problem = scalarcurv::prescription_problem(&spec, lo, hi.scale(2.0)).unwrap();
    let (phi3, _) = monotone::iterate(&problem, tol, 500_000).unwrap();
    assert!(phi.sub(&phi3).sup_abs() <= 10.0 * tol);
    let (sigma, lo) = scalarcurv::subsolution_sigma(&spec).unwrap();
    assert!(sigma > 0.0);
    assert!(phi.values().iter().zip(lo.values()).all(|(p, l)| p >= l));
}

#[test]
fn mean_curvature_of_unit_factor_gives_unit_solution() {
    let geom = make_hyperbolic_exterior(3, 1.0, 10.0, 256).unwrap();
    let one = GridFunction::constant(&geom, 1.0);
    let h1 = conformal_mean_curvature(&geom, &one).unwrap();
    let scal = GridFunction::new(&geom, geom.scal.clone()).unwrap();
    let spec = PrescriptionSpec::new(&geom, scal, PrescribedBoundary::MeanCurvature(h1)).unwrap();
    let (phi, _) = scalarcurv::solve_prescription(&spec, 1e-12).unwrap();
    assert!(phi.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
}

#[test]
fn prescribed_mean_curvature_is_recovered() {
    for m in [256, 512] {
        let geom = make_hyperbolic_exterior(3, 1.0, 10.0, m).unwrap();
        let scal_hat = GridFunction::from_fn(&geom, |_, r| -6.0 * (1.0 + r));
        let target = 3.5;
        let spec = PrescriptionSpec::new(&geom, scal_hat, PrescribedBoundary::MeanCurvature(target)).unwrap();
        let (phi, _) = scalarcurv::solve_prescription(&spec, 1e-12).unwrap();
        let got = conformal_mean_curvature_with(&geom, &phi, MeanCurvatureConvention::AsStated).unwrap();
        let h = geom.spacing();
        assert!((got - target).abs() <= 50.0 * h * h, "m = {m}: {got} vs {target}");
    }
}

#[test]
fn asymptotic_barrier_examples() {
    let geom = make_hyperbolic_exterior(4, 1.0, 10.0, 512).unwrap();
    let scal_hat = GridFunction::from_fn(&geom, |_, r| -12.0 * (1.0 + r * r));
    let spec = PrescriptionSpec::new(&geom, scal_hat, PrescribedBoundary::Dirichlet(1.0))
        .unwrap()
        .with_delta(2.0)
        .unwrap();
    let b = asymptotic_barriers(&spec, 0.9, 2.0).unwrap();
    assert!(b.valid);
    assert_eq!((b.lhs, b.rhs), (12.0, 4.0 * 3.0 * (1.0 - 0.9)));
    assert!(b.upper_verified);
}
