use cone_capacity::imcf::{monitors, run, step, FlowState};
use cone_capacity::{ConeSpec, Error, RadialGraph};
use proptest::prelude::*;

#[test]
fn cap_follows_exact_laws() {
    let cone = ConeSpec::from_degrees(4, 45.0).unwrap();
    let g = RadialGraph::cap(cone, 64, 0.6).unwrap();
    let trace = run(&g, 2.0, 1e-2).unwrap();
    for s in &trace.samples {
        assert!(s.area_ratio_error < 1e-12);
        // I grows like e^{(n-2)t/(n-1)} exactly on caps
        let ratio = s.total_mean_curvature / trace.samples[0].total_mean_curvature;
        assert!((ratio - (2.0 * s.t / 3.0).exp()).abs() < 1e-10 * ratio);
        assert!((s.h - trace.h_limit).abs() < 1e-7 * trace.h_limit);
    }
    assert!((trace.rescaled_limit - 0.6).abs() < 1e-12);
    assert!((trace.predicted_limit - 0.6).abs() < 1e-9);
}

#[test]
fn perturbed_caps_round_off() {
    let cone = ConeSpec::half_space(3).unwrap();
    for mode in [2, 4] {
        let g = RadialGraph::perturbed_cap(cone, 64, 1.0, 0.15, mode).unwrap();
        let trace = run(&g, 5.0, 2e-3).unwrap();
        assert!(trace.h_monotone(), "max increase {:.3e}", trace.max_h_increase());
        assert!(trace.exponential_bound_holds(3));
        assert!(trace.final_variation < 1e-3 * trace.initial_variation);
        assert!(trace.final_h_error() < 1e-4);
        assert!((trace.rescaled_limit / trace.predicted_limit - 1.0).abs() < 5e-3);
    }
}

#[test]
fn rejects_surfaces_that_are_not_mean_convex() {
    let cone = ConeSpec::from_degrees(3, 60.0).unwrap();
    let g = RadialGraph::perturbed_cap(cone, 128, 1.0, 0.2, 4).unwrap();
    match run(&g, 1.0, 1e-3) {
        Err(Error::NonPositiveMeanCurvature { value, .. }) => assert!(value <= 0.0),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn trace_sampling_grid() {
    let cone = ConeSpec::half_space(3).unwrap();
    let g = RadialGraph::perturbed_cap(cone, 32, 1.0, 0.1, 2).unwrap();
    let trace = run(&g, 0.5, 1e-3).unwrap();
    assert_eq!(trace.samples.len(), 501);
    assert!((trace.samples.last().unwrap().t - 0.5).abs() < 1e-9);
    let coarse = run(&g, 0.5, 0.01).unwrap();
    assert_eq!(coarse.samples.len(), 51);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn one_step_decreases_h(
        deg in 45.0f64..=90.0,
        eps in -0.15f64..0.15,
        mode in prop::sample::select(vec![2usize, 4]),
        n in 3usize..=5,
    ) {
        let cone = ConeSpec::from_degrees(n, deg).unwrap();
        let g = RadialGraph::perturbed_cap(cone, 64, 1.0, eps, mode).unwrap();
        prop_assume!(cone_capacity::surface::positive_mean_curvature(&g).is_ok());
        let s0 = FlowState::new(g);
        let mut s = s0.clone();
        for _ in 0..20 {
            s = step(&s, 5e-3).unwrap();
        }
        let (a, b) = (monitors(&s0), monitors(&s));
        prop_assert!(b.h <= a.h + 1e-8, "h {} -> {}", a.h, b.h);
        let rate = (n as f64 - 2.0) / (n as f64 - 1.0);
        prop_assert!(b.total_mean_curvature <= a.total_mean_curvature * (rate * s.t).exp() * (1.0 + 1e-6));
    }
}
