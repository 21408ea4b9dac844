use capwatch_core::dynamics::{
    run_chain, CapabilityTrajectory, ChainConfig, EstimateChainState, RateSchedule, TrajectoryKind, UpdateMode,
};
use capwatch_core::estimator::miss_probability;
use capwatch_core::oracle::{oracle_metrics, GridTestModel};
use capwatch_core::{EstimatorDistribution, RateFunction};

fn unit_growth(horizon: usize) -> CapabilityTrajectory {
    CapabilityTrajectory::new(
        TrajectoryKind::Linear {
            start: 0.0,
            increment: 1.0,
        },
        horizon,
    )
    .unwrap()
}

fn ensemble(rate: &RateFunction, y_star: f64, n_paths: usize, seed: u64) -> capwatch_core::dynamics::ChainEnsemble {
    let traj = unit_growth(10);
    run_chain(&ChainConfig {
        trajectory: &traj,
        schedule: RateSchedule::Static(rate),
        y_star,
        mode: UpdateMode::Main,
        n_paths,
        seed,
    })
    .unwrap()
}

#[test]
fn chain_lag_for_fast_block() {
    let r = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
    let e = ensemble(&r, 5.0, 100_000, 11);
    let lag = e.conditional_lag().unwrap();
    assert!((lag - 0.5).abs() < 0.02, "lag {lag}");
}

#[test]
fn chain_miss_rate_for_two_blocks() {
    let r = RateFunction::from_pieces(0.0, &[(6.0, 0.5), (10.0, 0.1)]).unwrap();
    let e = ensemble(&r, 5.0, 100_000, 12);
    assert!((e.miss_rate() - 0.407).abs() < 0.01, "miss {}", e.miss_rate());
}

#[test]
fn chain_with_no_tests_never_moves() {
    let r = RateFunction::zero(0.0, 10.0).unwrap();
    let e = ensemble(&r, 5.0, 1000, 13);
    for t in 0..=10 {
        assert!(e.estimates_at(t).iter().all(|&y| y == 0.0));
    }
    assert!(e.detected_at().iter().all(Option::is_none));
    assert_eq!(e.miss_rate(), 1.0);
}

#[test]
fn keep_probability_is_cdf_at_floor() {
    let r = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
    let mut s = EstimateChainState::new(0.0, None);
    s.y_t = 4.0;
    s.y_hat = 3.2;
    let keep = (-2.0f64).exp();
    let kept = s
        .advance_with(&r, 5.0, None, UpdateMode::Main, keep * 0.999, 0.5)
        .unwrap();
    assert_eq!(kept.y_hat, 3.2);
    let moved = s
        .advance_with(&r, 5.0, None, UpdateMode::Main, keep * 1.001, 0.5)
        .unwrap();
    assert!(moved.y_hat > 4.0 && moved.y_hat <= 5.0);
}

#[test]
fn oracle_mean_matches_closed_form() {
    let r = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
    let m = oracle_metrics(&GridTestModel::new(&r, 10.0, 1e-3).unwrap(), 5.0, 100_000, 21);
    let analytic = EstimatorDistribution::new(&r, 10.0).unwrap().mean();
    let z = (m.mean - analytic) / m.mean_se;
    assert!(z.abs() < 3.0, "z {z}");
}

#[test]
fn oracle_miss_matches_closed_form() {
    let r = RateFunction::from_pieces(0.0, &[(6.0, 0.5), (10.0, 0.1)]).unwrap();
    let m = oracle_metrics(&GridTestModel::new(&r, 10.0, 1e-3).unwrap(), 5.0, 100_000, 22);
    let c = miss_probability(&r, 5.0).unwrap();
    assert!((c - (-0.9f64).exp()).abs() < 1e-12);
    let se = (c * (1.0 - c) / m.n_draws as f64).sqrt();
    let z = (m.miss_rate - c) / se;
    assert!(z.abs() < 3.0, "z {z}");
}

#[test]
fn oracle_at_origin_is_degenerate() {
    let r = RateFunction::constant(0.0, 10.0, 2.0).unwrap();
    let m = oracle_metrics(&GridTestModel::new(&r, 0.0, 1e-3).unwrap(), 5.0, 1000, 23);
    assert!(m.sorted_estimates().iter().all(|&y| y == 0.0));
}
