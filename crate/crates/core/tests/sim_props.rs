use eon_core::config::Config;
use eon_core::estimator::QualityEstimator;
use eon_core::rsa::RequestKind;
use eon_core::sim::{blocking_probability, generate_traffic, run_load_point, TrafficParams};
use eon_core::topology::bundled;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(lambda: f64, p_v: f64, count: usize) -> TrafficParams {
    TrafficParams {
        lambda,
        mu: 1.0,
        video_probability: p_v,
        slot_demand_min: 1,
        slot_demand_max: 10,
        u_th: 20.0,
        count,
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

proptest! {
    #[test]
    fn blocking_probability_matches_rational_count(records in prop::collection::vec((1usize..=10, any::<bool>()), 0..200)) {
        let got = blocking_probability(&records);
        let mut num = 0u64;
        let mut den = 0u64;
        for &(n, blocked) in &records {
            den += n as u64;
            if blocked {
                num += n as u64;
            }
        }
        if den == 0 {
            prop_assert!(got.zero_sample && got.value == 0.0);
        } else {
            prop_assert!(!got.zero_sample);
            prop_assert_eq!(got.value, num as f64 / den as f64);
            prop_assert!((0.0..=1.0).contains(&got.value));
        }
    }
}

#[test]
fn doubling_arrival_rate_halves_mean_gap() {
    let gaps = |lambda: f64| -> Vec<f64> {
        let reqs = generate_traffic(14, &params(lambda, 0.8, 40_000), &mut ChaCha8Rng::seed_from_u64(11));
        let mut prev = 0.0;
        reqs.iter()
            .map(|r| {
                let g = r.arrival_time - prev;
                prev = r.arrival_time;
                g
            })
            .collect()
    };
    let (m1, se1) = mean_and_se(&gaps(50.0));
    let (m2, se2) = mean_and_se(&gaps(100.0));
    assert!((m1 - 1.0 / 50.0).abs() < 3.0 * se1);
    assert!((m2 - 1.0 / 100.0).abs() < 3.0 * se2);
    assert!((m1 / 2.0 - m2).abs() < 3.0 * (se1 / 2.0 + se2));
}

#[test]
fn demand_kind_and_pair_statistics() {
    let reqs = generate_traffic(14, &params(100.0, 0.8, 40_000), &mut ChaCha8Rng::seed_from_u64(5));
    let slots: Vec<f64> = reqs.iter().map(|r| r.slots as f64).collect();
    let (m, se) = mean_and_se(&slots);
    assert!((m - 5.5).abs() < 3.0 * se, "mean demand {m}");
    let video = reqs.iter().filter(|r| r.kind == RequestKind::Video).count() as f64 / reqs.len() as f64;
    let se_v = (0.8f64 * 0.2 / reqs.len() as f64).sqrt();
    assert!((video - 0.8).abs() < 3.0 * se_v, "video share {video}");
    let holds: Vec<f64> = reqs.iter().map(|r| r.holding_time).collect();
    let (mh, seh) = mean_and_se(&holds);
    assert!((mh - 1.0).abs() < 3.0 * seh);
    assert!(reqs.iter().all(|r| r.src != r.dst));

    let none = generate_traffic(14, &params(100.0, 0.0, 5_000), &mut ChaCha8Rng::seed_from_u64(5));
    assert!(none.iter().all(|r| r.kind == RequestKind::NonVideo));
}

#[test]
fn checked_run_has_no_violations() {
    let topo = bundled("nsfnet").unwrap();
    let mut cfg = Config::default();
    cfg.scenario.total_requests = 10_000;
    cfg.scenario.check_invariants = true;
    let est = QualityEstimator::constant(40.0, 0.9);
    let r = run_load_point(&topo, &cfg, &est, 300.0, 3).unwrap();
    assert_eq!(r.invariant_violations, 0);
    assert!(r.invariant_checks >= 10_000);
    assert_eq!(r.video.gate_violations, 0);
    assert!(r.overall_bp > 0.0, "load high enough to block");
    assert_eq!(r.video.n_offered + r.non_video.n_offered, 9_000);
}

#[test]
fn same_seed_same_report() {
    let topo = bundled("usbackbone").unwrap();
    let mut cfg = Config::default();
    cfg.scenario.topology = "usbackbone".into();
    cfg.scenario.total_requests = 3_000;
    let est = QualityEstimator::constant(40.0, 0.9);
    let a = run_load_point(&topo, &cfg, &est, 250.0, 9).unwrap();
    assert_eq!(a, run_load_point(&topo, &cfg, &est, 250.0, 9).unwrap());
    assert_ne!(a, run_load_point(&topo, &cfg, &est, 250.0, 10).unwrap());
}
