mod common;

use common::{erlang2_equilibrium_variance, key, lattice_variance};
use hwlab::dist::DistSpec;
use hwlab::renewal::{
    centered_moment_mc, equilibrium_streams, variance_function, Mode, PooledStreams, RenewalStream,
};
use hwlab::rng::experiment;
use hwlab::stats::{ks_p_value, ks_two_sample, mean_se};
use proptest::prelude::*;

fn k(rep: u64) -> hwlab::rng::StreamKey {
    key(experiment::MOMENTS, rep)
}

#[test]
fn equilibrium_poisson_mean_count() {
    let d = DistSpec::exponential(1.0).unwrap();
    let counts: Vec<f64> = (0..100_000u64)
        .map(|r| {
            RenewalStream::new(d, Mode::Equilibrium, k(r).rng(0))
                .count_at(10.0)
                .unwrap() as f64
        })
        .collect();
    let (m, se) = mean_se(&counts);
    assert!((m - 10.0).abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn equilibrium_mean_is_rate_times_t() {
    for d in [
        DistSpec::erlang(2, 2.0).unwrap(),
        DistSpec::deterministic(1.0).unwrap(),
        DistSpec::hyperexponential(0.3, 0.5, 2.0).unwrap(),
    ] {
        for &t in &[0.7, 3.0, 12.5] {
            let counts: Vec<f64> = (0..20_000u64)
                .map(|r| {
                    RenewalStream::new(d, Mode::Equilibrium, k(r).rng(1))
                        .count_at(t)
                        .unwrap() as f64
                })
                .collect();
            let (m, se) = mean_se(&counts);
            let want = t / d.mean();
            assert!((m - want).abs() <= 3.5 * se + 1e-12, "{:?} t={t}: {m} +- {se}", d.family());
        }
    }
}

#[test]
fn stationary_increments() {
    let d = DistSpec::erlang(2, 2.0).unwrap();
    let inc = |s: f64, stream: u64| -> Vec<f64> {
        (0..100_000u64)
            .map(|r| {
                let mut st = RenewalStream::new(d, Mode::Equilibrium, k(r).rng(stream));
                let a = st.count_at(s).unwrap();
                (st.count_at(s + 1.7).unwrap() - a) as f64
            })
            .collect()
    };
    let (a, b) = (inc(0.0, 2), inc(7.3, 3));
    let dstat = ks_two_sample(&a, &b);
    assert!(ks_p_value(dstat, 50_000.0) > 0.001, "D = {dstat}");
    // An ordinary stream is not stationary: its first increment differs.
    let ordinary: Vec<f64> = (0..100_000u64)
        .map(|r| {
            RenewalStream::new(d, Mode::Ordinary, k(r).rng(4))
                .count_at(1.7)
                .unwrap() as f64
        })
        .collect();
    assert!(ks_p_value(ks_two_sample(&a, &ordinary), 50_000.0) < 1e-6);
}

#[test]
fn moment_estimators_agree_with_exact_variances() {
    let e = DistSpec::exponential(1.0).unwrap();
    for t in [1.0, 3.0, 8.0] {
        let m = centered_moment_mc(&e, 1, t, 2, 20_000, k(10)).unwrap();
        assert!((m.estimate - t).abs() < 3.0 * m.std_err, "t={t}: {m:?}");
    }
    let d = DistSpec::deterministic(1.0).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
    let v = variance_function(&d, &grid, 20_000, k(11)).unwrap();
    for (i, &t) in grid.iter().enumerate() {
        let want = lattice_variance(t);
        assert!((v.v_hat[i] - want).abs() <= 3.5 * v.stderr[i] + 1e-12, "t={t}");
    }
    let g = DistSpec::erlang(2, 2.0).unwrap();
    let grid: Vec<f64> = (0..=16).map(|i| i as f64 * 0.5).collect();
    let v = variance_function(&g, &grid, 40_000, k(12)).unwrap();
    for (i, &t) in grid.iter().enumerate() {
        let want = erlang2_equilibrium_variance(t);
        assert!((v.v_hat[i] - want).abs() <= 3.5 * v.stderr[i] + 1e-12, "t={t}: {} vs {want}", v.v_hat[i]);
    }
}

#[test]
fn second_moment_matches_variance_function() {
    let g = DistSpec::erlang(2, 2.0).unwrap();
    let m = centered_moment_mc(&g, 1, 5.0, 2, 40_000, k(20)).unwrap();
    let v = variance_function(&g, &[0.0, 5.0], 40_000, k(21)).unwrap();
    let joint = (m.std_err.powi(2) + v.stderr[1].powi(2)).sqrt();
    assert!((m.estimate - v.v_hat[1]).abs() < 3.0 * joint);
}

#[test]
fn superposition_mean() {
    let g = DistSpec::erlang(2, 2.0).unwrap();
    let m = centered_moment_mc(&g, 4, 3.0, 2, 20_000, k(30)).unwrap();
    // Independent streams: variances add.
    let want = 4.0 * erlang2_equilibrium_variance(3.0);
    assert!((m.estimate - want).abs() < 3.0 * m.std_err, "{m:?} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pooled_process_is_sorted_union(n in 1usize..12, rate in 0.2f64..5.0, seed in any::<u64>()) {
        let d = DistSpec::erlang(2, rate).unwrap();
        let key = hwlab::rng::StreamKey::new(seed, 0, 0);
        let mut pooled = PooledStreams::new(equilibrium_streams(&d, n, key, 0)).unwrap();
        let merged: Vec<(f64, usize)> = (0..300).map(|_| {
            let e = pooled.next_event().unwrap();
            (e.time, e.source)
        }).collect();
        prop_assert!(merged.windows(2).all(|w| w[0].0 <= w[1].0));
        // Each component's events, replayed alone, match the merged ones.
        for (i, mut s) in equilibrium_streams(&d, n, key, 0).into_iter().enumerate() {
            let own: Vec<f64> = merged.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
            for t in own {
                prop_assert_eq!(s.next_event().unwrap(), t);
            }
        }
    }

    #[test]
    fn counts_are_monotone(seed in any::<u64>(), ts in proptest::collection::vec(0.0f64..50.0, 1..20)) {
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let d = DistSpec::hyperexponential(0.4, 0.5, 3.0).unwrap();
        let mut s = RenewalStream::new(d, Mode::Equilibrium, hwlab::rng::StreamKey::new(seed, 0, 0).rng(0));
        let mut prev = 0;
        for t in ts {
            let c = s.count_at(t).unwrap();
            prop_assert!(c >= prev);
            prev = c;
        }
    }
}
