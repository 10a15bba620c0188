use nsbandit::info::{
    combinatorial_entropy_bound, effective_horizon_bound, entropy_rate_bruteforce, entropy_rate_markov_switch,
    entropy_rate_plugin, expected_switch_rate, markov_switch_path_law, rate_distortion_bound,
    regret_bound_variation,
};
use nsbandit::rng::rng_from;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn switch_rate_bound_dominates_exact_entropy(k in 2usize..=3, horizon in 1usize..=8, delta in 0.0..=1.0f64) {
        let law = markov_switch_path_law(k, delta, horizon).unwrap();
        let h = entropy_rate_bruteforce(&law).unwrap();
        let s = expected_switch_rate(&law).unwrap();
        let bound = combinatorial_entropy_bound(s, horizon as f64, k).unwrap();
        prop_assert!(bound >= h - 1e-12);
        prop_assert!(h >= -1e-12 && h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn plugin_estimate_lies_in_zero_ln_k(k in 2usize..=5, len in 2usize..200, paths in 1usize..4, order in 0usize..3, seed in any::<u64>()) {
        prop_assume!(len > order);
        let mut rng = rng_from(seed, &[]);
        let seqs: Vec<Vec<usize>> = (0..paths)
            .map(|_| (0..len).map(|_| rng.random_range(0..k)).collect())
            .collect();
        let e = entropy_rate_plugin(&seqs, order).unwrap();
        prop_assert!(e.value >= 0.0);
        prop_assert!(e.value <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn variation_regret_scales_with_cube_root(v in 1e-4..1e-2f64, gamma in 1.0..10.0f64) {
        // With T large the inner minimum is the second argument; compare first
        // terms only by subtracting the shared tail.
        let (k, t) = (2usize, 1e12f64);
        let tail = regret_bound_variation(gamma, 0.0, k, t).unwrap();
        let a = regret_bound_variation(gamma, v, k, t).unwrap() - tail;
        let gl = gamma * (k as f64).ln();
        let inner = |v: f64| (1.0 + gl.cbrt() / v.powf(2.0 / 3.0)).ln().sqrt();
        let b = regret_bound_variation(gamma, 2.0 * v, k, t).unwrap() - tail;
        let expected = 2f64.cbrt() * inner(2.0 * v) / inner(v);
        prop_assert!((b / a - expected).abs() < 1e-9);
    }
}

#[test]
fn rate_distortion_monotone_on_grids() {
    let ds = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
    let vs = [0.0, 1e-4, 1e-3, 0.01, 0.05, 0.1];
    for &v in &vs {
        let r: Vec<f64> = ds.iter().map(|&d| rate_distortion_bound(v, d, 1000.0, 2).unwrap()).collect();
        assert!(r.windows(2).all(|w| w[1] <= w[0]), "v = {v}: {r:?}");
    }
    for &d in &ds {
        let r: Vec<f64> = vs.iter().map(|&v| rate_distortion_bound(v, d, 1000.0, 2).unwrap()).collect();
        assert!(r.windows(2).all(|w| w[1] >= w[0]), "D = {d}: {r:?}");
        let g: Vec<f64> = vs.iter().map(|&v| regret_bound_variation(4.0, v, 2, 1000.0).unwrap()).collect();
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn effective_horizon_bound_is_nearly_tight_for_rare_switches() {
    for &delta in &[0.001, 0.005, 0.01, 0.02, 0.05] {
        for &k in &[2usize, 5, 10] {
            let exact = entropy_rate_markov_switch(k, delta).unwrap();
            let bound =
                effective_horizon_bound(1.0 / delta, ((k - 1) as f64).ln(), (k as f64).ln(), f64::INFINITY).unwrap();
            assert!(bound >= exact);
            assert!(bound / exact - 1.0 < 0.01, "delta {delta} k {k}: {bound} vs {exact}");
        }
    }
}
