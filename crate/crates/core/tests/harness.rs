use nsbandit::env::EnvSpec;
use nsbandit::harness::{
    emit_figure_data, estimates_table, run_experiment, sweep, Cell, ExperimentConfig, FigureId, FigureOptions,
};
use nsbandit::policy::PolicySpec;

fn two_arm(tau_cm: f64, tau_id: f64) -> EnvSpec {
    EnvSpec::GpTwoType {
        k: 2,
        tau_cm,
        tau_id,
        noise_var: 1.0,
    }
}

fn config(env: EnvSpec, policies: Vec<PolicySpec>, horizon: usize, replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        env,
        policies,
        horizon,
        replications,
        master_seed: 2024,
        trace: false,
    }
}

fn num(c: &Cell) -> f64 {
    match c {
        Cell::Num(x) => *x,
        Cell::Int(i) => *i as f64,
        Cell::Text(s) => panic!("expected a number, got {s}"),
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let cfg = config(
        two_arm(10.0, 20.0),
        vec![
            PolicySpec::new("ts_exact"),
            PolicySpec::new("sw_ts").with("L", 20),
            PolicySpec::new("sw_ucb").with("L", 20).with("beta", 2),
            PolicySpec::new("uniform"),
        ],
        80,
        24,
    );
    let csv = |threads| {
        estimates_table(&run_experiment(&cfg, Some(threads)).unwrap().estimates)
            .to_csv_string()
            .unwrap()
    };
    let one = csv(1);
    assert_eq!(one, csv(2));
    assert_eq!(one, csv(5));
}

#[test]
fn uniform_matches_folded_normal_oracle() {
    // The idiosyncratic difference of two unit processes is N(0, 2) at every
    // period, so E[max - mean] = E|N(0,2)| / 2 = 1/√π.
    let oracle = 1.0 / std::f64::consts::PI.sqrt();
    let cfg = config(two_arm(10.0, 20.0), vec![PolicySpec::new("uniform")], 200, 400);
    let e = &run_experiment(&cfg, None).unwrap().estimates[0];
    assert!((e.mean - oracle).abs() < 2.0 * e.stderr, "{} ± {} vs {oracle}", e.mean, e.stderr);
    assert_eq!((e.n, e.excluded), (400, 0));
}

#[test]
fn stderr_halves_when_replications_quadruple() {
    let base = config(two_arm(10.0, 20.0), vec![PolicySpec::new("uniform")], 100, 150);
    let small = run_experiment(&base, None).unwrap().estimates[0].stderr;
    let big = run_experiment(&ExperimentConfig { replications: 600, ..base }, None).unwrap().estimates[0].stderr;
    let ratio = small / big;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn sweep_rows_follow_values_and_policies() {
    let cfg = config(
        two_arm(10.0, 20.0),
        vec![PolicySpec::new("sw_ts").with("L", 10), PolicySpec::new("uniform")],
        50,
        6,
    );
    let pts = sweep(&cfg, "policies.0.L", &[5.0, 25.0], None).unwrap();
    let ids: Vec<_> = pts
        .iter()
        .flat_map(|p| p.output.estimates.iter().map(|e| e.policy.clone()))
        .collect();
    assert_eq!(ids, ["sw_ts_L5", "uniform", "sw_ts_L25", "uniform"]);
    // Same master seed at every value: the untouched policy repeats exactly.
    assert_eq!(pts[0].output.estimates[1], pts[1].output.estimates[1]);
    assert!(sweep(&cfg, "env.width", &[1.0], None).is_err());
}

#[test]
fn fig2_left_smoke_schema() {
    let cfg = config(
        two_arm(10.0, 50.0),
        vec![
            PolicySpec::new("ts_exact"),
            PolicySpec::new("sw_ts").with("L", 50),
            PolicySpec::new("uniform"),
        ],
        100,
        10,
    );
    let opts = FigureOptions {
        values: Some(vec![10.0, 50.0, 100.0]),
        ..Default::default()
    };
    let t = emit_figure_data(&cfg, FigureId::Fig2Left, &opts).unwrap();
    assert_eq!(t.columns, ["tau_id", "policy", "mean", "stderr", "n", "excluded"]);
    assert_eq!(t.rows.len(), 9);
    for (i, r) in t.rows.iter().enumerate() {
        assert_eq!(num(&r[0]), [10.0, 50.0, 100.0][i / 3]);
        assert!(matches!(&r[1], Cell::Text(_)));
        assert!(num(&r[3]) >= 0.0);
        assert_eq!(num(&r[4]), 10.0);
    }
    let csv = t.to_csv_string().unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.starts_with("tau_id,policy,mean,stderr,n,excluded\n"));

    let c5 = emit_figure_data(&cfg, FigureId::FigC5, &opts).unwrap();
    assert_eq!(c5.columns.last().unwrap(), "regret_bound");
    let right = emit_figure_data(&cfg, FigureId::Fig2Right, &opts).unwrap();
    assert_eq!(right.columns[0], "tau_cm");
    assert!(emit_figure_data(&config(EnvSpec::MarkovSwitch { k: 2, delta: 0.1, gap: 1.0, noise_var: 1.0 }, vec![PolicySpec::new("uniform")], 10, 2), FigureId::FigC1, &opts).is_err());
}

#[test]
fn instantaneous_regret_levels_off() {
    let cfg = config(two_arm(50.0, 50.0), vec![PolicySpec::new("ts_exact")], 1000, 48);
    let t = emit_figure_data(&cfg, FigureId::FigC4, &FigureOptions::default()).unwrap();
    assert_eq!(t.columns, ["t", "policy", "instantaneous_regret"]);
    assert_eq!(t.rows.len(), 1000);
    let est = &run_experiment(&cfg, None).unwrap().estimates[0];
    let tail: Vec<f64> = t.rows[500..].iter().map(|r| num(&r[2])).collect();
    let level = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((level - est.mean).abs() < 2.0 * est.stderr, "tail {level} vs {} ± {}", est.mean, est.stderr);
}

#[test]
fn figc2_tracks_rice_formula() {
    let cfg = config(two_arm(10.0, 10.0), vec![PolicySpec::new("uniform")], 1000, 40);
    let opts = FigureOptions {
        values: Some(vec![5.0, 20.0]),
        ..Default::default()
    };
    let t = emit_figure_data(&cfg, FigureId::FigC2, &opts).unwrap();
    assert_eq!(t.columns, ["tau_id", "tau_eff_hat", "tau_eff_rice", "censored"]);
    for r in &t.rows {
        let (hat, rice) = (num(&r[1]), num(&r[2]));
        assert!((hat / rice - 1.0).abs() < 0.15, "{hat} vs {rice}");
    }
}
