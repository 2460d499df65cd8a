use dsts_core::metrics::running_hv_trace;
use dsts_core::policies::{InnerOptions, PolicyConfig, PolicyKind};
use dsts_core::runner::*;
use dsts_core::surrogate::{fit_objectives, FitOptions, NoiseSetting};
use dsts_core::testbed::{ObjectiveOracle, TestProblem};
use dsts_core::Error;
use proptest::prelude::*;

fn quick(kind: PolicyKind, n_iterations: usize) -> ExperimentConfig {
    let mut policy = PolicyConfig::new(kind, 2);
    policy.inner_opt = InnerOptions { restarts: 2, raw_samples: 64, max_iters: 40 };
    policy.features = 200;
    policy.mc_samples = 32;
    let mut cfg = ExperimentConfig::new(TestProblem::Dtlz2, policy);
    cfg.n_iterations = n_iterations;
    cfg.n_replications = 2;
    cfg.seed = 3;
    cfg.fit = FitOptions { restarts: 2, local_searches: 1, max_evals: 40, ..FitOptions::default() };
    cfg.noise.calibration.design_samples = 20_000;
    cfg.noise.calibration.comparisons = 4000;
    cfg
}

#[test]
fn init_only_trace_has_two_d_plus_one_records() {
    let cfg = quick(PolicyKind::Dsts, 0);
    let noise = resolve_noise(&cfg).unwrap();
    let trace = run_replication_with(&cfg, &noise, 0).unwrap();
    assert_eq!(trace.records.len(), 8);
    assert_eq!(trace.hv_series().len(), 1);
    assert!(trace.records.iter().all(|r| r.laplace_psd.is_none()));
    assert_eq!(trace.records.last().unwrap().n_shown, 16);
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [PolicyKind::Dsts, PolicyKind::Qehvi, PolicyKind::PboDtsIf] {
        let label = kind.label();
        let mut cfg = quick(kind, 2);
        let mut bytes = Vec::new();
        for run in 0..2 {
            cfg.out_dir = dir.path().join(format!("{label}-{run}"));
            let trace = run_replication(&cfg, 1).unwrap();
            assert_eq!(trace.records.len(), 10);
            bytes.push(std::fs::read(cfg.out_dir.join(trace_file_name(1))).unwrap());
        }
        // The config snapshot differs only in out_dir; compare records.
        let body = |b: &[u8]| String::from_utf8(b.to_vec()).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(body(&bytes[0]), body(&bytes[1]), "{label}");
        assert!(cfg.out_dir.join("rep_001.timing.jsonl").exists());
    }
}

#[test]
fn replications_use_distinct_streams() {
    let cfg = quick(PolicyKind::Random, 0);
    let noise = resolve_noise(&cfg).unwrap();
    let a = run_replication_with(&cfg, &noise, 0).unwrap();
    let b = run_replication_with(&cfg, &noise, 1).unwrap();
    assert_ne!(a.header.seed, b.header.seed);
    assert_ne!(a.records[0].query, b.records[0].query);
}

#[test]
fn trace_round_trips_and_hv_matches_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(PolicyKind::Qparego, 3);
    cfg.out_dir = dir.path().to_path_buf();
    let trace = run_replication(&cfg, 0).unwrap();
    let back = RunTrace::read_jsonl(&dir.path().join(trace_file_name(0))).unwrap();
    assert_eq!(back.header, trace.header);
    assert_eq!(back.records, trace.records);

    let ds = back.dataset().unwrap();
    let problem = cfg.problem;
    let hv = running_hv_trace(&ds, &problem, &problem.hv_reference()).unwrap();
    let stored: Vec<f64> = back.records.iter().map(|r| r.hv).collect();
    assert_eq!(hv, stored);
    assert!(stored.windows(2).all(|w| w[1] >= w[0]));
    assert!(back.records[8..].iter().all(|r| r.laplace_psd.is_some()));
}

#[test]
fn aggregation_matches_hand_computation() {
    let series = vec![vec![1.0, 2.0, 4.0], vec![2.0, 2.0, 6.0], vec![3.0, 5.0, 2.0]];
    let rows = aggregate(&series).unwrap();
    // Column means 2, 3, 4; sample variances 1, 3, 4.
    let expected = [(2.0, 1.0f64), (3.0, 3.0), (4.0, 4.0)];
    for (row, (mean, var)) in rows.iter().zip(expected) {
        let se = (var / 3.0).sqrt();
        assert!((row.mean_hv - mean).abs() < 1e-12);
        assert!((row.lo - (mean - 1.96 * se)).abs() < 1e-12);
        assert!((row.hi - (mean + 1.96 * se)).abs() < 1e-12);
    }
    assert_eq!(summary_csv(&rows).lines().next(), Some("iter,mean_hv,lo,hi"));
    assert_eq!(summary_csv(&rows).lines().count(), 4);

    let single = aggregate(&series[..1]).unwrap();
    assert!(single.iter().zip(&series[0]).all(|(r, v)| r.mean_hv == *v && r.lo == *v && r.hi == *v));
    assert!(aggregate(&[]).is_err());
    assert!(matches!(aggregate(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Dimension { .. })));
}

proptest! {
    #[test]
    fn aggregation_ignores_replication_order(
        series in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 5), 2..8),
        rot in 0usize..8,
    ) {
        let mut shuffled = series.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = aggregate(&series).unwrap();
        prop_assert_eq!(&a, &aggregate(&shuffled).unwrap());
        for r in &a {
            prop_assert!(r.lo <= r.mean_hv && r.mean_hv <= r.hi);
        }
    }
}

#[test]
fn random_experiment_improves_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(PolicyKind::Random, 40);
    cfg.n_replications = 10;
    cfg.out_dir = dir.path().to_path_buf();
    let out = run_experiment(&cfg, 2).unwrap();
    let s = &out.summary;
    assert_eq!((s.effective_n, s.failures.len(), s.rows.len()), (10, 0, 41));
    assert!(s.rows[40].mean_hv > s.rows[0].mean_hv);
    assert!(s.rows.iter().all(|r| r.lo <= r.mean_hv && r.mean_hv <= r.hi));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);

    // Rebuilding from disk gives the same table; a lost trace is reported.
    assert_eq!(summarize_dir(dir.path()).unwrap().rows, s.rows);
    std::fs::remove_file(dir.path().join(trace_file_name(4))).unwrap();
    let partial = summarize_dir(dir.path()).unwrap();
    assert_eq!(partial.effective_n, 9);
    assert_eq!(partial.failures.iter().map(|f| f.replication).collect::<Vec<_>>(), vec![4]);
}

#[test]
fn mixed_visibility_records_measurements() {
    let mut cfg = quick(PolicyKind::Dsts, 4);
    cfg.observable = vec![1];
    cfg.observation_sd = Some(vec![0.01]);
    let noise = resolve_noise(&cfg).unwrap();
    let trace = run_replication_with(&cfg, &noise, 0).unwrap();
    assert_eq!(trace.records.len(), 12);
    let problem = cfg.problem;
    let mut within = 0;
    let mut total = 0;
    for r in &trace.records {
        assert_eq!(r.response.winners.len(), 1);
        let vals = &r.observed[&1];
        assert_eq!(vals.len(), 2);
        for (x, v) in r.query.designs.iter().zip(vals) {
            let truth = problem.evaluate(x).unwrap().values[1];
            total += 1;
            within += usize::from((v - truth).abs() < 0.03);
        }
    }
    assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");

    // The regression model fitted to the measurements tracks them.
    let ds = trace.dataset().unwrap();
    let models = fit_objectives(&ds, &cfg.fit, NoiseSetting::default(), None, true, &mut dsts_core::rng::rng_from_seed(0))
        .unwrap();
    let obs = &ds.observations[&1];
    let close = obs.iter().filter(|o| (models[1].posterior().mean(&o.design.coords) - o.value).abs() < 0.03).count();
    assert!(close as f64 >= 0.95 * obs.len() as f64, "{close}/{}", obs.len());
}

#[test]
fn all_latent_visibility_is_the_default_run() {
    let base = quick(PolicyKind::Dsts, 2);
    let mut json: serde_json::Value = serde_json::to_value(&base).unwrap();
    json["observable"] = serde_json::json!([]);
    let explicit = ExperimentConfig::from_json(&json.to_string()).unwrap();
    let noise = resolve_noise(&base).unwrap();
    assert_eq!(noise, resolve_noise(&explicit).unwrap());
    let a = run_replication_with(&base, &noise, 0).unwrap();
    let b = run_replication_with(&explicit, &noise, 0).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn all_observable_runs_as_batch_bo() {
    let mut cfg = quick(PolicyKind::Qparego, 2);
    cfg.observable = vec![0, 1];
    let noise = resolve_noise(&cfg).unwrap();
    assert_eq!(noise.observation_sd.len(), 2);
    let trace = run_replication_with(&cfg, &noise, 0).unwrap();
    assert!(trace.records.iter().all(|r| r.response.winners.is_empty() && r.observed.len() == 2));
}

#[test]
fn aggregated_feedback_run_records_weights() {
    let cfg = quick(PolicyKind::PboDtsIf, 2);
    let noise = resolve_noise(&cfg).unwrap();
    let trace = run_replication_with(&cfg, &noise, 0).unwrap();
    for r in &trace.records {
        assert_eq!(r.response.winners.len(), 1);
        let w = r.weights.as_ref().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn config_defaults_and_validation() {
    let cfg = ExperimentConfig::from_json(r#"{"problem": "vehicle_safety", "policy": {"name": "dsts", "q": 4}}"#).unwrap();
    assert_eq!((cfg.n_init(), cfg.n_iterations, cfg.n_replications, cfg.policy.q), (12, 40, 10, 4));
    assert_eq!(cfg.noise.mistake_rate, 0.2);
    let bad = [
        r#"{"problem": "dtlz2", "policy": {"name": "dsts"}, "n_replications": 0}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "dsts"}, "observable": [2]}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "dsts"}, "observable": [0, 0]}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "pbo-dts-if"}, "observable": [0]}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "dsts"}, "observable": [0], "observation_sd": [0.1, 0.2]}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "dsts"}, "noise": {"lambda": [0.1]}}"#,
        r#"{"problem": "dtlz2", "policy": {"name": "dsts-m", "delta": 1.5}}"#,
        r#"{"problem": "nope", "policy": {"name": "dsts"}}"#,
    ];
    for b in bad {
        assert!(ExperimentConfig::from_json(b).is_err(), "{b}");
    }
}

#[test]
fn explicit_lambda_skips_calibration() {
    let mut cfg = quick(PolicyKind::Random, 0);
    cfg.noise.lambda = Some(vec![0.5, 0.25]);
    assert_eq!(resolve_noise(&cfg).unwrap().lambda, vec![0.5, 0.25]);
}
