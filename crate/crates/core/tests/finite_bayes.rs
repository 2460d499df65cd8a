use dsts_core::dm::{respond_to_values, NoiseProfile};
use dsts_core::finite_bayes::*;
use dsts_core::rng::rng_from_seed;
use dsts_core::surrogate::preference_log_likelihood;
use dsts_core::{Design, Error, Query, Response};
use proptest::prelude::*;

fn pair(space: &HypothesisSpace, a: usize, b: usize) -> Query {
    Query::new(vec![space.designs[a].clone(), space.designs[b].clone()]).unwrap()
}

#[test]
fn identical_values_leave_posterior_unchanged() {
    let space = HypothesisSpace::new(
        vec![Design::new(vec![0.0]), Design::new(vec![1.0]), Design::new(vec![2.0])],
        vec![vec![vec![0.3], vec![0.7], vec![0.0]], vec![vec![0.3], vec![0.7], vec![5.0]]],
        vec![0.5, 0.5],
        vec![0.2],
    )
    .unwrap();
    let s = PosteriorState::prior(&space);
    let r = Response::new(vec![1], 2).unwrap();
    let next = exact_posterior_update(&s, &pair(&space, 0, 1), &r, &space).unwrap();
    assert!(next.p.iter().zip(&s.p).all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn counterexample_instance_layout() {
    let space = counterexample_instance(0.2, 1.0).unwrap();
    let expected = [0.1, 0.1, 0.4, 0.4];
    assert!(space.prior.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
    let h1: Vec<f64> = space.hypotheses[0].iter().map(|r| r[0]).collect();
    assert_eq!(h1, vec![-1.0, 0.0, 1.0, 0.5]);
    assert_eq!(space.optimal_set(2), vec![1]);
    assert!(matches!(counterexample_instance(0.4, 1.0), Err(Error::Config(_))));
    assert!(matches!(counterexample_instance(0.0, 1.0), Err(Error::Config(_))));
}

#[test]
fn single_update_preserves_prior_ratio() {
    let (s, t) = (0.2, 0.8);
    let space = counterexample_instance(s, 1.0).unwrap();
    for w in [1, 2] {
        let r = Response::new(vec![w], 2).unwrap();
        let p = exact_posterior_update(&PosteriorState::prior(&space), &pair(&space, 2, 3), &r, &space).unwrap().p;
        assert!((p[0] / p[2] - s / t).abs() < 1e-14);
        assert!((p[1] / p[3] - s / t).abs() < 1e-14);
    }
}

#[test]
fn near_noiseless_evidence_rules_out_contradictions() {
    let space = HypothesisSpace::new(
        vec![Design::new(vec![0.0]), Design::new(vec![1.0])],
        vec![vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.0]], vec![vec![0.2], vec![0.1]]],
        vec![0.3, 0.3, 0.4],
        vec![1e-6],
    )
    .unwrap();
    let r = Response::new(vec![1], 2).unwrap();
    let p = exact_posterior_update(&PosteriorState::prior(&space), &pair(&space, 0, 1), &r, &space).unwrap().p;
    assert!(p[1] < 1e-10, "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let dead = PosteriorState { p: vec![0.0; 3] };
    assert!(matches!(exact_posterior_update(&dead, &pair(&space, 0, 1), &r, &space), Err(Error::InconsistentEvidence)));
}

#[test]
fn counterexample_mass_is_constant() {
    for (s, seeds) in [(0.2, 0..5u64), (0.1, 5..8)] {
        let t = 1.0 - s;
        for seed in seeds {
            let trace = run_counterexample(s, 1.0, 500, &mut rng_from_seed(seed)).unwrap();
            assert_eq!(trace.steps.len(), 501);
            for st in &trace.steps {
                assert!((st.mass_34 - t).abs() <= 1e-12, "seed {seed} step {}: {}", st.iter, st.mass_34);
                assert!((st.p[1] / st.p[3] - s / t).abs() <= 1e-12);
                assert!(st.qei_selects_34);
            }
        }
    }
}

#[test]
fn counterexample_trace_jsonl() {
    let trace = run_counterexample(0.2, 1.0, 3, &mut rng_from_seed(1)).unwrap();
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2]["iter"], 2);
    assert_eq!(lines[2]["p"].as_array().unwrap().len(), 4);
    assert!(lines[2]["mass_34"].is_f64());
}

#[test]
fn qei_examples() {
    let space = counterexample_instance(0.2, 1.0).unwrap();
    let point = PosteriorState { p: vec![0.0, 0.0, 1.0, 0.0] };
    let acq = qei_discrete_acquisition(&point, &space, &[1]).unwrap();
    let at = |a: usize, b: usize| acq.iter().find(|(k, _)| *k == (a, b)).unwrap().1;
    assert_eq!(at(2, 2), 0.0);
    assert_eq!(at(3, 3), 0.0);

    let prior = PosteriorState::prior(&space);
    assert_eq!(qei_argmax(&qei_discrete_acquisition(&prior, &space, &[0, 1]).unwrap()), (2, 3));

    // Two equally likely tables on two designs, design 0 shown:
    // means (0.5, 1), mu* = 0.5.
    let toy = HypothesisSpace::new(
        vec![Design::new(vec![0.0]), Design::new(vec![1.0])],
        vec![vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![2.0]]],
        vec![0.5, 0.5],
        vec![1.0],
    )
    .unwrap();
    let acq = qei_discrete_acquisition(&PosteriorState::prior(&toy), &toy, &[0]).unwrap();
    let hand = [((0, 0), 0.25), ((0, 1), 1.0), ((1, 1), 0.75)];
    for ((k, v), (hk, hv)) in acq.iter().zip(hand) {
        assert_eq!(*k, hk);
        assert!((v - hv).abs() < 1e-12);
    }
    assert!(qei_discrete_acquisition(&PosteriorState::prior(&toy), &toy, &[]).is_err());
}

#[test]
fn simulated_winners_follow_update_likelihood() {
    let values = vec![vec![0.3], vec![0.1], vec![0.45]];
    let lambda = 0.2;
    let noise = NoiseProfile::new(vec![lambda]).unwrap();
    let mut rng = rng_from_seed(12);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[respond_to_values(&values, &[0], &noise, &mut rng).unwrap().winner_slot(0)] += 1;
    }
    let col: Vec<f64> = values.iter().map(|v| v[0]).collect();
    for (w, c) in counts.iter().enumerate() {
        let p = preference_log_likelihood(&col, w + 1, lambda).unwrap().exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - p).abs() < 4.0 * se, "{w}: {c} vs {p}");
    }
}

#[test]
fn no_data_gives_prior_optimality() {
    let space = consistency_instance_m2(0.1).unwrap();
    let trace = consistency_experiment(&space, ConsistencyPolicy::Dts, 0, 0, &mut rng_from_seed(0)).unwrap();
    assert_eq!(trace.optimality.len(), 1);
    let mut expected = vec![0.0; 8];
    for k in 0..6 {
        for i in space.optimal_set(k) {
            expected[i] += 1.0 / 6.0;
        }
    }
    assert!(trace.optimality[0].iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn instances_have_the_stated_optima() {
    let m2 = consistency_instance_m2(0.1).unwrap();
    assert_eq!(m2.optimal_set(0), vec![0, 1, 2, 3]);
    for k in 1..6 {
        assert_ne!(m2.optimal_set(k), m2.optimal_set(0), "hypothesis {k}");
    }
    let m1 = consistency_instance_m1(0.1).unwrap();
    let argmaxes: Vec<Vec<usize>> = (0..4).map(|k| m1.optimal_set(k)).collect();
    assert_eq!(argmaxes, vec![vec![2], vec![3], vec![1], vec![4]]);
}

#[test]
fn modified_dsts_concentrates_on_true_pareto_set() {
    let space = consistency_instance_m2(0.1).unwrap();
    let policy = ConsistencyPolicy::DstsM { delta: 0.05, x_ref: 4 };
    let ok = (0..5)
        .filter(|&seed| {
            consistency_experiment(&space, policy, 0, 3000, &mut rng_from_seed(seed)).unwrap().separated(0.95, 0.05)
        })
        .count();
    assert!(ok >= 4, "{ok}/5");
}

#[test]
fn dts_concentrates_on_true_argmax() {
    let space = consistency_instance_m1(0.1).unwrap();
    let ok = (0..5)
        .filter(|&seed| {
            let t = consistency_experiment(&space, ConsistencyPolicy::Dts, 0, 2000, &mut rng_from_seed(seed)).unwrap();
            t.optimality.last().unwrap()[2] > 0.95
        })
        .count();
    assert!(ok >= 4, "{ok}/5");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn update_is_permutation_equivariant(
        values in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 8), 4),
        raw_prior in prop::collection::vec(0.01f64..1.0, 4),
        perm_seed in any::<u64>(),
        a in 0usize..4, b in 0usize..4, w1 in 1usize..=2, w2 in 1usize..=2,
    ) {
        // Four hypotheses, four designs, two objectives.
        let total: f64 = raw_prior.iter().sum();
        let prior: Vec<f64> = raw_prior.iter().map(|p| p / total).collect();
        let tables: Vec<Vec<Vec<f64>>> = values.iter().map(|v| v.chunks(2).map(|c| c.to_vec()).collect()).collect();
        let designs: Vec<Design> = (0..4).map(|i| Design::new(vec![i as f64])).collect();
        let space = HypothesisSpace::new(designs.clone(), tables.clone(), prior.clone(), vec![0.3, 0.5]).unwrap();
        let mut perm: Vec<usize> = (0..4).collect();
        let mut rng = rng_from_seed(perm_seed);
        for i in (1..4).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            perm.swap(i, j);
        }
        let permuted = HypothesisSpace::new(
            designs,
            perm.iter().map(|&k| tables[k].clone()).collect(),
            perm.iter().map(|&k| prior[k]).collect(),
            vec![0.3, 0.5],
        ).unwrap();
        let q = pair(&space, a, b);
        let r = Response::new(vec![w1, w2], 2).unwrap();
        let p = exact_posterior_update(&PosteriorState::prior(&space), &q, &r, &space).unwrap().p;
        let pp = exact_posterior_update(&PosteriorState::prior(&permuted), &q, &r, &permuted).unwrap().p;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, &k) in perm.iter().enumerate() {
            prop_assert!((pp[i] - p[k]).abs() < 1e-12);
        }
    }
}
