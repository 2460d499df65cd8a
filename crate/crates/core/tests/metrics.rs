use dsts_core::metrics::*;
use dsts_core::rng::rng_from_seed;
use dsts_core::testbed::TestProblem;
use dsts_core::{Design, InteractionDataset, ObjectiveVector, Query, Response};
use proptest::prelude::*;
use rand::Rng;

/// Inclusion-exclusion over all subsets: the volume of an intersection of
/// boxes anchored at the reference is the box at the componentwise min.
fn hv_inclusion_exclusion(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut corner: Vec<f64> = vec![f64::INFINITY; r.len()];
        for (i, p) in points.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for (c, v) in corner.iter_mut().zip(p) {
                    *c = c.min(*v);
                }
            }
        }
        let vol: f64 = corner.iter().zip(r).map(|(c, l)| (c - l).max(0.0)).product();
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * vol;
    }
    total
}

fn front(points: &[Vec<f64>], r: &[f64]) -> FrontApproximation {
    FrontApproximation::new(
        points.iter().map(|p| ObjectiveVector::new(p.clone()).unwrap()).collect(),
        ObjectiveVector::new(r.to_vec()).unwrap(),
    )
    .unwrap()
}

#[test]
fn exact_matches_inclusion_exclusion() {
    let mut rng = rng_from_seed(1);
    for m in 2..=4 {
        for _ in 0..30 {
            let n = rng.random_range(1..=9);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-0.2..1.0)).collect()).collect();
            let r = vec![0.0; m];
            let exact = hypervolume(&pts, &r).unwrap();
            let clipped: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v.max(0.0)).collect()).collect();
            let ie = hv_inclusion_exclusion(&clipped, &r);
            assert!((exact - ie).abs() < 1e-12, "m={m}: {exact} vs {ie}");
        }
    }
}

#[test]
fn thirty_points_in_cube_agree_with_mc() {
    let mut rng = rng_from_seed(2);
    let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
    let f = front(&pts, &[0.0; 3]);
    let exact = hypervolume_exact(&f).unwrap();
    let (est, se) = hypervolume_mc(&f, 1_000_000, &mut rng).unwrap();
    assert!((exact - est).abs() <= 3.0 * se, "{exact} vs {est} ± {se}");
}

#[test]
fn mc_examples() {
    let mut rng = rng_from_seed(3);
    let (v, se) = hypervolume_mc(&front(&[vec![0.0, 0.0]], &[0.0, 0.0]), 1000, &mut rng).unwrap();
    assert_eq!((v, se), (0.0, 0.0));
    let (v, se) = hypervolume_mc(&front(&[vec![1.0, 1.0]], &[0.0, 0.0]), 1_000_000, &mut rng).unwrap();
    assert!((v - 1.0).abs() <= 0.003 && se == 0.0);
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random(), rng.random()]).collect();
        let f = front(&pts, &[0.0, 0.0]);
        let exact = hypervolume_exact(&f).unwrap();
        let (est, se) = hypervolume_mc(&f, 200_000, &mut rng).unwrap();
        assert!((exact - est).abs() <= 3.0 * se + 1e-12, "{exact} vs {est} ± {se}");
    }
}

#[test]
fn scripted_dtlz2_trace() {
    let p = TestProblem::Dtlz2;
    let r = ObjectiveVector::new(vec![-1.5, -1.5]).unwrap();
    let q = |a: [f64; 3], b: [f64; 3]| Query::new(vec![Design::new(a.to_vec()), Design::new(b.to_vec())]).unwrap();
    let mut ds = InteractionDataset::all_latent(2);
    // Objective vectors: (-1, 0) and (0, -1) on the front; then the 45-degree
    // front point; then a dominated design.
    ds.push(q([0.0, 0.5, 0.5], [1.0, 0.5, 0.5]), Response::new(vec![1, 1], 2).unwrap()).unwrap();
    ds.push(q([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]), Response::new(vec![1, 1], 2).unwrap()).unwrap();
    ds.push(q([0.5, 1.0, 1.0], [0.5, 0.0, 0.5]), Response::new(vec![1, 1], 2).unwrap()).unwrap();
    let trace = running_hv_trace(&ds, &p, &r).unwrap();
    // Two unit-offset boxes 1.5x0.5 and 0.5x1.5 overlapping in 0.5x0.5.
    let h1 = 1.5 * 0.5 + 0.5 * 1.5 - 0.25;
    let c = std::f64::consts::FRAC_1_SQRT_2;
    // Adding (-c, -c): extra region is the box [ -1.5+... ] computed by
    // inclusion-exclusion over the three points.
    let h2 = hv_inclusion_exclusion(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![-c, -c]], &[-1.5, -1.5]);
    assert!((trace[0] - h1).abs() < 1e-12);
    assert!((trace[1] - h2).abs() < 1e-12);
    assert!((trace[2] - h2).abs() < 1e-12, "{trace:?}");
}

fn arb_points(m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, m), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn adding_a_point_never_decreases(m in 2usize..=4, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let pts: Vec<Vec<f64>> = (0..rng.random_range(1..15)).map(|_| (0..m).map(|_| rng.random()).collect()).collect();
        let extra: Vec<f64> = (0..m).map(|_| rng.random()).collect();
        let r = vec![0.0; m];
        let before = hypervolume(&pts, &r).unwrap();
        let mut more = pts.clone();
        more.push(extra);
        prop_assert!(hypervolume(&more, &r).unwrap() >= before - 1e-12);
    }

    #[test]
    fn dominated_points_change_nothing(pts in arb_points(3), pick in any::<prop::sample::Index>(), shrink in prop::collection::vec(0.0f64..1.0, 3)) {
        let r = vec![0.0; 3];
        let base = &pts[pick.index(pts.len())];
        let dominated: Vec<f64> = base.iter().zip(&shrink).map(|(v, s)| v * s).collect();
        let before = hypervolume(&pts, &r).unwrap();
        let mut more = pts.clone();
        more.push(dominated);
        prop_assert!((hypervolume(&more, &r).unwrap() - before).abs() <= 1e-12);
    }

    #[test]
    fn permutation_invariant(mut pts in arb_points(4), seed in any::<u64>()) {
        let r = vec![0.0; 4];
        let a = hypervolume(&pts, &r).unwrap();
        let mut rng = rng_from_seed(seed);
        for i in (1..pts.len()).rev() {
            let j = rng.random_range(0..=i);
            pts.swap(i, j);
        }
        prop_assert!((hypervolume(&pts, &r).unwrap() - a).abs() <= 1e-12);
    }
}
