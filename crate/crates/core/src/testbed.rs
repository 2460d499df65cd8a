//! Synthetic multi-objective test problems in maximization form.
//!
//! The standard suite problems are minimization problems; every output here
//! is negated. Designs always live in the unit box and are mapped affinely
//! onto each problem's native bounds.
//!
//! Formulas:
//! - DTLZ1 (m = 2, k = d - 1): `g = 100 (k + sum_i ((x_i - .5)^2 - cos(20 pi (x_i - .5))))`,
//!   `f1 = .5 x1 (1 + g)`, `f2 = .5 (1 - x1)(1 + g)`.
//! - DTLZ2 (m = 2, k = d - 1): `g = sum_i (x_i - .5)^2`,
//!   `f1 = (1 + g) cos(pi x1 / 2)`, `f2 = (1 + g) sin(pi x1 / 2)`.
//! - Vehicle Safety: three response-surface polynomials over `[1,3]^5`.
//! - Car Side Impact: weight, force, mean velocity and total constraint
//!   violation over the seven native bounds listed in [`CAR_SIDE_IMPACT_BOUNDS`].

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::types::{Design, DesignSpace, ObjectiveVector};

/// Anything that maps designs to objective vectors.
pub trait ObjectiveOracle: Sync {
    fn num_objectives(&self) -> usize;
    fn evaluate(&self, x: &Design) -> Result<ObjectiveVector>;
}

impl<F> ObjectiveOracle for (usize, F)
where
    F: Fn(&Design) -> Result<ObjectiveVector> + Sync,
{
    fn num_objectives(&self) -> usize {
        self.0
    }

    fn evaluate(&self, x: &Design) -> Result<ObjectiveVector> {
        (self.1)(x)
    }
}

pub const VEHICLE_SAFETY_BOUNDS: [(f64, f64); 5] = [(1.0, 3.0); 5];

pub const CAR_SIDE_IMPACT_BOUNDS: [(f64, f64); 7] = [
    (0.5, 1.5),
    (0.45, 1.35),
    (0.5, 1.5),
    (0.5, 1.5),
    (0.875, 2.625),
    (0.4, 1.2),
    (0.4, 1.2),
];

/// Named test problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestProblem {
    Dtlz1,
    Dtlz2,
    VehicleSafety,
    CarSideImpact,
}

impl TestProblem {
    pub const ALL: [TestProblem; 4] =
        [TestProblem::Dtlz1, TestProblem::Dtlz2, TestProblem::VehicleSafety, TestProblem::CarSideImpact];

    pub fn name(&self) -> &'static str {
        match self {
            TestProblem::Dtlz1 => "dtlz1",
            TestProblem::Dtlz2 => "dtlz2",
            TestProblem::VehicleSafety => "vehicle_safety",
            TestProblem::CarSideImpact => "car_side_impact",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestProblem::Dtlz1 => 6,
            TestProblem::Dtlz2 => 3,
            TestProblem::VehicleSafety => 5,
            TestProblem::CarSideImpact => 7,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            TestProblem::Dtlz1 | TestProblem::Dtlz2 => 2,
            TestProblem::VehicleSafety => 3,
            TestProblem::CarSideImpact => 4,
        }
    }

    pub fn space(&self) -> DesignSpace {
        DesignSpace::ContinuousBox { bounds: vec![(0.0, 1.0); self.dim()] }
    }

    /// Frozen hypervolume reference point. Produced by
    /// [`estimate_reference`] with `REFERENCE_SAMPLES` draws from
    /// `REFERENCE_SEED`; a unit test recomputes it.
    pub fn hv_reference(&self) -> ObjectiveVector {
        let r: &[f64] = match self {
            TestProblem::Dtlz1 => &[-520.8890339394572, -508.9127924433315],
            TestProblem::Dtlz2 => &[-1.5085636006009653, -1.5039946601551228],
            TestProblem::VehicleSafety => &[-1703.3724206366512, -11.741621506447576, -0.2574646079984324],
            TestProblem::CarSideImpact => {
                &[-41.68505771838424, -4.431379509045887, -12.999684704945839, -12.528589072469618]
            }
        };
        ObjectiveVector::from(r.to_vec())
    }

    pub fn evaluate_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("{} coordinate {i} = {v} outside [0, 1]", self.name())));
        }
        Ok(match self {
            TestProblem::Dtlz1 => dtlz1_raw(x),
            TestProblem::Dtlz2 => dtlz2_raw(x),
            TestProblem::VehicleSafety => vehicle_safety_raw(&to_native(x, &VEHICLE_SAFETY_BOUNDS)),
            TestProblem::CarSideImpact => car_side_impact_raw(&to_native(x, &CAR_SIDE_IMPACT_BOUNDS)),
        }
        .into_iter()
        .map(|v| -v)
        .collect())
    }
}

impl ObjectiveOracle for TestProblem {
    fn num_objectives(&self) -> usize {
        self.m()
    }

    fn evaluate(&self, x: &Design) -> Result<ObjectiveVector> {
        Ok(ObjectiveVector::from(self.evaluate_coords(&x.coords)?))
    }
}

impl FromStr for TestProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestProblem::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem '{s}'")))
    }
}

impl std::fmt::Display for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn dtlz1(x: &Design) -> Result<ObjectiveVector> {
    TestProblem::Dtlz1.evaluate(x)
}

pub fn dtlz2(x: &Design) -> Result<ObjectiveVector> {
    TestProblem::Dtlz2.evaluate(x)
}

pub fn vehicle_safety(x: &Design) -> Result<ObjectiveVector> {
    TestProblem::VehicleSafety.evaluate(x)
}

pub fn car_side_impact(x: &Design) -> Result<ObjectiveVector> {
    TestProblem::CarSideImpact.evaluate(x)
}

fn to_native(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, (lo, hi))| lo + (hi - lo) * v).collect()
}

fn dtlz1_raw(x: &[f64]) -> Vec<f64> {
    let tail = &x[1..];
    let k = tail.len() as f64;
    let g = 100.0 * (k + tail.iter().map(|v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos()).sum::<f64>());
    vec![0.5 * x[0] * (1.0 + g), 0.5 * (1.0 - x[0]) * (1.0 + g)]
}

fn dtlz2_raw(x: &[f64]) -> Vec<f64> {
    let g: f64 = x[1..].iter().map(|v| (v - 0.5).powi(2)).sum();
    let a = x[0] * PI / 2.0;
    vec![(1.0 + g) * a.cos(), (1.0 + g) * a.sin()]
}

fn vehicle_safety_raw(x: &[f64]) -> Vec<f64> {
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    let mass = 1640.2823 + 2.3573285 * x1 + 2.3220035 * x2 + 4.5688768 * x3 + 7.7213633 * x4 + 4.4559504 * x5;
    let accel = 6.5856 + 1.15 * x1 - 1.0427 * x2 + 0.9738 * x3 + 0.8364 * x4 - 0.3695 * x1 * x4
        + 0.0861 * x1 * x5
        + 0.3628 * x2 * x4
        - 0.1106 * x1 * x1
        - 0.3437 * x3 * x3
        + 0.1764 * x4 * x4;
    let intrusion = -0.0551 + 0.0181 * x1 + 0.1024 * x2 + 0.0421 * x3 - 0.0073 * x1 * x2 + 0.024 * x2 * x3
        - 0.0118 * x2 * x4
        - 0.0204 * x3 * x4
        - 0.008 * x3 * x5
        - 0.0241 * x2 * x2
        + 0.0109 * x4 * x4;
    vec![mass, accel, intrusion]
}

fn car_side_impact_raw(x: &[f64]) -> Vec<f64> {
    let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    let weight = 1.98 + 4.9 * x1 + 6.67 * x2 + 6.98 * x3 + 4.01 * x4 + 1.78 * x5 + 1e-5 * x6 + 2.73 * x7;
    let force = 4.72 - 0.5 * x4 - 0.19 * x2 * x3;
    let v_mbp = 10.58 - 0.674 * x1 * x2 - 0.67275 * x2;
    let v_fd = 16.45 - 0.489 * x3 * x7 - 0.843 * x5 * x6;
    let velocity = 0.5 * (v_mbp + v_fd);
    let g = [
        1.0 - 1.16 + 0.3717 * x2 * x4 + 0.0092928 * x3,
        0.32 - 0.261 + 0.0159 * x1 * x2 + 0.06486 * x1 + 0.019 * x2 * x7 - 0.0144 * x3 * x5 - 0.0154464 * x6,
        0.32 - 0.214 - 0.00817 * x5 + 0.045195 * x1 + 0.0135168 * x1 - 0.03099 * x2 * x6 + 0.018 * x2 * x7
            - 0.007176 * x3
            - 0.023232 * x3
            + 0.00364 * x5 * x6
            + 0.018 * x2 * x2,
        0.32 - 0.74 + 0.61 * x2 + 0.031296 * x3 + 0.031872 * x7 - 0.227 * x2 * x2,
        32.0 - 28.98 - 3.818 * x3 + 4.2 * x1 * x2 - 1.27296 * x6 + 2.68065 * x7,
        32.0 - 33.86 - 2.95 * x3 + 5.057 * x1 * x2 + 3.795 * x2 + 3.4431 * x7 - 1.45728,
        32.0 - 46.36 + 9.9 * x2 + 4.4505 * x1,
        4.0 - force,
        9.9 - v_mbp,
        15.7 - v_fd,
    ];
    let violation: f64 = g.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    vec![weight, force, velocity, violation]
}

pub const REFERENCE_SAMPLES: usize = 100_000;
pub const REFERENCE_SEED: u64 = 20_240_501;

/// Componentwise minimum over `n` uniform designs, pushed down by 1% of the
/// per-objective sampled range.
pub fn estimate_reference<R: Rng + ?Sized>(problem: TestProblem, n: usize, rng: &mut R) -> Vec<f64> {
    let m = problem.m();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    let space = problem.space();
    for _ in 0..n {
        let y = problem.evaluate_coords(&space.sample_uniform(rng).coords).expect("in-box sample");
        for j in 0..m {
            lo[j] = lo[j].min(y[j]);
            hi[j] = hi[j].max(y[j]);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| l - 0.01 * (h - l)).collect()
}
