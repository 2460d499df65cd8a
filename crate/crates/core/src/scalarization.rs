//! Augmented Chebyshev scalarization and uniform weights on the simplex.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default augmentation coefficient.
pub const DEFAULT_RHO: f64 = 0.05;

/// A weight vector `theta` on the simplex plus the augmentation `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarizationWeights {
    pub theta: Vec<f64>,
    pub rho: f64,
}

impl ScalarizationWeights {
    pub fn new(theta: Vec<f64>, rho: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        if theta.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config(format!("weights must be nonnegative: {theta:?}")));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights must sum to 1, got {sum}")));
        }
        if !(rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { theta, rho })
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    /// `min_j theta_j y_j + rho * sum_j theta_j y_j`.
    pub fn apply(&self, y: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        for (t, v) in self.theta.iter().zip(y) {
            let ty = t * v;
            min = min.min(ty);
            sum += ty;
        }
        min + self.rho * sum
    }

    /// Value plus the supergradient coefficients with respect to `y`. The
    /// min term contributes through the first minimizing objective.
    pub fn apply_with_weights(&self, y: &[f64], coeffs: &mut [f64]) -> f64 {
        let mut arg = 0;
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        for (j, (t, v)) in self.theta.iter().zip(y).enumerate() {
            let ty = t * v;
            if ty < min {
                min = ty;
                arg = j;
            }
            sum += ty;
            coeffs[j] = self.rho * t;
        }
        coeffs[arg] += self.theta[arg];
        min + self.rho * sum
    }
}

/// Augmented Chebyshev scalarization of `y`.
pub fn chebyshev(y: &[f64], w: &ScalarizationWeights) -> Result<f64> {
    check_len(w.m(), y.len())?;
    Ok(w.apply(y))
}

/// Draw weights uniformly on the `(m-1)`-simplex by normalizing `m`
/// independent unit-rate exponentials.
pub fn sample_weights<R: Rng + ?Sized>(rng: &mut R, m: usize, rho: f64) -> Result<ScalarizationWeights> {
    if m == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    if m == 1 {
        return ScalarizationWeights::new(vec![1.0], rho);
    }
    let mut theta: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= sum);
    ScalarizationWeights::new(theta, rho)
}
