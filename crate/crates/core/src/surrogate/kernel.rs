use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[default]
    Matern52,
}

/// Stationary ARD kernel with zero prior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl KernelConfig {
    pub fn matern52(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        let k = Self { family: KernelFamily::Matern52, lengthscales, signal_variance };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::Config("kernel needs at least one lengthscale".into()));
        }
        if self.lengthscales.iter().chain([&self.signal_variance]).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("kernel parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.scaled_distance(a, b);
        let sr = SQRT5 * r;
        self.signal_variance * (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
    }

    /// `k(a, b)` and its gradient with respect to `a`, accumulated as
    /// `grad += weight * dk/da`.
    pub fn eval_grad(&self, a: &[f64], b: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let r = self.scaled_distance(a, b);
        let sr = SQRT5 * r;
        let e = (-sr).exp();
        // dk/da_i = -(5/3) s2 (1 + sqrt5 r) exp(-sqrt5 r) (a_i - b_i) / l_i^2
        let common = -(5.0 / 3.0) * self.signal_variance * (1.0 + sr) * e * weight;
        for (((g, x), y), l) in grad.iter_mut().zip(a).zip(b).zip(&self.lengthscales) {
            *g += common * (x - y) / (l * l);
        }
        self.signal_variance * (1.0 + sr + sr * sr / 3.0) * e
    }

    /// Gram matrix over `points`.
    pub fn gram(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance;
            for j in 0..i {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance `k(x, z_i)` for every row of `points`.
    pub fn cross(&self, x: &[f64], points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().map(|z| self.eval(x, z)).collect()
    }
}
