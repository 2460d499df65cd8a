use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::kernel::KernelConfig;
use super::linalg::{cholesky_jittered, psd_factor};
use super::sample::FunctionSample;
use crate::error::{check_len, Result};
use crate::types::COORD_TOL;

/// Smallest relative jitter added to anchor Gram matrices.
pub const BASE_JITTER: f64 = 1e-6;

/// Gaussian posterior over a zero-mean GP summarized by the latent values
/// at a set of anchors: `f(Z) ~ N(mean_z, cov_z)`, and `f(x) | f(Z)` follows
/// the prior conditional. Outputs are mapped through `offset + scale * f`.
///
/// The Gram matrix carries a small diagonal jitter. Cross-covariances
/// include the same jitter when a query point coincides with an anchor, so
/// the posterior mean and pathwise samples reproduce the anchor moments
/// exactly there.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelConfig,
    anchors: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    alpha: DVector<f64>,
    mean_z: DVector<f64>,
    cov_z: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    // S^T K^{-1}, so that the posterior-covariance correction is |C k|^2.
    var_proj: DMatrix<f64>,
    offset: f64,
    scale: f64,
}

impl GpPosterior {
    /// Factor the anchor Gram matrix with escalating jitter.
    pub fn factor_gram(kernel: &KernelConfig, anchors: &[Vec<f64>]) -> Result<(Cholesky<f64, Dyn>, f64)> {
        cholesky_jittered(&kernel.gram(anchors), BASE_JITTER)
    }

    /// Build from anchor moments. `gram` is an existing factorization of the
    /// jittered anchor Gram matrix (as returned by [`Self::factor_gram`]).
    pub fn new(
        kernel: KernelConfig,
        anchors: Vec<Vec<f64>>,
        mean_z: DVector<f64>,
        cov_z: DMatrix<f64>,
        gram: Option<(Cholesky<f64, Dyn>, f64)>,
    ) -> Result<Self> {
        let n = anchors.len();
        check_len(n, mean_z.len())?;
        check_len(n, cov_z.nrows())?;
        for a in &anchors {
            check_len(kernel.dim(), a.len())?;
        }
        let (chol, jitter) = match gram {
            Some(g) => g,
            None => Self::factor_gram(&kernel, &anchors)?,
        };
        let alpha = chol.solve(&mean_z);
        let cov_z = (&cov_z + cov_z.transpose()) * 0.5;
        let cov_factor = psd_factor(&cov_z);
        let var_proj = chol.solve(&cov_factor).transpose();
        Ok(Self { kernel, anchors, chol, jitter, alpha, mean_z, cov_z, cov_factor, var_proj, offset: 0.0, scale: 1.0 })
    }

    /// The GP prior itself (no anchors).
    pub fn prior(kernel: KernelConfig) -> Self {
        let empty = DMatrix::<f64>::zeros(0, 0);
        Self {
            kernel,
            anchors: Vec::new(),
            chol: Cholesky::new(empty.clone()).expect("empty matrix factorizes"),
            jitter: 0.0,
            alpha: DVector::zeros(0),
            mean_z: DVector::zeros(0),
            cov_z: empty.clone(),
            cov_factor: empty.clone(),
            var_proj: empty,
            offset: 0.0,
            scale: 1.0,
        }
    }

    /// Report outputs as `offset + scale * f`.
    pub fn with_output_transform(mut self, offset: f64, scale: f64) -> Self {
        self.offset = offset;
        self.scale = scale;
        self
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn mean_at_anchors(&self) -> &DVector<f64> {
        &self.mean_z
    }

    pub fn cov_at_anchors(&self) -> &DMatrix<f64> {
        &self.cov_z
    }

    /// Smallest relative diagonal jitter (from `0, 1e-12, ..., 1e-8`) under
    /// which the anchor covariance admits a Cholesky factorization, or
    /// `None` if even `1e-8` fails.
    pub fn covariance_psd_jitter(&self) -> Option<f64> {
        let n = self.cov_z.nrows();
        let scale = (0..n).map(|i| self.cov_z[(i, i)]).fold(0.0, f64::max).max(1e-300);
        [0.0, 1e-12, 1e-10, 1e-8].into_iter().find(|j| {
            let mut m = self.cov_z.clone();
            for i in 0..n {
                m[(i, i)] += j * scale;
            }
            Cholesky::new(m).is_some()
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn output_transform(&self) -> (f64, f64) {
        (self.offset, self.scale)
    }

    fn coincides(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= COORD_TOL)
    }

    /// Cross-covariance to the anchors, including the nugget on coincidence.
    pub(crate) fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.anchors.len(),
            self.anchors.iter().map(|z| {
                let k = self.kernel.eval(x, z);
                if Self::coincides(x, z) {
                    k + self.jitter
                } else {
                    k
                }
            }),
        )
    }

    fn self_cov(&self, x: &[f64]) -> f64 {
        let nugget = if self.anchors.iter().any(|z| Self::coincides(x, z)) { self.jitter } else { 0.0 };
        self.kernel.signal_variance + nugget
    }

    /// Posterior mean of the latent function in model units (before the
    /// output transform).
    pub fn latent_mean(&self, x: &[f64]) -> f64 {
        if self.anchors.is_empty() {
            return 0.0;
        }
        self.cross(x).dot(&self.alpha)
    }

    /// Posterior mean in output units.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.offset + self.scale * self.latent_mean(x)
    }

    /// Posterior mean and variance in output units.
    pub fn mean_var(&self, x: &[f64]) -> (f64, f64) {
        let kss = self.self_cov(x);
        if self.anchors.is_empty() {
            return (self.offset, self.scale * self.scale * kss);
        }
        let k = self.cross(x);
        let mu = k.dot(&self.alpha);
        let a = self.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let c = &self.var_proj * &k;
        let var = (kss - a.norm_squared() + c.norm_squared()).max(0.0);
        (self.offset + self.scale * mu, self.scale * self.scale * var)
    }

    /// Joint posterior mean vector and covariance matrix at `xs`, in output
    /// units.
    pub fn joint(&self, xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let p = xs.len();
        let mut kxx = DMatrix::zeros(p, p);
        for i in 0..p {
            kxx[(i, i)] = self.self_cov(&xs[i]);
            for j in 0..i {
                let v = self.kernel.eval(&xs[i], &xs[j]);
                kxx[(i, j)] = v;
                kxx[(j, i)] = v;
            }
        }
        let s2 = self.scale * self.scale;
        if self.anchors.is_empty() {
            return (DVector::from_element(p, self.offset), kxx * s2);
        }
        let mut kzx = DMatrix::zeros(self.anchors.len(), p);
        for (j, x) in xs.iter().enumerate() {
            kzx.set_column(j, &self.cross(x));
        }
        let mean = kzx.tr_mul(&self.alpha).map(|m| self.offset + self.scale * m);
        let a = self.chol.l_dirty().solve_lower_triangular(&kzx).unwrap_or_else(|| DMatrix::zeros(kzx.nrows(), p));
        let c = &self.var_proj * &kzx;
        let mut cov = kxx - a.tr_mul(&a) + c.tr_mul(&c);
        cov = (&cov + cov.transpose()) * (0.5 * s2);
        (mean, cov)
    }

    /// Draw a pathwise posterior sample with `features` random Fourier
    /// features.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, features: usize) -> FunctionSample {
        let mut s = FunctionSample::prior(&self.kernel, features, rng);
        if !self.anchors.is_empty() {
            let n = self.anchors.len();
            let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let u = &self.mean_z + &self.cov_factor * xi;
            let prior_z = DVector::from_iterator(n, self.anchors.iter().map(|z| s.prior_value(z)));
            let v = self.chol.solve(&(u - prior_z));
            s.condition(self.anchors.clone(), v.as_slice().to_vec(), self.jitter);
        }
        s.with_output_transform(self.offset, self.scale)
    }
}
