use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::{KernelConfig, KernelFamily};
use crate::types::COORD_TOL;

pub const DEFAULT_FEATURES: usize = 1000;

/// One posterior function draw, evaluable and differentiable anywhere.
///
/// The prior part is a random Fourier feature expansion with paired cosine
/// and sine features (`2F` weights); the correction term is a kernel
/// expansion over the anchors that conditions the draw on one sample of the
/// anchor posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSample {
    pub kernel: KernelConfig,
    /// `F x d`, row-major.
    pub rff_frequencies: Vec<f64>,
    /// Cosine weights followed by sine weights.
    pub rff_weights: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
    pub pathwise_correction: Vec<f64>,
    pub nugget: f64,
    pub offset: f64,
    pub scale: f64,
}

impl FunctionSample {
    /// A prior draw.
    pub fn prior<R: Rng + ?Sized>(kernel: &KernelConfig, features: usize, rng: &mut R) -> Self {
        let d = kernel.dim();
        let features = features.max(1);
        let mut freq = Vec::with_capacity(features * d);
        match kernel.family {
            KernelFamily::Matern52 => {
                // Spectral density of Matern-5/2: multivariate t, 5 dof.
                let chi = ChiSquared::<f64>::new(5.0).expect("valid dof");
                for _ in 0..features {
                    let c: f64 = (5.0 / chi.sample(rng) as f64).sqrt();
                    for l in &kernel.lengthscales {
                        let z: f64 = StandardNormal.sample(rng);
                        freq.push(z * c / l);
                    }
                }
            }
        }
        let weights = (0..2 * features).map(|_| StandardNormal.sample(rng)).collect();
        Self {
            kernel: kernel.clone(),
            rff_frequencies: freq,
            rff_weights: weights,
            anchors: Vec::new(),
            pathwise_correction: Vec::new(),
            nugget: 0.0,
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub(crate) fn condition(&mut self, anchors: Vec<Vec<f64>>, correction: Vec<f64>, nugget: f64) {
        self.anchors = anchors;
        self.pathwise_correction = correction;
        self.nugget = nugget;
    }

    pub(crate) fn with_output_transform(mut self, offset: f64, scale: f64) -> Self {
        self.offset = offset;
        self.scale = scale;
        self
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn features(&self) -> usize {
        self.rff_weights.len() / 2
    }

    fn amplitude(&self) -> f64 {
        (self.kernel.signal_variance / self.features() as f64).sqrt()
    }

    /// The prior RFF part alone, in latent units.
    pub fn prior_value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let f = self.features();
        let (wc, ws) = self.rff_weights.split_at(f);
        let mut acc = 0.0;
        for (i, w) in self.rff_frequencies.chunks_exact(d).enumerate() {
            let t: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let (s, c) = t.sin_cos();
            acc += wc[i] * c + ws[i] * s;
        }
        self.amplitude() * acc
    }

    /// Value at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.prior_value(x);
        for (z, c) in self.anchors.iter().zip(&self.pathwise_correction) {
            let mut k = self.kernel.eval(x, z);
            if x.iter().zip(z).all(|(a, b)| (a - b).abs() <= COORD_TOL) {
                k += self.nugget;
            }
            v += c * k;
        }
        self.offset + self.scale * v
    }

    /// Value and gradient at `x`; `grad` is overwritten.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let f = self.features();
        let (wc, ws) = self.rff_weights.split_at(f);
        let amp = self.amplitude();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for (i, w) in self.rff_frequencies.chunks_exact(d).enumerate() {
            let t: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let (s, c) = t.sin_cos();
            acc += wc[i] * c + ws[i] * s;
            let dt = ws[i] * c - wc[i] * s;
            for (g, wj) in grad.iter_mut().zip(w) {
                *g += dt * wj;
            }
        }
        let mut v = amp * acc;
        grad.iter_mut().for_each(|g| *g *= amp);
        for (z, c) in self.anchors.iter().zip(&self.pathwise_correction) {
            let mut k = self.kernel.eval_grad(x, z, *c, grad);
            if x.iter().zip(z).all(|(a, b)| (a - b).abs() <= COORD_TOL) {
                k += self.nugget;
            }
            v += c * k;
        }
        grad.iter_mut().for_each(|g| *g *= self.scale);
        self.offset + self.scale * v
    }
}
