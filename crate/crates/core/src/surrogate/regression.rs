//! Exact GP regression for objectives measured directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelConfig;
use super::linalg::{cholesky_jittered, log_det};
use super::optim::{nelder_mead, NelderMead};
use super::posterior::GpPosterior;
use super::preference::anchor_index;
use super::{FitOptions, Hyperparameters};
use crate::error::{Error, Result};
use crate::types::Observation;

/// How the Gaussian measurement noise variance is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    /// Fixed variance in standardized output units.
    Fixed(f64),
    /// Fitted within bounds, in standardized output units.
    Fit { lo: f64, hi: f64 },
}

impl Default for NoiseSetting {
    fn default() -> Self {
        NoiseSetting::Fit { lo: 1e-6, hi: 1.0 }
    }
}

/// Fitted regression model. Outputs are standardized internally; the
/// posterior reports values in the original units.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub kernel: KernelConfig,
    /// Noise variance in standardized units.
    pub gaussian_noise_variance: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    pub observations: Vec<Observation>,
    pub log_marginal_likelihood: f64,
    posterior: GpPosterior,
}

impl RegressionModel {
    pub fn posterior(&self) -> &GpPosterior {
        &self.posterior
    }

    /// Noise variance in original units.
    pub fn noise_variance_original(&self) -> f64 {
        self.gaussian_noise_variance * self.y_scale * self.y_scale
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            lengthscales: self.kernel.lengthscales.clone(),
            signal_variance: self.kernel.signal_variance,
            noise: self.gaussian_noise_variance,
        }
    }
}

struct Prepared {
    xs: Vec<Vec<f64>>,
    y: DVector<f64>,
    mean: f64,
    scale: f64,
}

fn prepare(obs: &[Observation]) -> Result<Prepared> {
    if obs.len() < 2 {
        return Err(Error::Data(format!("regression needs at least 2 observations, got {}", obs.len())));
    }
    let n = obs.len() as f64;
    let mean = obs.iter().map(|o| o.value).sum::<f64>() / n;
    let var = obs.iter().map(|o| (o.value - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    Ok(Prepared {
        xs: obs.iter().map(|o| o.design.coords.clone()).collect(),
        y: DVector::from_iterator(obs.len(), obs.iter().map(|o| (o.value - mean) / scale)),
        mean,
        scale,
    })
}

fn noisy_gram(kernel: &KernelConfig, xs: &[Vec<f64>], noise: f64) -> DMatrix<f64> {
    let mut k = kernel.gram(xs);
    for i in 0..k.nrows() {
        k[(i, i)] += noise;
    }
    k
}

fn log_evidence(kernel: &KernelConfig, p: &Prepared, noise: f64) -> Result<f64> {
    let (c, _) = cholesky_jittered(&noisy_gram(kernel, &p.xs, noise), 0.0)?;
    let beta = c.solve(&p.y);
    let n = p.y.len() as f64;
    Ok(-0.5 * p.y.dot(&beta) - 0.5 * log_det(&c) - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Exact posterior at fixed hyperparameters (`hyper.noise` is the
/// standardized noise variance).
pub fn fit_regression_fixed(observations: &[Observation], hyper: &Hyperparameters) -> Result<RegressionModel> {
    let p = prepare(observations)?;
    let kernel = KernelConfig::matern52(hyper.lengthscales.clone(), hyper.signal_variance)?;
    let noise = hyper.noise;
    let (ca, _) = cholesky_jittered(&noisy_gram(&kernel, &p.xs, noise), 0.0)?;
    let beta = ca.solve(&p.y);
    let n = p.y.len() as f64;
    let lml = -0.5 * p.y.dot(&beta) - 0.5 * log_det(&ca) - 0.5 * n * (2.0 * std::f64::consts::PI).ln();

    // Anchors are the distinct inputs; repeated measurements share one.
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    let map: Vec<usize> = observations.iter().map(|o| anchor_index(&mut anchors, &o.design)).collect();
    let kzz = kernel.gram(&anchors);
    let mut kxz = DMatrix::zeros(p.xs.len(), anchors.len());
    for (r, &a) in map.iter().enumerate() {
        kxz.set_row(r, &kzz.row(a));
    }
    let mean_z = kxz.tr_mul(&beta);
    let v = ca
        .l_dirty()
        .solve_lower_triangular(&kxz)
        .ok_or_else(|| Error::Fit("singular regression system".into()))?;
    let cov_z = &kzz - v.tr_mul(&v);
    let posterior = GpPosterior::new(kernel.clone(), anchors, mean_z, cov_z, None)?.with_output_transform(p.mean, p.scale);
    Ok(RegressionModel {
        kernel,
        gaussian_noise_variance: noise,
        y_mean: p.mean,
        y_scale: p.scale,
        observations: observations.to_vec(),
        log_marginal_likelihood: lml,
        posterior,
    })
}

/// Fit a regression model with lengthscales, signal variance and (unless
/// fixed) the noise variance chosen by maximizing the marginal likelihood.
pub fn fit_regression<R: Rng + ?Sized>(
    observations: &[Observation],
    noise: NoiseSetting,
    opts: &FitOptions,
    warm: Option<&Hyperparameters>,
    rng: &mut R,
) -> Result<RegressionModel> {
    let p = prepare(observations)?;
    let d = p.xs[0].len();
    let (llo, lhi) = opts.lengthscale_bounds;
    let (slo, shi) = (1e-2f64, 1e2f64);
    let mut bounds: Vec<(f64, f64)> = std::iter::repeat((llo.ln(), lhi.ln())).take(d).chain([(slo.ln(), shi.ln())]).collect();
    let fixed = match noise {
        NoiseSetting::Fixed(v) => {
            if !(v > 0.0) {
                return Err(Error::Config(format!("noise variance must be positive, got {v}")));
            }
            Some(v)
        }
        NoiseSetting::Fit { lo, hi } => {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::Config(format!("bad noise bounds ({lo}, {hi})")));
            }
            bounds.push((lo.ln(), hi.ln()));
            None
        }
    };
    let unpack = |v: &[f64]| -> Hyperparameters {
        Hyperparameters {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_variance: v[d].exp(),
            noise: fixed.unwrap_or_else(|| v[d + 1].exp()),
        }
    };
    let pack = |h: &Hyperparameters| -> Vec<f64> {
        let mut v: Vec<f64> = h.lengthscales.iter().map(|x| x.ln()).collect();
        v.push(h.signal_variance.ln());
        if fixed.is_none() {
            v.push(h.noise.ln());
        }
        v
    };

    let mut starts = Vec::new();
    match warm {
        Some(h) if h.lengthscales.len() == d => starts.push(pack(h)),
        _ => starts.push(pack(&Hyperparameters { lengthscales: vec![0.3; d], signal_variance: 1.0, noise: 1e-2 })),
    }
    while starts.len() < opts.restarts.max(1) {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05f64.ln()..2.0f64.ln())).collect();
        v.push(rng.random_range(0.3f64.ln()..3.0f64.ln()));
        if fixed.is_none() {
            v.push(rng.random_range(1e-4f64.ln()..1e-1f64.ln()));
        }
        starts.push(v);
    }
    for s in &mut starts {
        for (x, (lo, hi)) in s.iter_mut().zip(&bounds) {
            *x = x.clamp(*lo, *hi);
        }
    }
    let objective = |v: &[f64]| -> f64 {
        let h = unpack(v);
        match KernelConfig::matern52(h.lengthscales, h.signal_variance) {
            Ok(k) => log_evidence(&k, &p, h.noise).map(|e| -e).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let mut screened: Vec<(Vec<f64>, f64)> = starts.into_iter().map(|s| {
        let v = objective(&s);
        (s, v)
    }).collect();
    screened.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best = screened[0].clone();
    let nm = NelderMead { max_evals: opts.max_evals, step: 0.4, ftol: 1e-7, xtol: 1e-3 };
    for (s, _) in screened.iter().take(opts.local_searches.max(1)) {
        let m = nelder_mead(objective, s, &bounds, nm);
        if m.value < best.1 {
            best = (m.x, m.value);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Fit("regression marginal likelihood is not finite anywhere tried".into()));
    }
    fit_regression_fixed(observations, &unpack(&best.0))
}
