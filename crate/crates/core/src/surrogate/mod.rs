//! Per-objective surrogate models.
//!
//! Latent objectives get a preference GP fit by Laplace approximation;
//! observable objectives get exact GP regression. Both expose the same
//! Gaussian posterior (mean, covariance, pathwise samples) through
//! [`GpPosterior`].

mod kernel;
mod linalg;
mod optim;
mod posterior;
mod preference;
mod regression;
mod sample;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{KernelConfig, KernelFamily, LENGTHSCALE_BOUNDS};
pub use linalg::{cholesky_jittered, psd_factor};
pub use optim::{nelder_mead, Minimum, NelderMead};
pub use posterior::{GpPosterior, BASE_JITTER};
pub use preference::{
    choice_probabilities, fit_preference, fit_preference_fixed, preference_data, preference_log_evidence,
    preference_log_likelihood, Comparisons, PreferenceModel, PreferenceSnapshot,
};
pub use regression::{fit_regression, fit_regression_fixed, NoiseSetting, RegressionModel};
pub use sample::{FunctionSample, DEFAULT_FEATURES};

use crate::error::Result;
use crate::types::{Design, InteractionDataset};

/// Kernel and likelihood hyperparameters. `noise` is the choice noise scale
/// for preference models and the standardized noise variance for
/// regression models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise: f64,
}

/// Hyperparameter search budget and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Starting points screened (the first is the warm start when given).
    pub restarts: usize,
    /// Local searches run from the best screened starts.
    pub local_searches: usize,
    /// Evaluation budget per local search.
    pub max_evals: usize,
    pub lengthscale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Latent signal variance of preference models.
    pub signal_variance: f64,
    pub max_newton_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            local_searches: 2,
            max_evals: 120,
            lengthscale_bounds: LENGTHSCALE_BOUNDS,
            noise_bounds: (1e-3, 1e2),
            signal_variance: 1.0,
            max_newton_iters: 100,
        }
    }
}

/// A fitted model for one objective.
#[derive(Debug, Clone)]
pub enum ObjectiveModel {
    Preference(PreferenceModel),
    Regression(RegressionModel),
}

impl ObjectiveModel {
    pub fn posterior(&self) -> &GpPosterior {
        match self {
            ObjectiveModel::Preference(m) => m.posterior(),
            ObjectiveModel::Regression(m) => m.posterior(),
        }
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        match self {
            ObjectiveModel::Preference(m) => m.hyperparameters(),
            ObjectiveModel::Regression(m) => m.hyperparameters(),
        }
    }
}

/// Posterior mean of `model` at `x`.
pub fn posterior_mean(model: &ObjectiveModel, x: &Design) -> f64 {
    model.posterior().mean(&x.coords)
}

/// Pathwise posterior sample of `model` with `features` Fourier features.
pub fn sample_function<R: Rng + ?Sized>(model: &ObjectiveModel, rng: &mut R, features: usize) -> FunctionSample {
    model.posterior().sample(rng, features)
}

/// Fit every objective of `dataset`: preference models for latent
/// objectives, regression for observable ones. With `search = false` the
/// `warm` hyperparameters are reused as-is (they must be present).
pub fn fit_objectives<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    opts: &FitOptions,
    noise: NoiseSetting,
    warm: Option<&[Hyperparameters]>,
    search: bool,
    rng: &mut R,
) -> Result<Vec<ObjectiveModel>> {
    (0..dataset.num_objectives)
        .map(|j| {
            let w = warm.and_then(|w| w.get(j));
            let mut child = crate::rng::fork(rng);
            if dataset.latent_position(j).is_some() {
                let model = match (search, w) {
                    (false, Some(h)) => {
                        let (anchors, comps) = preference_data(dataset, j)?;
                        fit_preference_fixed(anchors, &comps, h, opts.max_newton_iters)?
                    }
                    _ => fit_preference(dataset, j, opts, w, &mut child)?,
                };
                Ok(ObjectiveModel::Preference(model))
            } else {
                let obs = dataset.observations.get(&j).map(Vec::as_slice).unwrap_or(&[]);
                let model = match (search, w) {
                    (false, Some(h)) => fit_regression_fixed(obs, h)?,
                    _ => fit_regression(obs, noise, opts, w, &mut child)?,
                };
                Ok(ObjectiveModel::Regression(model))
            }
        })
        .collect()
}
