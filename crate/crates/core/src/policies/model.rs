use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::surrogate::{FunctionSample, GpPosterior, ObjectiveModel};
use crate::types::COORD_TOL;

/// One objective's sampled function.
pub trait SamplePath {
    fn value(&self, x: &[f64]) -> f64;

    /// Value and gradient (`grad` overwritten), or `None` when the path has
    /// no gradient.
    fn value_grad(&self, _x: &[f64], _grad: &mut [f64]) -> Option<f64> {
        None
    }
}

impl SamplePath for FunctionSample {
    fn value(&self, x: &[f64]) -> f64 {
        FunctionSample::value(self, x)
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        Some(FunctionSample::value_grad(self, x, grad))
    }
}

/// A function known only on a finite set of designs. Off-table points
/// evaluate to `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePath {
    pub designs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl SamplePath for TablePath {
    fn value(&self, x: &[f64]) -> f64 {
        self.designs
            .iter()
            .position(|d| d.iter().zip(x).all(|(a, b)| (a - b).abs() <= COORD_TOL))
            .map_or(f64::NEG_INFINITY, |i| self.values[i])
    }
}

/// Joint posterior over all objectives that can be sampled path-wise.
pub trait PosteriorSampler {
    fn num_objectives(&self) -> usize;

    /// One joint draw: a sample path per objective.
    fn draw(&self, rng: &mut SimRng) -> Result<Vec<Box<dyn SamplePath + '_>>>;
}

/// Gaussian posterior marginals per objective (objectives independent).
pub trait GaussianMarginals {
    fn num_objectives(&self) -> usize;

    /// Joint mean and covariance of objective `j` at `xs`.
    fn joint(&self, j: usize, xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>);

    fn mean_var(&self, j: usize, x: &[f64]) -> (f64, f64) {
        let (m, c) = self.joint(j, &[x.to_vec()]);
        (m[0], c[(0, 0)])
    }
}

/// What model-based policies need from a surrogate.
pub trait PolicyModel: PosteriorSampler + GaussianMarginals {}

impl<T: PosteriorSampler + GaussianMarginals> PolicyModel for T {}

/// Independent GP posteriors, one per objective.
#[derive(Debug, Clone)]
pub struct GpModels<'a> {
    posteriors: Vec<&'a GpPosterior>,
    features: usize,
}

impl<'a> GpModels<'a> {
    pub fn new(posteriors: Vec<&'a GpPosterior>, features: usize) -> Result<Self> {
        if posteriors.is_empty() {
            return Err(Error::EmptySet("objective models"));
        }
        Ok(Self { posteriors, features })
    }

    pub fn from_models(models: &'a [ObjectiveModel], features: usize) -> Result<Self> {
        Self::new(models.iter().map(ObjectiveModel::posterior).collect(), features)
    }
}

impl PosteriorSampler for GpModels<'_> {
    fn num_objectives(&self) -> usize {
        self.posteriors.len()
    }

    fn draw(&self, rng: &mut SimRng) -> Result<Vec<Box<dyn SamplePath + '_>>> {
        Ok(self
            .posteriors
            .iter()
            .map(|p| Box::new(p.sample(rng, self.features)) as Box<dyn SamplePath>)
            .collect())
    }
}

impl GaussianMarginals for GpModels<'_> {
    fn num_objectives(&self) -> usize {
        self.posteriors.len()
    }

    fn joint(&self, j: usize, xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        self.posteriors[j].joint(xs)
    }

    fn mean_var(&self, j: usize, x: &[f64]) -> (f64, f64) {
        self.posteriors[j].mean_var(x)
    }
}
