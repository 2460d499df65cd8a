use statrs::distribution::{ContinuousCDF, Normal};

use super::inner::{maximize_sample, InnerOptions};
use super::model::GaussianMarginals;
use crate::error::{Error, Result};
use crate::metrics::hypervolume;
use crate::pareto::{dominates, non_dominated_indices};
use crate::rng::{fork, shifted_halton, SimRng};
use crate::scalarization::{sample_weights, ScalarizationWeights};
use crate::surrogate::psd_factor;
use crate::types::{Design, DesignSpace, Query};

/// `n` quasi-random standard normal vectors of length `dim` (shifted
/// Halton points through the inverse normal CDF). Held fixed while an
/// acquisition is optimized.
pub fn qmc_normals(rng: &mut SimRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    shifted_halton(rng, n, dim)
        .into_iter()
        .map(|u| u.into_iter().map(|t| normal.inverse_cdf(t.clamp(1e-12, 1.0 - 1e-12))).collect())
        .collect()
}

/// Posterior-mean objective vectors of `designs`.
pub fn posterior_means(model: &dyn GaussianMarginals, designs: &[Design]) -> Vec<Vec<f64>> {
    designs
        .iter()
        .map(|x| (0..model.num_objectives()).map(|j| model.mean_var(j, &x.coords).0).collect())
        .collect()
}

/// Monte Carlo `E[{s(f(x); theta) - incumbent}+]` with base samples `base`
/// (`n x m`).
pub fn qparego_acquisition(
    model: &dyn GaussianMarginals,
    weights: &ScalarizationWeights,
    incumbent: f64,
    base: &[Vec<f64>],
    x: &[f64],
) -> f64 {
    let m = model.num_objectives();
    let mv: Vec<(f64, f64)> = (0..m).map(|j| model.mean_var(j, x)).collect();
    let mut y = vec![0.0; m];
    let mut acc = 0.0;
    for z in base {
        for j in 0..m {
            y[j] = mv[j].0 + mv[j].1.max(0.0).sqrt() * z[j];
        }
        acc += (weights.apply(&y) - incumbent).max(0.0);
    }
    acc / base.len() as f64
}

fn check_history(shown: &[Design]) -> Result<()> {
    if shown.is_empty() {
        return Err(Error::Data("acquisition policies need a non-empty history".into()));
    }
    Ok(())
}

/// ParEGO-style batch: each slot draws fresh weights and maximizes the
/// expected scalarized improvement over the best posterior mean among
/// shown designs.
pub fn qparego_next_query(
    model: &dyn GaussianMarginals,
    space: &DesignSpace,
    shown: &[Design],
    q: usize,
    rho: f64,
    mc_samples: usize,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<Query> {
    check_history(shown)?;
    let m = model.num_objectives();
    let means = posterior_means(model, shown);
    let mut designs = Vec::with_capacity(q);
    for slot in 0..q {
        let weights = sample_weights(rng, m, rho)?;
        let incumbent = means.iter().map(|y| weights.apply(y)).fold(f64::NEG_INFINITY, f64::max);
        let base = qmc_normals(rng, mc_samples, m);
        let mut slot_rng = fork(rng);
        let acq = |x: &[f64]| qparego_acquisition(model, &weights, incumbent, &base, x);
        let (x, _) = maximize_sample(&acq, space, opts, &mut slot_rng)
            .map_err(|e| Error::Optimizer(format!("qParEGO slot {}: {e}", slot + 1)))?;
        designs.push(x);
    }
    Query::new(designs)
}

/// Front and reference point for hypervolume improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementBase {
    pub front: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub volume: f64,
}

impl ImprovementBase {
    pub fn new(points: &[Vec<f64>], reference: Vec<f64>) -> Result<Self> {
        let front: Vec<Vec<f64>> = non_dominated_indices(points).into_iter().map(|i| points[i].clone()).collect();
        let volume = hypervolume(&front, &reference)?;
        Ok(Self { front, reference, volume })
    }

    /// Posterior-mean front of `shown` with the coordinate-wise minimum as
    /// reference.
    pub fn from_history(model: &dyn GaussianMarginals, shown: &[Design]) -> Result<Self> {
        check_history(shown)?;
        let means = posterior_means(model, shown);
        let m = model.num_objectives();
        let r: Vec<f64> = (0..m).map(|j| means.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min)).collect();
        Self::new(&means, r)
    }

    /// `HV(front + ys) - HV(front)`.
    pub fn improvement(&self, ys: &[Vec<f64>]) -> Result<f64> {
        let useful: Vec<&Vec<f64>> = ys
            .iter()
            .filter(|y| y.iter().zip(&self.reference).all(|(a, r)| a > r))
            .filter(|y| !self.front.iter().any(|p| p.iter().zip(y.iter()).all(|(a, b)| a >= b)))
            .collect();
        if useful.is_empty() {
            return Ok(0.0);
        }
        let mut pts: Vec<&[f64]> = self
            .front
            .iter()
            .filter(|p| !useful.iter().any(|y| dominates(y, p)))
            .map(|p| p.as_slice())
            .collect();
        pts.extend(useful.iter().map(|y| y.as_slice()));
        Ok((hypervolume(&pts, &self.reference)? - self.volume).max(0.0))
    }
}

/// Monte Carlo expected hypervolume improvement of the joint batch
/// `chosen + [x]`. `base` rows hold `m * p` normals, objective-major, for
/// `p = chosen.len() + 1` points.
pub fn qehvi_acquisition(
    model: &dyn GaussianMarginals,
    base_front: &ImprovementBase,
    chosen: &[Vec<f64>],
    base: &[Vec<f64>],
    x: &[f64],
) -> Result<f64> {
    let m = model.num_objectives();
    let mut pts: Vec<Vec<f64>> = chosen.to_vec();
    pts.push(x.to_vec());
    let p = pts.len();
    let moments: Vec<_> = (0..m)
        .map(|j| {
            let (mu, cov) = model.joint(j, &pts);
            (mu, psd_factor(&cov))
        })
        .collect();
    let mut ys = vec![vec![0.0; m]; p];
    let mut acc = 0.0;
    for z in base {
        for (j, (mu, l)) in moments.iter().enumerate() {
            let zj = &z[j * p..(j + 1) * p];
            for i in 0..p {
                ys[i][j] = mu[i] + (0..l.ncols()).map(|k| l[(i, k)] * zj[k]).sum::<f64>();
            }
        }
        acc += base_front.improvement(&ys)?;
    }
    Ok(acc / base.len() as f64)
}

/// Greedy batch expected hypervolume improvement: each slot maximizes the
/// joint improvement of the slots chosen so far plus the candidate.
pub fn qehvi_next_query(
    model: &dyn GaussianMarginals,
    space: &DesignSpace,
    shown: &[Design],
    q: usize,
    mc_samples: usize,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<Query> {
    let base_front = ImprovementBase::from_history(model, shown)?;
    let m = model.num_objectives();
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(q);
    for slot in 0..q {
        let base = qmc_normals(rng, mc_samples, m * (slot + 1));
        let mut slot_rng = fork(rng);
        let acq = |x: &[f64]| qehvi_acquisition(model, &base_front, &chosen, &base, x).unwrap_or(f64::NEG_INFINITY);
        let (x, _) = maximize_sample(&acq, space, opts, &mut slot_rng)
            .map_err(|e| Error::Optimizer(format!("qEHVI slot {}: {e}", slot + 1)))?;
        chosen.push(x.coords);
    }
    Query::new(chosen.into_iter().map(Design::new).collect())
}
