use rand::Rng;

use super::inner::{maximize_sample, InnerOptions, Objective};
use super::model::{PosteriorSampler, SamplePath};
use crate::error::{Error, Result};
use crate::rng::{fork, SimRng};
use crate::scalarization::{sample_weights, ScalarizationWeights};
use crate::types::{Design, DesignSpace, Query};

/// `s(f(x); theta)` for one joint sample `f`.
pub struct ScalarizedSample<'a> {
    pub paths: &'a [Box<dyn SamplePath + 'a>],
    pub weights: &'a ScalarizationWeights,
}

impl Objective for ScalarizedSample<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = self.paths.iter().map(|p| p.value(x)).collect();
        self.weights.apply(&y)
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let m = self.paths.len();
        let d = grad.len();
        let mut y = vec![0.0; m];
        let mut grads = vec![0.0; m * d];
        for (j, p) in self.paths.iter().enumerate() {
            y[j] = p.value_grad(x, &mut grads[j * d..(j + 1) * d])?;
        }
        let mut coeffs = vec![0.0; m];
        let v = self.weights.apply_with_weights(&y, &mut coeffs);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (c, gj) in coeffs.iter().zip(grads.chunks_exact(d)) {
            for (g, v) in grad.iter_mut().zip(gj) {
                *g += c * v;
            }
        }
        Some(v)
    }
}

/// Draw one joint sample and maximize its scalarization.
fn thompson_slot(
    sampler: &dyn PosteriorSampler,
    space: &DesignSpace,
    weights: &ScalarizationWeights,
    opts: &InnerOptions,
    rng: &mut SimRng,
    slot: usize,
) -> Result<Design> {
    let paths = sampler.draw(rng)?;
    let obj = ScalarizedSample { paths: &paths, weights };
    maximize_sample(&obj, space, opts, rng)
        .map(|(x, _)| x)
        .map_err(|e| Error::Optimizer(format!("query slot {}: {e}", slot + 1)))
}

/// Dueling scalarized Thompson sampling. One weight vector per call, then
/// `q` independent joint samples, each maximized on its own stream forked
/// from `rng`. Returns the query and the weights used.
pub fn dsts_with_weights(
    sampler: &dyn PosteriorSampler,
    space: &DesignSpace,
    q: usize,
    rho: f64,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<(Query, ScalarizationWeights)> {
    let weights = sample_weights(rng, sampler.num_objectives(), rho)?;
    let mut designs = Vec::with_capacity(q);
    for i in 0..q {
        let mut slot_rng = fork(rng);
        designs.push(thompson_slot(sampler, space, &weights, opts, &mut slot_rng, i)?);
    }
    Ok((Query::new(designs)?, weights))
}

pub fn dsts_next_query(
    sampler: &dyn PosteriorSampler,
    space: &DesignSpace,
    q: usize,
    rho: f64,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<Query> {
    dsts_with_weights(sampler, space, q, rho, opts, rng).map(|(q, _)| q)
}

/// Coin for the reference slot, drawn from a side stream so the main
/// stream advances exactly as in plain DSTS.
fn reference_coin(rng: &SimRng) -> f64 {
    let mut side = rng.clone();
    side.set_stream(rng.get_stream() ^ 0x5EED_0000_0000_0001);
    side.random::<f64>()
}

/// DSTS with `q = 2` where the second slot is `x_ref` with probability
/// `delta`.
pub fn dsts_modified_next_query(
    sampler: &dyn PosteriorSampler,
    space: &DesignSpace,
    q: usize,
    delta: f64,
    x_ref: &Design,
    rho: f64,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<Query> {
    if q != 2 {
        return Err(Error::Config(format!("modified DSTS is defined for q = 2, got {q}")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
    }
    space.check(x_ref)?;
    let weights = sample_weights(rng, sampler.num_objectives(), rho)?;
    let mut first_rng = fork(rng);
    let first = thompson_slot(sampler, space, &weights, opts, &mut first_rng, 0)?;
    let second = if reference_coin(rng) < delta {
        x_ref.clone()
    } else {
        let mut slot_rng = fork(rng);
        thompson_slot(sampler, space, &weights, opts, &mut slot_rng, 1)?
    };
    Query::new(vec![first, second])
}

/// `q` i.i.d. uniform designs.
pub fn random_next_query(space: &DesignSpace, q: usize, rng: &mut SimRng) -> Result<Query> {
    Query::new((0..q).map(|_| space.sample_uniform(rng)).collect())
}

/// Single-objective dueling Thompson sampling on one model of the
/// scalarized feedback.
pub fn pbo_dts_if_next_query(
    sampler: &dyn PosteriorSampler,
    space: &DesignSpace,
    q: usize,
    opts: &InnerOptions,
    rng: &mut SimRng,
) -> Result<Query> {
    if sampler.num_objectives() != 1 {
        return Err(Error::Config(format!(
            "PBO-DTS-IF works on exactly one model, got {}",
            sampler.num_objectives()
        )));
    }
    dsts_next_query(sampler, space, q, crate::scalarization::DEFAULT_RHO, opts, rng)
}
