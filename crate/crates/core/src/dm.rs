//! Simulated decision-maker.
//!
//! Responses are the per-objective argmax of Gumbel-corrupted objective
//! values. Gumbel-argmax is distributed exactly as the softmax likelihood the
//! surrogate assumes, so the simulator and the model agree on the noise law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::gumbel;
use crate::scalarization::ScalarizationWeights;
use crate::testbed::ObjectiveOracle;
use crate::types::{DesignSpace, Query, Response};

/// Per-objective Gumbel scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub lambda_true: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(lambda_true: Vec<f64>) -> Result<Self> {
        let p = Self { lambda_true };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda_true.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("noise scale must be positive, got {l}")));
        }
        Ok(())
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Evaluate the oracle at every design of the query (`q x m`).
pub fn evaluate_query(query: &Query, f: &dyn ObjectiveOracle) -> Result<Vec<Vec<f64>>> {
    query.designs.iter().map(|x| f.evaluate(x).map(|y| y.values)).collect()
}

/// Noisy winners for objectives `objectives` given true values (`q x m`).
/// Noise is drawn objective by objective, slot by slot.
pub fn respond_to_values<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    objectives: &[usize],
    noise: &NoiseProfile,
    rng: &mut R,
) -> Result<Response> {
    noise.validate()?;
    let q = values.len();
    let mut winners = Vec::with_capacity(objectives.len());
    for &j in objectives {
        let lambda = *noise
            .lambda_true
            .get(j)
            .ok_or(Error::Dimension { expected: j + 1, got: noise.lambda_true.len() })?;
        let noisy: Vec<f64> = values.iter().map(|v| v[j] + gumbel(rng, lambda)).collect();
        winners.push(argmax(noisy.into_iter()) + 1);
    }
    Response::new(winners, q)
}

/// Per-objective noisy preferences for a query.
pub fn respond<R: Rng + ?Sized>(
    query: &Query,
    f: &dyn ObjectiveOracle,
    noise: &NoiseProfile,
    rng: &mut R,
) -> Result<Response> {
    query.validate()?;
    check_len(f.num_objectives(), noise.lambda_true.len())?;
    let values = evaluate_query(query, f)?;
    let all: Vec<usize> = (0..f.num_objectives()).collect();
    respond_to_values(&values, &all, noise, rng)
}

/// Single aggregated winner (1-based): argmax of the scalarized,
/// noise-corrupted objective vectors.
pub fn respond_scalarized_values<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    noise: &NoiseProfile,
    w: &ScalarizationWeights,
    rng: &mut R,
) -> Result<usize> {
    noise.validate()?;
    let m = w.m();
    check_len(m, noise.lambda_true.len())?;
    let mut scores = Vec::with_capacity(values.len());
    let mut noisy = vec![0.0; m];
    for v in values {
        check_len(m, v.len())?;
        for j in 0..m {
            noisy[j] = v[j] + gumbel(rng, noise.lambda_true[j]);
        }
        scores.push(w.apply(&noisy));
    }
    Ok(argmax(scores.into_iter()) + 1)
}

pub fn respond_scalarized<R: Rng + ?Sized>(
    query: &Query,
    f: &dyn ObjectiveOracle,
    noise: &NoiseProfile,
    w: &ScalarizationWeights,
    rng: &mut R,
) -> Result<usize> {
    query.validate()?;
    let values = evaluate_query(query, f)?;
    respond_scalarized_values(&values, noise, w, rng)
}

/// Budget for [`calibrate_noise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub design_samples: usize,
    pub comparisons: usize,
    pub bisection_steps: usize,
    pub lambda_range: (f64, f64),
    pub tolerance: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            design_samples: 100_000,
            comparisons: 10_000,
            bisection_steps: 40,
            lambda_range: (1e-4, 1e3),
            tolerance: 0.01,
        }
    }
}

/// Top `top_fraction` of objective `j` over `n` uniform designs, best first.
pub fn top_values<R: Rng + ?Sized>(
    space: &DesignSpace,
    f: &dyn ObjectiveOracle,
    j: usize,
    top_fraction: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if j >= f.num_objectives() {
        return Err(Error::Index { index: j + 1, max: f.num_objectives() });
    }
    let mut vals = (0..n)
        .map(|_| f.evaluate(&space.sample_uniform(rng)).map(|y| y.values[j]))
        .collect::<Result<Vec<f64>>>()?;
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.truncate(((n as f64 * top_fraction).ceil() as usize).max(2));
    Ok(vals)
}

/// Common random numbers for a batch of pair comparisons: for each pair the
/// value gap (higher minus lower, > 0) and the standard-Gumbel noise
/// difference (lower minus higher). A mistake at scale `lambda` happens iff
/// `gap < lambda * noise_diff`.
#[derive(Debug, Clone)]
pub struct PairSample {
    gaps: Vec<f64>,
    noise_diff: Vec<f64>,
}

impl PairSample {
    /// Draw `count` random pairs with distinct values. Tied pairs are skipped.
    pub fn draw<R: Rng + ?Sized>(values: &[f64], count: usize, rng: &mut R) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::Calibration("need at least two candidate designs".into()));
        }
        let mut gaps = Vec::with_capacity(count);
        let mut noise_diff = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while gaps.len() < count {
            attempts += 1;
            if attempts > 50 * count + 1000 {
                return Err(Error::Calibration("objective is (nearly) constant among the top designs".into()));
            }
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let gap = (values[a] - values[b]).abs();
            if a == b || gap == 0.0 {
                continue;
            }
            gaps.push(gap);
            noise_diff.push(gumbel(rng, 1.0) - gumbel(rng, 1.0));
        }
        Ok(Self { gaps, noise_diff })
    }

    pub fn mistake_rate(&self, lambda: f64) -> f64 {
        let wrong = self.gaps.iter().zip(&self.noise_diff).filter(|(g, d)| **g < lambda * **d).count();
        wrong as f64 / self.gaps.len() as f64
    }

    /// Rao-Blackwellized rate: the exact logistic mistake probability
    /// averaged over the sampled pairs.
    pub fn expected_mistake_rate(&self, lambda: f64) -> f64 {
        self.gaps.iter().map(|g| 1.0 / (1.0 + (g / lambda).exp())).sum::<f64>() / self.gaps.len() as f64
    }
}

/// Choose the Gumbel scale for objective `j` so that pairwise comparisons
/// among the top `top_fraction` designs are wrong at `target_rate`.
pub fn calibrate_noise<R: Rng + ?Sized>(
    space: &DesignSpace,
    f: &dyn ObjectiveOracle,
    j: usize,
    target_rate: f64,
    top_fraction: f64,
    settings: &CalibrationSettings,
    rng: &mut R,
) -> Result<f64> {
    check_targets(target_rate, top_fraction)?;
    let top = top_values(space, f, j, top_fraction, settings.design_samples, rng)?;
    calibrate_on_pool(&top, target_rate, settings, rng)
}

fn check_targets(target_rate: f64, top_fraction: f64) -> Result<()> {
    if !(target_rate > 0.0 && target_rate < 0.5) {
        return Err(Error::Config(format!("target rate must be in (0, 0.5), got {target_rate}")));
    }
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::Config(format!("top fraction must be in (0, 1), got {top_fraction}")));
    }
    Ok(())
}

/// Probability that two designs drawn from `values` tie.
pub fn tied_pair_share(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.chunk_by(|a, b| a == b).map(|g| (g.len() as f64 / n).powi(2)).sum()
}

/// Like [`calibrate_noise`], but when more than half of the pairs in the
/// top pool tie (e.g. a constraint objective that is zero on every
/// feasible design) the pool is doubled until it is informative, up to
/// half of the sampled designs. Returns the scale and the fraction used.
pub fn calibrate_noise_widening<R: Rng + ?Sized>(
    space: &DesignSpace,
    f: &dyn ObjectiveOracle,
    j: usize,
    target_rate: f64,
    top_fraction: f64,
    settings: &CalibrationSettings,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_targets(target_rate, top_fraction)?;
    let mut all = top_values(space, f, j, 1.0, settings.design_samples, rng)?;
    all.truncate(settings.design_samples / 2);
    let mut fraction = top_fraction;
    loop {
        let k = ((settings.design_samples as f64 * fraction).ceil() as usize).max(2).min(all.len());
        let pool = &all[..k];
        if tied_pair_share(pool) <= 0.5 {
            return Ok((calibrate_on_pool(pool, target_rate, settings, rng)?, fraction));
        }
        if k == all.len() {
            return Err(Error::Calibration(format!("objective {j} ties on most of the best half of the designs")));
        }
        fraction *= 2.0;
    }
}

fn calibrate_on_pool<R: Rng + ?Sized>(top: &[f64], target_rate: f64, settings: &CalibrationSettings, rng: &mut R) -> Result<f64> {
    let pairs = PairSample::draw(top, settings.comparisons, rng)?;

    let (mut lo, mut hi) = (settings.lambda_range.0.ln(), settings.lambda_range.1.ln());
    let (rate_lo, rate_hi) = (pairs.expected_mistake_rate(lo.exp()), pairs.expected_mistake_rate(hi.exp()));
    if rate_lo > target_rate + settings.tolerance || rate_hi < target_rate - settings.tolerance {
        return Err(Error::Calibration(format!(
            "target {target_rate} outside reachable range [{rate_lo}, {rate_hi}]"
        )));
    }
    for _ in 0..settings.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if pairs.expected_mistake_rate(mid.exp()) < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = (0.5 * (lo + hi)).exp();
    let achieved = pairs.expected_mistake_rate(lambda);
    if (achieved - target_rate).abs() > settings.tolerance {
        return Err(Error::Calibration(format!("bisection ended at rate {achieved}, target {target_rate}")));
    }
    Ok(lambda)
}

/// Fresh Monte-Carlo estimate of the mistake rate at `lambda`.
pub fn estimate_mistake_rate<R: Rng + ?Sized>(
    space: &DesignSpace,
    f: &dyn ObjectiveOracle,
    j: usize,
    lambda: f64,
    top_fraction: f64,
    settings: &CalibrationSettings,
    rng: &mut R,
) -> Result<f64> {
    let top = top_values(space, f, j, top_fraction, settings.design_samples, rng)?;
    Ok(PairSample::draw(&top, settings.comparisons, rng)?.mistake_rate(lambda))
}
