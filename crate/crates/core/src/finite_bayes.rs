//! Exact Bayesian inference over a finite set of candidate objective
//! tables, used to check consistency (or its failure) of query policies
//! without surrogate approximation error.
//!
//! Designs and hypotheses are addressed by 0-based index throughout.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dm::{respond_to_values, NoiseProfile};
use crate::error::{check_len, Error, Result};
use crate::pareto::non_dominated_indices;
use crate::policies::{
    dsts_modified_next_query, dsts_next_query, InnerOptions, PosteriorSampler, SamplePath, TablePath,
};
use crate::rng::SimRng;
use crate::scalarization::DEFAULT_RHO;
use crate::surrogate::preference_log_likelihood;
use crate::types::{Design, DesignSpace, Query, Response};

const PROB_TOL: f64 = 1e-12;

/// Candidate objective tables with a prior. `hypotheses[k][i][j]` is
/// objective `j` at design `i` under hypothesis `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpace {
    pub designs: Vec<Design>,
    pub hypotheses: Vec<Vec<Vec<f64>>>,
    pub prior: Vec<f64>,
    /// Choice noise scale per objective.
    pub lambda: Vec<f64>,
}

impl HypothesisSpace {
    pub fn new(designs: Vec<Design>, hypotheses: Vec<Vec<Vec<f64>>>, prior: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        let s = Self { designs, hypotheses, prior, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        DesignSpace::finite(self.designs.clone())?;
        if self.hypotheses.is_empty() {
            return Err(Error::EmptySet("hypotheses"));
        }
        check_len(self.hypotheses.len(), self.prior.len())?;
        let m = self.lambda.len();
        if m == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        for table in &self.hypotheses {
            check_len(self.designs.len(), table.len())?;
            for row in table {
                check_len(m, row.len())?;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("hypothesis values must be finite".into()));
                }
            }
        }
        NoiseProfile::new(self.lambda.clone())?;
        if self.prior.iter().any(|p| !(*p >= 0.0)) || (self.prior.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(Error::Config(format!("prior must be a probability vector, got {:?}", self.prior)));
        }
        Ok(())
    }

    pub fn num_objectives(&self) -> usize {
        self.lambda.len()
    }

    pub fn space(&self) -> DesignSpace {
        DesignSpace::Finite { points: self.designs.clone() }
    }

    pub fn design_index(&self, x: &Design) -> Result<usize> {
        self.designs
            .iter()
            .position(|d| d.same_as(x))
            .ok_or_else(|| Error::Domain(format!("{:?} is not a design of this space", x.coords)))
    }

    /// Pareto-optimal design indices under hypothesis `k` (the argmax set
    /// when there is one objective).
    pub fn optimal_set(&self, k: usize) -> Vec<usize> {
        non_dominated_indices(&self.hypotheses[k])
    }

    /// Values of query `designs` under hypothesis `k`, `q x m`.
    fn query_values(&self, k: usize, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.hypotheses[k][i].clone()).collect()
    }
}

/// A probability vector over hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub p: Vec<f64>,
}

impl PosteriorState {
    pub fn prior(space: &HypothesisSpace) -> Self {
        Self { p: space.prior.clone() }
    }

    /// Posterior probability that each design is optimal.
    pub fn optimality(&self, space: &HypothesisSpace) -> Vec<f64> {
        let mut out = vec![0.0; space.designs.len()];
        for (k, pk) in self.p.iter().enumerate() {
            for i in space.optimal_set(k) {
                out[i] += pk;
            }
        }
        out
    }
}

/// Bayes' rule over the finite support with the softmax choice likelihood,
/// computed in log space.
pub fn exact_posterior_update(
    state: &PosteriorState,
    query: &Query,
    response: &Response,
    space: &HypothesisSpace,
) -> Result<PosteriorState> {
    check_len(space.hypotheses.len(), state.p.len())?;
    check_len(space.num_objectives(), response.winners.len())?;
    let idx: Vec<usize> = query.designs.iter().map(|x| space.design_index(x)).collect::<Result<_>>()?;
    let mut logp = Vec::with_capacity(state.p.len());
    for (k, pk) in state.p.iter().enumerate() {
        if *pk <= 0.0 {
            logp.push(f64::NEG_INFINITY);
            continue;
        }
        let values = space.query_values(k, &idx);
        let mut l = pk.ln();
        for (j, &w) in response.winners.iter().enumerate() {
            let col: Vec<f64> = values.iter().map(|row| row[j]).collect();
            l += preference_log_likelihood(&col, w, space.lambda[j])?;
        }
        logp.push(l);
    }
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InconsistentEvidence);
    }
    let mut p: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(PosteriorState { p })
}

/// Thompson draws from a discrete posterior: pick a hypothesis with
/// probability `p_k` and return its tables.
pub struct DiscretePosterior<'a> {
    pub space: &'a HypothesisSpace,
    pub state: &'a PosteriorState,
}

impl DiscretePosterior<'_> {
    pub fn draw_index(&self, rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.state.p.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // Rounding left `u` above the cumulative total: last supported index.
        self.state.p.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

impl PosteriorSampler for DiscretePosterior<'_> {
    fn num_objectives(&self) -> usize {
        self.space.num_objectives()
    }

    fn draw(&self, rng: &mut SimRng) -> Result<Vec<Box<dyn SamplePath + '_>>> {
        let k = self.draw_index(rng);
        let coords: Vec<Vec<f64>> = self.space.designs.iter().map(|d| d.coords.clone()).collect();
        Ok((0..self.num_objectives())
            .map(|j| {
                let values = self.space.hypotheses[k].iter().map(|row| row[j]).collect();
                Box::new(TablePath { designs: coords.clone(), values }) as Box<dyn SamplePath>
            })
            .collect())
    }
}

/// The four-design, four-hypothesis single-objective instance on which
/// batch expected improvement never learns whether design 2 (index 1) is
/// optimal. `s` in `(0, 1/3)`; hypotheses 3 and 4 (indices 2, 3) carry
/// prior mass `t = 1 - s`.
pub fn counterexample_instance(s: f64, lambda: f64) -> Result<HypothesisSpace> {
    if !(s > 0.0 && s < 1.0 / 3.0) {
        return Err(Error::Config(format!("s must lie in (0, 1/3), got {s}")));
    }
    let t = 1.0 - s;
    let table = |f3: f64, f4: f64| vec![vec![-1.0], vec![0.0], vec![f3], vec![f4]];
    HypothesisSpace::new(
        (1..=4).map(|i| Design::new(vec![i as f64])).collect(),
        vec![table(1.0, 0.5), table(0.5, 1.0), table(-0.5, -1.0), table(-1.0, -0.5)],
        vec![s / 2.0, s / 2.0, t / 2.0, t / 2.0],
        vec![lambda],
    )
}

/// Exact `E[{max_i f(x_i) - mu*}+]` for every unordered pair (with
/// repetition) of designs, where `mu*` is the largest posterior mean among
/// `shown` design indices. Single objective only.
pub fn qei_discrete_acquisition(
    state: &PosteriorState,
    space: &HypothesisSpace,
    shown: &[usize],
) -> Result<Vec<((usize, usize), f64)>> {
    if space.num_objectives() != 1 {
        return Err(Error::Unsupported("discrete qEI is single-objective".into()));
    }
    if shown.is_empty() {
        return Err(Error::Data("qEI needs at least one shown design".into()));
    }
    let n = space.designs.len();
    let mean = |i: usize| -> f64 { state.p.iter().zip(&space.hypotheses).map(|(p, h)| p * h[i][0]).sum() };
    let mut mu_star = f64::NEG_INFINITY;
    for &i in shown {
        if i >= n {
            return Err(Error::Index { index: i, max: n - 1 });
        }
        mu_star = mu_star.max(mean(i));
    }
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            let v = state
                .p
                .iter()
                .zip(&space.hypotheses)
                .map(|(p, h)| p * (h[a][0].max(h[b][0]) - mu_star).max(0.0))
                .sum();
            out.push(((a, b), v));
        }
    }
    Ok(out)
}

/// The first pair with the largest acquisition value.
pub fn qei_argmax(values: &[((usize, usize), f64)]) -> (usize, usize) {
    let mut best = values[0];
    for v in values {
        if v.1 > best.1 {
            best = *v;
        }
    }
    best.0
}

/// One step of the counterexample run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleStep {
    pub iter: usize,
    pub p: Vec<f64>,
    /// Posterior mass on hypotheses 3 and 4, i.e. the probability that
    /// design 2 is optimal.
    pub mass_34: f64,
    /// Whether designs 3 and 4 (indices 2, 3) attain the largest discrete
    /// qEI value at this posterior.
    pub qei_selects_34: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleTrace {
    pub s: f64,
    pub lambda: f64,
    pub truth: usize,
    pub steps: Vec<CounterexampleStep>,
}

impl CounterexampleTrace {
    /// JSON lines `{iter, p, mass_34, query}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn selects_34(values: &[((usize, usize), f64)]) -> bool {
    let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    values.iter().any(|(k, v)| *k == (2, 3) && *v >= best)
}

/// Run `n` rounds on [`counterexample_instance`]: draw the truth from the prior,
/// treat designs 1 and 2 as already shown, then query designs 3 and 4 every
/// round and update exactly. Each step records whether that pair maximizes
/// discrete qEI. Step 0 is the prior.
pub fn run_counterexample(s: f64, lambda: f64, n: usize, rng: &mut SimRng) -> Result<CounterexampleTrace> {
    let space = counterexample_instance(s, lambda)?;
    let mut state = PosteriorState::prior(&space);
    let truth = DiscretePosterior { space: &space, state: &state }.draw_index(rng);
    let noise = NoiseProfile::new(vec![lambda])?;
    let mut shown = vec![0usize, 1];
    let mut steps = Vec::with_capacity(n + 1);
    let mass = |p: &[f64]| p[2] + p[3];
    let idx = [2, 3];
    let mut qei = selects_34(&qei_discrete_acquisition(&state, &space, &shown)?);
    steps.push(CounterexampleStep { iter: 0, p: state.p.clone(), mass_34: mass(&state.p), qei_selects_34: qei });
    for iter in 1..=n {
        let q = Query::new(idx.iter().map(|&i| space.designs[i].clone()).collect())?;
        let values = space.query_values(truth, &idx);
        let r = respond_to_values(&values, &[0], &noise, rng)?;
        state = exact_posterior_update(&state, &q, &r, &space)?;
        for i in idx {
            if !shown.contains(&i) {
                shown.push(i);
            }
        }
        qei = selects_34(&qei_discrete_acquisition(&state, &space, &shown)?);
        steps.push(CounterexampleStep { iter, p: state.p.clone(), mass_34: mass(&state.p), qei_selects_34: qei });
    }
    Ok(CounterexampleTrace { s, lambda, truth, steps })
}

/// Summary of counterexample runs over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub s: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// Largest `|mass_34 - (1 - s)|` over all steps and seeds.
    pub max_mass_deviation: f64,
    /// Largest `|p_2 / p_4 - s / t|` and `|p_1 / p_3 - s / t|`.
    pub max_ratio_deviation: f64,
    /// Whether designs (3, 4) maximized qEI at every step of every seed.
    pub always_queries_34: bool,
}

pub fn counterexample_report(s: f64, lambda: f64, n: usize, seeds: &[u64]) -> Result<CounterexampleReport> {
    let t = 1.0 - s;
    let mut dev: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut always = true;
    for &seed in seeds {
        let trace = run_counterexample(s, lambda, n, &mut crate::rng::rng_from_seed(seed))?;
        for st in &trace.steps {
            dev = dev.max((st.mass_34 - t).abs());
            ratio = ratio.max((st.p[0] / st.p[2] - s / t).abs()).max((st.p[1] / st.p[3] - s / t).abs());
            always &= st.qei_selects_34;
        }
    }
    Ok(CounterexampleReport {
        s,
        lambda,
        iterations: n,
        seeds: seeds.to_vec(),
        max_mass_deviation: dev,
        max_ratio_deviation: ratio,
        always_queries_34: always,
    })
}

/// Query rule for [`consistency_experiment`]: plain (scalarized) dueling
/// Thompson sampling, or the variant that shows `x_ref` (a design index)
/// in the second slot with probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ConsistencyPolicy {
    Dts,
    DstsM { delta: f64, x_ref: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTrace {
    pub truth: usize,
    /// Designs optimal under the truth.
    pub optimal: Vec<usize>,
    /// Row `n`: posterior probability that each design is optimal after
    /// `n` interactions.
    pub optimality: Vec<Vec<f64>>,
    pub posterior: PosteriorState,
}

impl ConsistencyTrace {
    /// Whether the final probabilities exceed `hi` on every truly optimal
    /// design and fall below `lo` on every other design.
    pub fn separated(&self, hi: f64, lo: f64) -> bool {
        let last = self.optimality.last().expect("trace has the prior row");
        last.iter()
            .enumerate()
            .all(|(i, p)| if self.optimal.contains(&i) { *p > hi } else { *p < lo })
    }
}

/// Simulate `n` pairwise interactions under hypothesis `truth` with exact
/// posterior Thompson sampling and record optimality probabilities.
pub fn consistency_experiment(
    space: &HypothesisSpace,
    policy: ConsistencyPolicy,
    truth: usize,
    n: usize,
    rng: &mut SimRng,
) -> Result<ConsistencyTrace> {
    if truth >= space.hypotheses.len() {
        return Err(Error::Index { index: truth, max: space.hypotheses.len() - 1 });
    }
    let finite = space.space();
    let noise = NoiseProfile::new(space.lambda.clone())?;
    let objectives: Vec<usize> = (0..space.num_objectives()).collect();
    let opts = InnerOptions::default();
    let mut state = PosteriorState::prior(space);
    let mut optimality = Vec::with_capacity(n + 1);
    optimality.push(state.optimality(space));
    for _ in 0..n {
        let post = DiscretePosterior { space, state: &state };
        let query = match policy {
            ConsistencyPolicy::Dts => dsts_next_query(&post, &finite, 2, DEFAULT_RHO, &opts, rng)?,
            ConsistencyPolicy::DstsM { delta, x_ref } => {
                let x = space.designs.get(x_ref).ok_or(Error::Index { index: x_ref, max: space.designs.len() - 1 })?;
                dsts_modified_next_query(&post, &finite, 2, delta, x, DEFAULT_RHO, &opts, rng)?
            }
        };
        let idx: Vec<usize> = query.designs.iter().map(|x| space.design_index(x)).collect::<Result<_>>()?;
        let r = respond_to_values(&space.query_values(truth, &idx), &objectives, &noise, rng)?;
        state = exact_posterior_update(&state, &query, &r, space)?;
        optimality.push(state.optimality(space));
    }
    Ok(ConsistencyTrace { truth, optimal: space.optimal_set(truth), optimality, posterior: state })
}

/// Eight designs, six hypotheses, two objectives. Hypothesis 0 has Pareto
/// set `{0, 1, 2, 3}`; each alternative moves one or two designs so that
/// the Pareto set changes.
pub fn consistency_instance_m2(lambda: f64) -> Result<HypothesisSpace> {
    let truth = vec![
        vec![1.0, 0.0],
        vec![0.8, 0.5],
        vec![0.5, 0.8],
        vec![0.0, 1.0],
        vec![0.4, 0.4],
        vec![0.3, 0.6],
        vec![0.6, 0.2],
        vec![0.2, 0.2],
    ];
    let alt = |changes: &[(usize, [f64; 2])]| {
        let mut t = truth.clone();
        for (i, v) in changes {
            t[*i] = v.to_vec();
        }
        t
    };
    let hypotheses = vec![
        truth.clone(),
        alt(&[(4, [0.9, 0.9])]),
        alt(&[(1, [0.3, 0.3])]),
        alt(&[(5, [0.55, 0.85])]),
        alt(&[(0, [0.7, -0.1])]),
        alt(&[(3, [0.2, 0.2]), (7, [0.0, 1.0])]),
    ];
    HypothesisSpace::new(
        (0..8).map(|i| Design::new(vec![i as f64])).collect(),
        hypotheses,
        vec![1.0 / 6.0; 6],
        vec![lambda, lambda],
    )
}

/// Five designs, four single-objective hypotheses with distinct argmaxes;
/// hypothesis 0 peaks at design 2.
pub fn consistency_instance_m1(lambda: f64) -> Result<HypothesisSpace> {
    let col = |v: [f64; 5]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
    HypothesisSpace::new(
        (0..5).map(|i| Design::new(vec![i as f64])).collect(),
        vec![
            col([0.2, 0.5, 0.9, 0.7, 0.1]),
            col([0.2, 0.5, 0.6, 0.8, 0.1]),
            col([0.3, 0.95, 0.9, 0.7, 0.1]),
            col([0.2, 0.5, 0.9, 0.7, 1.0]),
        ],
        vec![0.25; 4],
        vec![lambda],
    )
}
