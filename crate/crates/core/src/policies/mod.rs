//! Query-selection policies and the inner maximizer they share.

mod acquisition;
mod dsts;
mod inner;
mod model;

use serde::{Deserialize, Serialize};

pub use acquisition::{
    posterior_means, qehvi_acquisition, qehvi_next_query, qmc_normals, qparego_acquisition, qparego_next_query,
    ImprovementBase,
};
pub use dsts::{
    dsts_modified_next_query, dsts_next_query, dsts_with_weights, pbo_dts_if_next_query, random_next_query,
    ScalarizedSample,
};
pub use inner::{maximize_sample, InnerOptions, Objective};
pub use model::{GaussianMarginals, GpModels, PolicyModel, PosteriorSampler, SamplePath, TablePath};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scalarization::DEFAULT_RHO;
use crate::surrogate::DEFAULT_FEATURES;
use crate::types::{Design, DesignSpace, Query};

/// Which policy to run, with its own knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum PolicyKind {
    Dsts,
    DstsM {
        delta: f64,
        /// Defaults to the box center, or the first point of a finite space.
        #[serde(default)]
        x_ref: Option<Vec<f64>>,
    },
    Random,
    PboDtsIf,
    Qparego,
    Qehvi,
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Dsts => "dsts",
            PolicyKind::DstsM { .. } => "dsts-m",
            PolicyKind::Random => "random",
            PolicyKind::PboDtsIf => "pbo-dts-if",
            PolicyKind::Qparego => "qparego",
            PolicyKind::Qehvi => "qehvi",
        }
    }

    /// Whether the policy needs fitted surrogates.
    pub fn needs_model(&self) -> bool {
        !matches!(self, PolicyKind::Random)
    }
}

fn default_q() -> usize {
    2
}

fn default_mc() -> usize {
    128
}

fn default_features() -> usize {
    DEFAULT_FEATURES
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub inner_opt: InnerOptions,
    /// Monte Carlo samples for acquisition expectations.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    /// Random Fourier features per posterior sample.
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, q: usize) -> Self {
        Self {
            kind,
            q,
            inner_opt: InnerOptions::default(),
            mc_samples: default_mc(),
            features: default_features(),
            rho: DEFAULT_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Config(format!("q must be at least 2, got {}", self.q)));
        }
        if let PolicyKind::DstsM { delta, .. } = &self.kind {
            if self.q != 2 {
                return Err(Error::Config(format!("dsts-m needs q = 2, got {}", self.q)));
            }
            if !(*delta > 0.0 && *delta < 1.0) {
                return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
            }
        }
        if self.mc_samples == 0 || self.features == 0 {
            return Err(Error::Config("mc_samples and features must be positive".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        self.inner_opt.validate()
    }

    /// The reference design for `dsts-m` in `space`.
    pub fn reference_design(&self, space: &DesignSpace) -> Result<Option<Design>> {
        let PolicyKind::DstsM { x_ref, .. } = &self.kind else {
            return Ok(None);
        };
        let x = match (x_ref, space) {
            (Some(x), _) => Design::new(x.clone()),
            (None, DesignSpace::ContinuousBox { bounds }) => Design::new(bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()),
            (None, DesignSpace::Finite { points }) => points[0].clone(),
        };
        space.check(&x)?;
        Ok(Some(x))
    }
}

/// Propose the next query. `model` is required by every policy except
/// `random`; `shown` lists every design shown so far.
pub fn next_query(
    cfg: &PolicyConfig,
    space: &DesignSpace,
    shown: &[Design],
    model: Option<&dyn PolicyModel>,
    rng: &mut SimRng,
) -> Result<Query> {
    let need = || model.ok_or_else(|| Error::Config(format!("policy {} needs fitted models", cfg.kind.label())));
    let opts = &cfg.inner_opt;
    match &cfg.kind {
        PolicyKind::Random => random_next_query(space, cfg.q, rng),
        PolicyKind::Dsts => dsts_next_query(need()?, space, cfg.q, cfg.rho, opts, rng),
        PolicyKind::DstsM { delta, .. } => {
            let x_ref = cfg.reference_design(space)?.expect("dsts-m has a reference");
            dsts_modified_next_query(need()?, space, cfg.q, *delta, &x_ref, cfg.rho, opts, rng)
        }
        PolicyKind::PboDtsIf => pbo_dts_if_next_query(need()?, space, cfg.q, opts, rng),
        PolicyKind::Qparego => qparego_next_query(need()?, space, shown, cfg.q, cfg.rho, cfg.mc_samples, opts, rng),
        PolicyKind::Qehvi => qehvi_next_query(need()?, space, shown, cfg.q, cfg.mc_samples, opts, rng),
    }
}
