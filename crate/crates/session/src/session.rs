use dsts_core::pareto::non_dominated_indices;
use dsts_core::policies::{next_query, random_next_query, GpModels, PolicyConfig, PolicyKind};
use dsts_core::rng::{child_rng, SimRng};
use dsts_core::surrogate::{fit_objectives, FitOptions, NoiseSetting, ObjectiveModel};
use dsts_core::{Design, DesignSpace, Error, InteractionDataset, Query, Response};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

const INIT_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1 << 32;
const POLICY_STREAM: u64 = 2 << 32;

fn default_q() -> usize {
    2
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub design_labels: Vec<String>,
    /// Per-coordinate bounds; the unit box when absent.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    pub objective_labels: Vec<String>,
    #[serde(default = "default_q")]
    pub q: usize,
    /// Defaults to DSTS. Its `q` is replaced by the session's.
    #[serde(default)]
    pub policy: Option<PolicyConfig>,
    /// Defaults to `2 (d + 1)` random queries.
    #[serde(default)]
    pub n_init_queries: Option<usize>,
    /// Drawn at creation when absent, then stored with the session.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fit: FitOptions,
}

impl SessionConfig {
    pub fn dim(&self) -> usize {
        self.design_labels.len()
    }

    pub fn m(&self) -> usize {
        self.objective_labels.len()
    }

    pub fn n_init(&self) -> usize {
        self.n_init_queries.unwrap_or(2 * (self.dim() + 1))
    }

    pub fn space(&self) -> dsts_core::Result<DesignSpace> {
        match &self.bounds {
            Some(b) => DesignSpace::continuous(b.clone()),
            None => DesignSpace::unit_box(self.dim()),
        }
    }

    pub fn policy(&self) -> PolicyConfig {
        let mut p = self.policy.clone().unwrap_or_else(|| PolicyConfig::new(PolicyKind::Dsts, self.q));
        p.q = self.q;
        p
    }

    pub fn validate(&self) -> Result<(), ApiError> {
        let invalid = |field: &str, msg: String| Err(ApiError::invalid_config(field, msg));
        if self.design_labels.is_empty() {
            return invalid("design_labels", "need at least one design coordinate".into());
        }
        if self.objective_labels.is_empty() {
            return invalid("objective_labels", "need at least one objective".into());
        }
        if self.q < 2 {
            return invalid("q", format!("q must be at least 2, got {}", self.q));
        }
        if self.n_init() == 0 {
            return invalid("n_init_queries", "need at least one initial query".into());
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.dim() {
                return invalid("bounds", format!("{} bounds for {} coordinates", b.len(), self.dim()));
            }
        }
        if let Err(e) = self.space() {
            return invalid("bounds", e.to_string());
        }
        let policy = self.policy();
        if matches!(policy.kind, PolicyKind::PboDtsIf) {
            return invalid("policy", "sessions collect one winner per objective; pbo-dts-if is not supported".into());
        }
        if matches!(policy.kind, PolicyKind::DstsM { .. }) {
            if let Err(e) = policy.reference_design(&self.space().expect("checked")) {
                return invalid("policy", e.to_string());
            }
        }
        if let Err(e) = policy.validate() {
            return invalid("policy", e.to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingResponse,
    Computing,
    Idle,
}

/// Posterior-mean summary of the designs shown so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Front {
    /// Responses the models behind the means were fitted to.
    pub n_responses: usize,
    pub designs: Vec<Design>,
    pub means: Vec<Vec<f64>>,
    /// Indices into `designs` of the non-dominated mean vectors.
    pub non_dominated: Vec<usize>,
}

impl Front {
    pub fn empty() -> Self {
        Self { n_responses: 0, designs: Vec::new(), means: Vec::new(), non_dominated: Vec::new() }
    }
}

/// What the background step produces for a dataset.
#[derive(Debug, Clone)]
pub struct Step {
    pub query: Query,
    pub front: Front,
}

fn stream(seed: u64, base: u64, n: usize) -> SimRng {
    child_rng(seed, base + n as u64)
}

/// Shown designs in first-shown order, without repeats.
pub fn distinct_shown(dataset: &InteractionDataset) -> Vec<Design> {
    let mut out: Vec<Design> = Vec::new();
    for x in dataset.shown_designs() {
        if !out.iter().any(|y| y.same_as(x)) {
            out.push(x.clone());
        }
    }
    out
}

fn fit(config: &SessionConfig, seed: u64, dataset: &InteractionDataset) -> dsts_core::Result<Vec<ObjectiveModel>> {
    let mut rng = stream(seed, FIT_STREAM, dataset.len());
    fit_objectives(dataset, &config.fit, NoiseSetting::default(), None, true, &mut rng)
}

pub fn front_from_models(dataset: &InteractionDataset, models: &[ObjectiveModel]) -> Front {
    let designs = distinct_shown(dataset);
    let means: Vec<Vec<f64>> =
        designs.iter().map(|x| models.iter().map(|m| m.posterior().mean(&x.coords)).collect()).collect();
    let non_dominated = non_dominated_indices(&means);
    Front { n_responses: dataset.len(), designs, means, non_dominated }
}

/// The query to show after `dataset`, and the current front. A pure
/// function of `(config, seed, dataset)`, so a stored session replays
/// exactly.
pub fn session_step(config: &SessionConfig, seed: u64, dataset: &InteractionDataset) -> dsts_core::Result<Step> {
    let space = config.space()?;
    let n = dataset.len();
    let models = if dataset.is_empty() { None } else { Some(fit(config, seed, dataset)?) };
    let front = models.as_ref().map(|m| front_from_models(dataset, m)).unwrap_or_else(Front::empty);
    let policy = config.policy();
    let query = match &models {
        Some(models) if n >= config.n_init() && policy.kind.needs_model() => {
            let gp = GpModels::from_models(models, policy.features)?;
            let shown = distinct_shown(dataset);
            next_query(&policy, &space, &shown, Some(&gp), &mut stream(seed, POLICY_STREAM, n))?
        }
        _ if n >= config.n_init() => next_query(&policy, &space, &[], None, &mut stream(seed, POLICY_STREAM, n))?,
        _ => random_next_query(&space, config.q, &mut stream(seed, INIT_STREAM, n))?,
    };
    Ok(Step { query, front })
}

/// A live session. Serialized as-is for persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub seed: u64,
    pub dataset: InteractionDataset,
    pub status: Status,
    pub pending: Option<Query>,
    pub front: Front,
    #[serde(default)]
    pub last_error: Option<String>,
}

impl Session {
    pub fn new(id: String, config: SessionConfig, seed: u64) -> Self {
        let dataset = InteractionDataset::all_latent(config.m());
        Self { id, config, seed, dataset, status: Status::Computing, pending: None, front: Front::empty(), last_error: None }
    }

    /// Move to `to`, refusing anything but the cycle
    /// awaiting-response, computing, idle.
    pub fn transition(&mut self, to: Status) -> Result<(), ApiError> {
        let ok = matches!(
            (self.status, to),
            (Status::AwaitingResponse, Status::Computing) | (Status::Computing, Status::Idle) | (Status::Idle, Status::AwaitingResponse)
        ) || (self.status == Status::Idle && to == Status::Computing && self.pending.is_none());
        if !ok {
            return Err(ApiError::conflict(format!("session is {:?}, cannot move to {:?}", self.status, to)));
        }
        self.status = to;
        Ok(())
    }

    /// Record `winners` for the pending query. `query_index`, when given,
    /// must name the pending query.
    pub fn submit(&mut self, winners: Vec<usize>, query_index: Option<usize>) -> Result<(), ApiError> {
        let Some(query) = self.pending.clone() else {
            return Err(ApiError::conflict(format!("no pending query (status {:?})", self.status)));
        };
        if query_index.is_some_and(|i| i != self.dataset.len()) {
            return Err(ApiError::conflict(format!(
                "query {} was already answered; the pending query is {}",
                query_index.unwrap(),
                self.dataset.len()
            )));
        }
        if winners.len() != self.config.m() {
            return Err(ApiError::invalid_response(format!(
                "expected {} winners, one per objective, got {}",
                self.config.m(),
                winners.len()
            )));
        }
        let response = Response::new(winners, query.q()).map_err(|e| ApiError::invalid_response(e.to_string()))?;
        self.transition(Status::Computing)?;
        self.dataset.push(query, response).map_err(|e| ApiError::internal(e.to_string()))?;
        self.pending = None;
        self.last_error = None;
        Ok(())
    }

    /// Install the outcome of a background step computed for a dataset of
    /// `n` records. Stale outcomes are dropped.
    pub fn finish(&mut self, n: usize, outcome: Result<Step, Error>) -> bool {
        if self.status != Status::Computing || self.dataset.len() != n {
            return false;
        }
        self.status = Status::Idle;
        match outcome {
            Ok(step) => {
                self.front = step.front;
                self.pending = Some(step.query);
                self.status = Status::AwaitingResponse;
            }
            Err(e) => self.last_error = Some(e.to_string()),
        }
        true
    }
}
