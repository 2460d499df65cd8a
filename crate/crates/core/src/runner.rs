//! Simulated experiment harness: seeded replications, trace files and
//! hypervolume summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dm::{calibrate_noise_widening, evaluate_query, respond_scalarized_values, respond_to_values, CalibrationSettings, NoiseProfile};
use crate::error::{Error, Result};
use crate::metrics::HvTracker;
use crate::policies::{next_query, random_next_query, GpModels, PolicyConfig, PolicyKind};
use crate::rng::{child_rng, derive_seed, fork, SimRng};
use crate::scalarization::sample_weights;
use crate::surrogate::{fit_objectives, FitOptions, Hyperparameters, NoiseSetting, ObjectiveModel};
use crate::testbed::TestProblem;
use crate::types::{Design, InteractionDataset, Query, Response};
use crate::testbed::ObjectiveOracle;

const CALIBRATION_STREAM: u64 = 0;
const RANGE_STREAM: u64 = 1;
const REPLICATION_STREAM_BASE: u64 = 1 << 32;
const RANGE_SAMPLES: usize = 10_000;

/// Preference-noise targets and the calibration budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseTargets {
    /// Pairwise mistake rate among the top designs.
    pub mistake_rate: f64,
    pub top_fraction: f64,
    pub calibration: CalibrationSettings,
    /// Explicit Gumbel scales; skips calibration when set.
    pub lambda: Option<Vec<f64>>,
}

impl Default for NoiseTargets {
    fn default() -> Self {
        Self { mistake_rate: 0.2, top_fraction: 0.01, calibration: CalibrationSettings::default(), lambda: None }
    }
}

fn default_iterations() -> usize {
    40
}

fn default_replications() -> usize {
    10
}

fn default_refit() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: TestProblem,
    pub policy: PolicyConfig,
    /// Defaults to `2 (d + 1)`.
    #[serde(default)]
    pub n_init_queries: Option<usize>,
    #[serde(default = "default_iterations")]
    pub n_iterations: usize,
    #[serde(default = "default_replications")]
    pub n_replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseTargets,
    /// Objectives measured directly instead of through preferences.
    #[serde(default)]
    pub observable: Vec<usize>,
    /// Measurement noise sd per observable objective, in the order of
    /// `observable`. Defaults to 1% of each objective's sampled range.
    #[serde(default)]
    pub observation_sd: Option<Vec<f64>>,
    #[serde(default)]
    pub fit: FitOptions,
    /// Full hyperparameter search every this many iterations; in between,
    /// hyperparameters are held at the last search.
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(problem: TestProblem, policy: PolicyConfig) -> Self {
        Self {
            problem,
            policy,
            n_init_queries: None,
            n_iterations: default_iterations(),
            n_replications: default_replications(),
            seed: 0,
            noise: NoiseTargets::default(),
            observable: Vec::new(),
            observation_sd: None,
            fit: FitOptions::default(),
            refit_every: default_refit(),
            out_dir: default_out(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_init(&self) -> usize {
        self.n_init_queries.unwrap_or(2 * (self.problem.dim() + 1))
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.n_init() == 0 || self.n_replications == 0 || self.refit_every == 0 {
            return Err(Error::Config("n_init_queries, n_replications and refit_every must be positive".into()));
        }
        let m = self.problem.m();
        let mut seen = vec![false; m];
        for &j in &self.observable {
            if j >= m {
                return Err(Error::Index { index: j + 1, max: m });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!("objective {j} listed twice as observable")));
            }
        }
        if matches!(self.policy.kind, PolicyKind::PboDtsIf) && !self.observable.is_empty() {
            return Err(Error::Config("pbo-dts-if takes aggregated feedback only; observable objectives are not supported".into()));
        }
        if let Some(sd) = &self.observation_sd {
            if sd.len() != self.observable.len() || sd.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config("observation_sd needs one positive entry per observable objective".into()));
            }
        }
        if let Some(l) = &self.noise.lambda {
            NoiseProfile::new(l.clone())?;
            crate::error::check_len(m, l.len())?;
        }
        Ok(())
    }
}

/// Noise resolved once per (problem, master seed) and shared by every
/// replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetup {
    pub lambda: Vec<f64>,
    /// Top fraction each scale was calibrated on. Larger than the target
    /// only for objectives that tie across the requested pool.
    pub top_fraction: Vec<f64>,
    /// Measurement sd per observable objective, keyed by objective index.
    pub observation_sd: BTreeMap<usize, f64>,
}

/// Calibrate (or take) the Gumbel scales and measurement noise for `cfg`.
pub fn resolve_noise(cfg: &ExperimentConfig) -> Result<NoiseSetup> {
    let problem = cfg.problem;
    let space = problem.space();
    let (lambda, top_fraction) = match &cfg.noise.lambda {
        Some(l) => (l.clone(), vec![cfg.noise.top_fraction; l.len()]),
        None => {
            let mut rng = child_rng(cfg.seed, CALIBRATION_STREAM);
            (0..problem.m())
                .map(|j| {
                    let mut child = fork(&mut rng);
                    calibrate_noise_widening(
                        &space,
                        &problem,
                        j,
                        cfg.noise.mistake_rate,
                        cfg.noise.top_fraction,
                        &cfg.noise.calibration,
                        &mut child,
                    )
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip()
        }
    };
    let observation_sd = match &cfg.observation_sd {
        Some(sd) => cfg.observable.iter().copied().zip(sd.iter().copied()).collect(),
        None if cfg.observable.is_empty() => BTreeMap::new(),
        None => {
            let mut rng = child_rng(cfg.seed, RANGE_STREAM);
            let mut lo = vec![f64::INFINITY; problem.m()];
            let mut hi = vec![f64::NEG_INFINITY; problem.m()];
            for _ in 0..RANGE_SAMPLES {
                let y = problem.evaluate(&space.sample_uniform(&mut rng))?.values;
                for j in 0..y.len() {
                    lo[j] = lo[j].min(y[j]);
                    hi[j] = hi[j].max(y[j]);
                }
            }
            cfg.observable.iter().map(|&j| (j, 0.01 * (hi[j] - lo[j]))).collect()
        }
    };
    Ok(NoiseSetup { lambda, top_fraction, observation_sd })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub replication: usize,
    pub seed: u64,
    pub n_init: usize,
    pub config: ExperimentConfig,
    pub noise: NoiseSetup,
}

/// One shown query and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub query: Query,
    /// Winners for the latent objectives; a single aggregated winner for
    /// `pbo-dts-if`.
    pub response: Response,
    /// Noisy measurements per observable objective, one per design.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observed: BTreeMap<usize, Vec<f64>>,
    /// Weights the decision maker used to aggregate (`pbo-dts-if`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub hv: f64,
    pub n_shown: usize,
    /// Whether every Laplace covariance of the fit behind this query
    /// factorized without extra jitter. Absent for initial and random
    /// queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace_psd: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    /// Wall seconds per record. Kept out of the trace file so traces stay
    /// byte-reproducible.
    #[serde(skip)]
    pub wall_seconds: Vec<f64>,
}

impl RunTrace {
    /// Hypervolume after the initial queries and after each iteration.
    pub fn hv_series(&self) -> Vec<f64> {
        self.records.iter().skip(self.header.n_init.saturating_sub(1)).map(|r| r.hv).collect()
    }

    /// Header line, then one line per record.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = BufReader::new(fs::File::open(path)?);
        let mut lines = file.lines();
        let header_line = lines.next().ok_or_else(|| Error::Data(format!("{} is empty", path.display())))??;
        let header: TraceHeader = serde_json::from_str(&header_line)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { header, records, wall_seconds: Vec::new() })
    }

    /// Rebuild the interaction dataset the trace describes.
    pub fn dataset(&self) -> Result<InteractionDataset> {
        let m = self.header.config.problem.m();
        let mut ds = if matches!(self.header.config.policy.kind, PolicyKind::PboDtsIf) {
            InteractionDataset::all_latent(1)
        } else {
            InteractionDataset::with_observable(m, &self.header.config.observable)?
        };
        for r in &self.records {
            for (&j, vals) in &r.observed {
                for (x, v) in r.query.designs.iter().zip(vals) {
                    ds.observe(j, x.clone(), *v)?;
                }
            }
            ds.push(r.query.clone(), r.response.clone())?;
        }
        Ok(ds)
    }

    /// Write `<dir>/rep_NNN.jsonl` and its `.timing.jsonl` sidecar, each
    /// through a temporary file renamed into place.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(trace_file_name(self.header.replication));
        write_atomic(&path, self.to_jsonl()?.as_bytes())?;
        let mut timing = String::new();
        for (i, s) in self.wall_seconds.iter().enumerate() {
            timing.push_str(&serde_json::to_string(&serde_json::json!({ "iter": i, "wall_seconds": s }))?);
            timing.push('\n');
        }
        write_atomic(&path.with_extension("timing.jsonl"), timing.as_bytes())?;
        Ok(path)
    }
}

pub fn trace_file_name(replication: usize) -> String {
    format!("rep_{replication:03}.jsonl")
}

/// Write `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn laplace_psd(models: &[ObjectiveModel]) -> bool {
    models
        .iter()
        .filter(|m| matches!(m, ObjectiveModel::Preference(_)))
        .all(|m| m.posterior().covariance_psd_jitter() == Some(0.0))
}

struct Loop<'a> {
    cfg: &'a ExperimentConfig,
    noise: NoiseProfile,
    observation_sd: &'a BTreeMap<usize, f64>,
    dataset: InteractionDataset,
    tracker: HvTracker,
    records: Vec<TraceRecord>,
    wall: Vec<f64>,
    dm_rng: SimRng,
}

impl Loop<'_> {
    fn present(&mut self, query: Query, laplace_psd: Option<bool>, started: Instant) -> Result<()> {
        let problem = self.cfg.problem;
        let values = evaluate_query(&query, &problem)?;
        let mut weights = None;
        let response = if matches!(self.cfg.policy.kind, PolicyKind::PboDtsIf) {
            let w = sample_weights(&mut self.dm_rng, problem.m(), self.cfg.policy.rho)?;
            let winner = respond_scalarized_values(&values, &self.noise, &w, &mut self.dm_rng)?;
            weights = Some(w.theta.clone());
            Response::new(vec![winner], query.q())?
        } else {
            respond_to_values(&values, &self.dataset.latent, &self.noise, &mut self.dm_rng)?
        };
        let mut observed = BTreeMap::new();
        for (&j, &sd) in self.observation_sd {
            let normal = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
            let vals: Vec<f64> = values.iter().map(|v| v[j] + normal.sample(&mut self.dm_rng)).collect();
            for (x, v) in query.designs.iter().zip(&vals) {
                self.dataset.observe(j, x.clone(), *v)?;
            }
            observed.insert(j, vals);
        }
        for v in &values {
            self.tracker.add(v.clone())?;
        }
        self.dataset.push(query.clone(), response.clone())?;
        self.records.push(TraceRecord {
            iter: self.records.len(),
            query,
            response,
            observed,
            weights,
            hv: self.tracker.value(),
            n_shown: self.dataset.len() * self.dataset.q().unwrap_or(0),
            laplace_psd,
        });
        self.wall.push(started.elapsed().as_secs_f64());
        Ok(())
    }
}

/// Seed of replication `rep` under master seed `seed`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, REPLICATION_STREAM_BASE + rep as u64)
}

/// Run one replication with noise already resolved. Does not write files.
pub fn run_replication_with(cfg: &ExperimentConfig, noise: &NoiseSetup, rep: usize) -> Result<RunTrace> {
    cfg.validate()?;
    let problem = cfg.problem;
    let space = problem.space();
    let m = problem.m();
    let seed = replication_seed(cfg.seed, rep);
    let mut root = crate::rng::rng_from_seed(seed);
    let mut init_rng = fork(&mut root);
    let dm_rng = fork(&mut root);
    let mut policy_rng = fork(&mut root);
    let mut fit_rng = fork(&mut root);

    let pbo = matches!(cfg.policy.kind, PolicyKind::PboDtsIf);
    let dataset = if pbo { InteractionDataset::all_latent(1) } else { InteractionDataset::with_observable(m, &cfg.observable)? };
    let mut lp = Loop {
        cfg,
        noise: NoiseProfile::new(noise.lambda.clone())?,
        observation_sd: &noise.observation_sd,
        dataset,
        tracker: HvTracker::new(problem.hv_reference().values)?,
        records: Vec::new(),
        wall: Vec::new(),
        dm_rng,
    };
    for _ in 0..cfg.n_init() {
        let t = Instant::now();
        let q = random_next_query(&space, cfg.policy.q, &mut init_rng)?;
        lp.present(q, None, t)?;
    }

    let mut warm: Option<Vec<Hyperparameters>> = None;
    for it in 0..cfg.n_iterations {
        let t = Instant::now();
        let shown: Vec<Design> = lp.dataset.shown_designs().into_iter().cloned().collect();
        let (query, psd) = if cfg.policy.kind.needs_model() {
            let search = warm.is_none() || it % cfg.refit_every == 0;
            let models =
                fit_objectives(&lp.dataset, &cfg.fit, NoiseSetting::default(), warm.as_deref(), search, &mut fit_rng)?;
            warm = Some(models.iter().map(ObjectiveModel::hyperparameters).collect());
            let gp = GpModels::from_models(&models, cfg.policy.features)?;
            let q = next_query(&cfg.policy, &space, &shown, Some(&gp), &mut policy_rng)?;
            (q, Some(laplace_psd(&models)))
        } else {
            (next_query(&cfg.policy, &space, &shown, None, &mut policy_rng)?, None)
        };
        lp.present(query, psd, t)?;
    }

    Ok(RunTrace {
        header: TraceHeader { replication: rep, seed, n_init: cfg.n_init(), config: cfg.clone(), noise: noise.clone() },
        records: lp.records,
        wall_seconds: lp.wall,
    })
}

/// Resolve noise, run replication `rep` and write its trace under
/// `cfg.out_dir`.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<RunTrace> {
    let noise = resolve_noise(cfg)?;
    let trace = run_replication_with(cfg, &noise, rep)?;
    trace.write(&cfg.out_dir)?;
    Ok(trace)
}

/// One row of the summary CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iter: usize,
    pub mean_hv: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SummaryRow {
    pub fn se(&self) -> f64 {
        (self.hi - self.mean_hv) / 1.96
    }
}

/// Per-iteration mean with `±1.96` standard-error bands (sample standard
/// deviation over `sqrt(n)`; zero width for a single series). Series must
/// share one length.
pub fn aggregate(series: &[Vec<f64>]) -> Result<Vec<SummaryRow>> {
    let first = series.first().ok_or(Error::EmptySet("no hypervolume series to aggregate"))?;
    for s in series {
        crate::error::check_len(first.len(), s.len())?;
    }
    let n = series.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mut col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            // Sorting makes the floating-point sums independent of replication order.
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / n;
            let se = if series.len() > 1 {
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            SummaryRow { iter: i, mean_hv: mean, lo: mean - 1.96 * se, hi: mean + 1.96 * se }
        })
        .collect())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("iter,mean_hv,lo,hi\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.mean_hv, r.lo, r.hi));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub policy: String,
    pub problem: String,
    pub q: usize,
    pub n_replications: usize,
    pub effective_n: usize,
    pub failures: Vec<ReplicationFailure>,
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn final_row(&self) -> Option<&SummaryRow> {
        self.rows.last()
    }

    /// Write `summary.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("summary.csv"), summary_csv(&self.rows).as_bytes())?;
        write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Result of [`run_experiment`]: the summary plus every successful trace,
/// ordered by replication.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub traces: Vec<RunTrace>,
}

fn summarize(cfg: &ExperimentConfig, traces: &[RunTrace], failures: Vec<ReplicationFailure>) -> Result<ExperimentSummary> {
    let series: Vec<Vec<f64>> = traces.iter().map(RunTrace::hv_series).collect();
    let rows = if series.is_empty() { Vec::new() } else { aggregate(&series)? };
    Ok(ExperimentSummary {
        policy: cfg.policy.kind.label().to_string(),
        problem: cfg.problem.name().to_string(),
        q: cfg.policy.q,
        n_replications: cfg.n_replications,
        effective_n: traces.len(),
        failures,
        rows,
    })
}

/// Run every replication on `workers` threads, write traces and the
/// summary into `cfg.out_dir`. A failed replication is recorded in the
/// summary and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    use rayon::prelude::*;

    cfg.validate()?;
    let noise = resolve_noise(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<(usize, Result<RunTrace>)> = pool.install(|| {
        (0..cfg.n_replications)
            .into_par_iter()
            .map(|rep| {
                let r = run_replication_with(cfg, &noise, rep).and_then(|t| t.write(&cfg.out_dir).map(|_| t));
                (rep, r)
            })
            .collect()
    });
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => failures.push(ReplicationFailure { replication: rep, error: e.to_string() }),
        }
    }
    let summary = summarize(cfg, &traces, failures)?;
    summary.write(&cfg.out_dir)?;
    Ok(ExperimentOutcome { summary, traces })
}

/// Rebuild the summary from the traces in `dir` and rewrite it.
pub fn summarize_dir(dir: &Path) -> Result<ExperimentSummary> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("rep_") && name.ends_with(".jsonl") && !name.ends_with(".timing.jsonl")
        })
        .collect();
    paths.sort();
    let traces = paths.iter().map(|p| RunTrace::read_jsonl(p)).collect::<Result<Vec<_>>>()?;
    let first = traces.first().ok_or_else(|| Error::Data(format!("no traces in {}", dir.display())))?;
    let cfg = first.header.config.clone();
    let done: Vec<usize> = traces.iter().map(|t| t.header.replication).collect();
    let failures = (0..cfg.n_replications)
        .filter(|r| !done.contains(r))
        .map(|r| ReplicationFailure { replication: r, error: "trace missing".into() })
        .collect();
    let summary = summarize(&cfg, &traces, failures)?;
    summary.write(dir)?;
    Ok(summary)
}

/// Mistake rate the simulated decision maker shows for objective `j` under
/// `noise`, estimated on a fresh stream over the same top fraction.
pub fn check_calibration<R: Rng + ?Sized>(cfg: &ExperimentConfig, noise: &NoiseSetup, j: usize, rng: &mut R) -> Result<f64> {
    crate::dm::estimate_mistake_rate(
        &cfg.problem.space(),
        &cfg.problem,
        j,
        noise.lambda[j],
        noise.top_fraction[j],
        &cfg.noise.calibration,
        rng,
    )
}
