//! Preference GP: softmax choice likelihood, Laplace approximation and
//! type-II maximum likelihood hyperparameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelConfig;
use super::optim::{nelder_mead, NelderMead};
use super::posterior::{GpPosterior, BASE_JITTER};
use super::{FitOptions, Hyperparameters};
use crate::error::{Error, Result};
use crate::types::{Design, InteractionDataset};

/// Choice probabilities `exp(v_i / lambda) / sum_k exp(v_k / lambda)`.
pub fn choice_probabilities(values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("noise scale must be positive, got {lambda}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = values.iter().map(|v| ((v - max) / lambda).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

/// Log-probability that `winner` (1-based) is chosen among `values`.
pub fn preference_log_likelihood(values: &[f64], winner: usize, lambda: f64) -> Result<f64> {
    if winner == 0 || winner > values.len() {
        return Err(Error::Index { index: winner, max: values.len() });
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("noise scale must be positive, got {lambda}")));
    }
    Ok(log_choice(values.iter().map(|v| v / lambda), values[winner - 1] / lambda))
}

fn log_choice(scaled: impl Iterator<Item = f64> + Clone, winner: f64) -> f64 {
    let max = scaled.clone().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.map(|v| (v - max).exp()).sum::<f64>().ln();
    winner - lse
}

/// Comparisons over deduplicated anchors: each record lists the anchor of
/// every query slot and the 0-based winning slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparisons {
    pub slots: Vec<Vec<usize>>,
    pub winners: Vec<usize>,
}

/// Index of `x` among `anchors`, appending it when new.
pub(crate) fn anchor_index(anchors: &mut Vec<Vec<f64>>, x: &Design) -> usize {
    if let Some(i) = anchors
        .iter()
        .position(|a| a.len() == x.coords.len() && a.iter().zip(&x.coords).all(|(p, q)| (p - q).abs() <= crate::types::COORD_TOL))
    {
        return i;
    }
    anchors.push(x.coords.clone());
    anchors.len() - 1
}

/// Anchors and comparisons for latent objective `objective`.
pub fn preference_data(dataset: &InteractionDataset, objective: usize) -> Result<(Vec<Vec<f64>>, Comparisons)> {
    let pos = dataset
        .latent_position(objective)
        .ok_or_else(|| Error::Data(format!("objective {objective} is not latent")))?;
    if dataset.records.is_empty() {
        return Err(Error::Data("preference fit needs at least one record".into()));
    }
    let mut anchors = Vec::new();
    let mut slots = Vec::with_capacity(dataset.records.len());
    let mut winners = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        slots.push(r.query.designs.iter().map(|x| anchor_index(&mut anchors, x)).collect());
        winners.push(r.response.winner_slot(pos));
    }
    Ok((anchors, Comparisons { slots, winners }))
}

struct Mode {
    f: DVector<f64>,
    a: DVector<f64>,
    grad: DVector<f64>,
    psi: f64,
    iterations: usize,
}

struct LikelihoodStats {
    loglik: f64,
    grad: DVector<f64>,
    probs: Vec<Vec<f64>>,
}

fn likelihood_stats(f: &DVector<f64>, comps: &Comparisons, lambda: f64) -> LikelihoodStats {
    let mut grad = DVector::zeros(f.len());
    let mut loglik = 0.0;
    let mut probs = Vec::with_capacity(comps.slots.len());
    for (idx, &w) in comps.slots.iter().zip(&comps.winners) {
        let scaled: Vec<f64> = idx.iter().map(|&i| f[i] / lambda).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        loglik += scaled[w] - max - s.ln();
        for (slot, &i) in idx.iter().enumerate() {
            let e = if slot == w { 1.0 } else { 0.0 };
            grad[i] += (e - p[slot]) / lambda;
        }
        probs.push(p);
    }
    LikelihoodStats { loglik, grad, probs }
}

/// `W v` where `W` is the negative Hessian of the log-likelihood.
fn w_times(v: &DVector<f64>, comps: &Comparisons, probs: &[Vec<f64>], lambda: f64) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    let l2 = lambda * lambda;
    for (idx, p) in comps.slots.iter().zip(probs) {
        let pv: f64 = idx.iter().zip(p).map(|(&i, pi)| pi * v[i]).sum();
        for (&i, pi) in idx.iter().zip(p) {
            out[i] += pi * (v[i] - pv) / l2;
        }
    }
    out
}

/// Dense `W`.
fn w_dense(n: usize, comps: &Comparisons, probs: &[Vec<f64>], lambda: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    let l2 = lambda * lambda;
    for (idx, p) in comps.slots.iter().zip(probs) {
        for (a, &i) in idx.iter().enumerate() {
            w[(i, i)] += p[a] / l2;
            for (b, &j) in idx.iter().enumerate() {
                w[(i, j)] -= p[a] * p[b] / l2;
            }
        }
    }
    w
}

/// `I + K W`.
fn i_plus_kw(k: &DMatrix<f64>, comps: &Comparisons, probs: &[Vec<f64>], lambda: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let mut m = DMatrix::identity(n, n);
    let l2 = lambda * lambda;
    for (idx, p) in comps.slots.iter().zip(probs) {
        for (b, &j) in idx.iter().enumerate() {
            for (a, &i) in idx.iter().enumerate() {
                let mut w = -p[a] * p[b] / l2;
                if a == b {
                    w += p[a] / l2;
                }
                if w != 0.0 {
                    m.column_mut(j).axpy(w, &k.column(i), 1.0);
                }
            }
        }
    }
    m
}

fn psi(loglik: f64, f: &DVector<f64>, a: &DVector<f64>) -> f64 {
    loglik - 0.5 * f.dot(a)
}

/// Newton iterations for the posterior mode under prior covariance `k`.
fn find_mode(
    k: &DMatrix<f64>,
    comps: &Comparisons,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    max_iter: usize,
) -> Result<Mode> {
    let n = k.nrows();
    let mut a = match warm {
        Some(w) if w.len() == n => w.clone(),
        _ => DVector::zeros(n),
    };
    let mut f = k * &a;
    let mut stats = likelihood_stats(&f, comps, lambda);
    let mut cur = psi(stats.loglik, &f, &a);
    for it in 0..max_iter {
        let gap = (&stats.grad - &a).amax();
        if gap <= 1e-8 * (1.0 + stats.grad.amax()) {
            return Ok(Mode { f, a, grad: stats.grad, psi: cur, iterations: it });
        }
        let b = w_times(&f, comps, &stats.probs, lambda) + &stats.grad;
        let m = i_plus_kw(k, comps, &stats.probs, lambda);
        let f_new = m
            .lu()
            .solve(&(k * &b))
            .ok_or_else(|| Error::Fit("singular Newton system".into()))?;
        let a_new = &b - w_times(&f_new, comps, &stats.probs, lambda);
        let df = f_new - &f;
        let da = a_new - &a;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let ft = &f + &df * t;
            let at = &a + &da * t;
            let st = likelihood_stats(&ft, comps, lambda);
            let pt = psi(st.loglik, &ft, &at);
            if pt.is_finite() && pt >= cur - 1e-12 * (1.0 + cur.abs()) {
                accepted = Some((ft, at, st, pt));
                break;
            }
            t *= 0.5;
        }
        let Some((ft, at, st, pt)) = accepted else {
            if gap <= 1e-5 * (1.0 + stats.grad.amax()) {
                return Ok(Mode { f, a, grad: stats.grad, psi: cur, iterations: it });
            }
            return Err(Error::Fit(format!("Newton line search failed at iteration {it}, gradient gap {gap:.3e}")));
        };
        let step = (&df * t).amax();
        let gain = pt - cur;
        f = ft;
        a = at;
        stats = st;
        cur = pt;
        if gain.abs() <= 1e-13 * (1.0 + cur.abs()) && step <= 1e-10 * (1.0 + f.amax()) {
            return Ok(Mode { f, a, grad: stats.grad, psi: cur, iterations: it + 1 });
        }
    }
    let gap = (&stats.grad - &a).amax();
    Err(Error::Fit(format!(
        "Newton did not converge in {max_iter} iterations (gradient gap {gap:.3e}, psi {cur:.6e}, lambda {lambda:.3e})"
    )))
}

fn jittered_gram(kernel: &KernelConfig, anchors: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
    let mut k = kernel.gram(anchors);
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    k
}

/// Laplace log marginal likelihood and the mode, at fixed hyperparameters.
fn laplace_evidence(
    kernel: &KernelConfig,
    anchors: &[Vec<f64>],
    comps: &Comparisons,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    max_iter: usize,
) -> Result<(f64, Mode)> {
    let k = jittered_gram(kernel, anchors, BASE_JITTER * kernel.signal_variance);
    let mode = find_mode(&k, comps, lambda, warm, max_iter)?;
    let stats = likelihood_stats(&mode.f, comps, lambda);
    let lu = i_plus_kw(&k, comps, &stats.probs, lambda).lu();
    let logdet: f64 = lu.u().diagonal().iter().map(|v| v.abs().ln()).sum();
    Ok((mode.psi - 0.5 * logdet, mode))
}

/// Fitted preference model for one latent objective.
#[derive(Debug, Clone)]
pub struct PreferenceModel {
    pub kernel: KernelConfig,
    pub noise_scale: f64,
    pub log_marginal_likelihood: f64,
    pub newton_iterations: usize,
    likelihood_gradient: DVector<f64>,
    posterior: GpPosterior,
}

impl PreferenceModel {
    /// The GP prior with no data.
    pub fn prior(kernel: KernelConfig, noise_scale: f64) -> Self {
        Self {
            posterior: GpPosterior::prior(kernel.clone()),
            kernel,
            noise_scale,
            log_marginal_likelihood: 0.0,
            newton_iterations: 0,
            likelihood_gradient: DVector::zeros(0),
        }
    }

    pub fn posterior(&self) -> &GpPosterior {
        &self.posterior
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        self.posterior.anchors()
    }

    pub fn laplace_mean(&self) -> &DVector<f64> {
        self.posterior.mean_at_anchors()
    }

    pub fn laplace_cov(&self) -> &DMatrix<f64> {
        self.posterior.cov_at_anchors()
    }

    /// Gradient of the log-likelihood at the mode, per anchor.
    pub fn likelihood_gradient(&self) -> &DVector<f64> {
        &self.likelihood_gradient
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            lengthscales: self.kernel.lengthscales.clone(),
            signal_variance: self.kernel.signal_variance,
            noise: self.noise_scale,
        }
    }

    /// Snapshot of hyperparameters, anchors and Laplace moments.
    pub fn to_snapshot(&self) -> PreferenceSnapshot {
        PreferenceSnapshot {
            kernel: self.kernel.clone(),
            noise_scale: self.noise_scale,
            anchors: self.anchors().to_vec(),
            laplace_mean: self.laplace_mean().as_slice().to_vec(),
            laplace_cov: self.laplace_cov().row_iter().map(|r| r.iter().copied().collect()).collect(),
            log_marginal_likelihood: self.log_marginal_likelihood,
        }
    }

    pub fn from_snapshot(s: &PreferenceSnapshot) -> Result<Self> {
        s.kernel.validate()?;
        let n = s.anchors.len();
        if s.laplace_cov.len() != n || s.laplace_cov.iter().any(|r| r.len() != n) {
            return Err(Error::Data("snapshot covariance does not match anchors".into()));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| s.laplace_cov[i][j]);
        let mean = DVector::from_column_slice(&s.laplace_mean);
        let posterior = if n == 0 {
            GpPosterior::prior(s.kernel.clone())
        } else {
            GpPosterior::new(s.kernel.clone(), s.anchors.clone(), mean, cov, None)?
        };
        Ok(Self {
            kernel: s.kernel.clone(),
            noise_scale: s.noise_scale,
            log_marginal_likelihood: s.log_marginal_likelihood,
            newton_iterations: 0,
            likelihood_gradient: DVector::zeros(n),
            posterior,
        })
    }
}

/// Serializable form of a [`PreferenceModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSnapshot {
    pub kernel: KernelConfig,
    pub noise_scale: f64,
    pub anchors: Vec<Vec<f64>>,
    pub laplace_mean: Vec<f64>,
    pub laplace_cov: Vec<Vec<f64>>,
    pub log_marginal_likelihood: f64,
}

/// Laplace fit at fixed hyperparameters.
pub fn fit_preference_fixed(
    anchors: Vec<Vec<f64>>,
    comps: &Comparisons,
    hyper: &Hyperparameters,
    max_newton_iters: usize,
) -> Result<PreferenceModel> {
    let kernel = KernelConfig::matern52(hyper.lengthscales.clone(), hyper.signal_variance)?;
    let lambda = hyper.noise;
    let (chol, jitter) = GpPosterior::factor_gram(&kernel, &anchors)?;
    let k = jittered_gram(&kernel, &anchors, jitter);
    let mode = find_mode(&k, comps, lambda, None, max_newton_iters)?;
    let stats = likelihood_stats(&mode.f, comps, lambda);
    let n = anchors.len();

    // Laplace covariance (K^-1 + W)^-1 = L B^-1 L^T with B = I + L^T W L.
    let l = chol.l();
    let w = w_dense(n, comps, &stats.probs, lambda);
    let b = DMatrix::identity(n, n) + l.tr_mul(&(&w * &l));
    let (lb, _) = super::linalg::cholesky_jittered(&b, 0.0)?;
    let y = lb
        .l_dirty()
        .transpose()
        .solve_upper_triangular(&l.transpose())
        .ok_or_else(|| Error::Fit("singular Laplace system".into()))?;
    let cov = y.tr_mul(&y);
    let logdet_b = super::linalg::log_det(&lb);

    let posterior = GpPosterior::new(kernel.clone(), anchors, mode.f.clone(), cov, Some((chol, jitter)))?;
    Ok(PreferenceModel {
        kernel,
        noise_scale: lambda,
        log_marginal_likelihood: mode.psi - 0.5 * logdet_b,
        newton_iterations: mode.iterations,
        likelihood_gradient: mode.grad,
        posterior,
    })
}

fn unpack(v: &[f64], signal_variance: f64) -> Hyperparameters {
    let d = v.len() - 1;
    Hyperparameters {
        lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
        signal_variance,
        noise: v[d].exp(),
    }
}

fn pack(h: &Hyperparameters) -> Vec<f64> {
    h.lengthscales.iter().chain([&h.noise]).map(|x| x.ln()).collect()
}

/// Laplace log marginal likelihood at the given hyperparameters.
pub fn preference_log_evidence(anchors: &[Vec<f64>], comps: &Comparisons, hyper: &Hyperparameters) -> Result<f64> {
    let kernel = KernelConfig::matern52(hyper.lengthscales.clone(), hyper.signal_variance)?;
    Ok(laplace_evidence(&kernel, anchors, comps, hyper.noise, None, 100)?.0)
}

/// Fit the preference model for latent objective `objective`: Laplace
/// approximation with lengthscales and noise scale chosen by maximizing the
/// approximate evidence from several starts. The signal variance is held at
/// `opts.signal_variance`; only the ratio of latent scale to noise scale is
/// identifiable under the choice likelihood.
pub fn fit_preference<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    objective: usize,
    opts: &FitOptions,
    warm: Option<&Hyperparameters>,
    rng: &mut R,
) -> Result<PreferenceModel> {
    let (anchors, comps) = preference_data(dataset, objective)?;
    let d = anchors[0].len();
    let hyper = search_hyperparameters(&anchors, &comps, d, opts, warm, rng)?;
    fit_preference_fixed(anchors, &comps, &hyper, opts.max_newton_iters)
}

pub(crate) fn search_hyperparameters<R: Rng + ?Sized>(
    anchors: &[Vec<f64>],
    comps: &Comparisons,
    d: usize,
    opts: &FitOptions,
    warm: Option<&Hyperparameters>,
    rng: &mut R,
) -> Result<Hyperparameters> {
    let sv = opts.signal_variance;
    let (llo, lhi) = opts.lengthscale_bounds;
    let (nlo, nhi) = opts.noise_bounds;
    let bounds: Vec<(f64, f64)> =
        std::iter::repeat((llo.ln(), lhi.ln())).take(d).chain([(nlo.ln(), nhi.ln())]).collect();

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts.max(1));
    match warm {
        Some(h) if h.lengthscales.len() == d => starts.push(pack(h)),
        _ => starts.push(pack(&Hyperparameters { lengthscales: vec![0.5; d], signal_variance: sv, noise: 0.1 })),
    }
    while starts.len() < opts.restarts.max(1) {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05f64.ln()..2.0f64.ln())).collect();
        v.push(rng.random_range(0.01f64.ln()..1.0f64.ln()));
        starts.push(v);
    }
    for s in &mut starts {
        for (x, (lo, hi)) in s.iter_mut().zip(&bounds) {
            *x = x.clamp(*lo, *hi);
        }
    }

    let mut cache: Option<DVector<f64>> = None;
    let mut objective = |v: &[f64]| -> f64 {
        let h = unpack(v, sv);
        let Ok(kernel) = KernelConfig::matern52(h.lengthscales, sv) else {
            return f64::INFINITY;
        };
        match laplace_evidence(&kernel, anchors, comps, h.noise, cache.as_ref(), opts.max_newton_iters) {
            Ok((ev, mode)) => {
                cache = Some(mode.a);
                -ev
            }
            Err(_) => f64::INFINITY,
        }
    };

    let mut screened: Vec<(Vec<f64>, f64)> = starts.into_iter().map(|s| {
        let v = objective(&s);
        (s, v)
    }).collect();
    screened.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best = screened[0].clone();
    let nm = NelderMead { max_evals: opts.max_evals, step: 0.4, ftol: 1e-6, xtol: 1e-3 };
    for (s, _) in screened.iter().take(opts.local_searches.max(1)) {
        let m = nelder_mead(&mut objective, s, &bounds, nm);
        if m.value < best.1 {
            best = (m.x, m.value);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Fit("no hyperparameter setting produced a finite evidence".into()));
    }
    Ok(unpack(&best.0, sv))
}
