use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{shifted_halton, SimRng};
use crate::surrogate::{nelder_mead, NelderMead};
use crate::types::{Design, DesignSpace};

/// A real-valued function to maximize over the design space.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Value and gradient (`grad` overwritten), or `None` if unavailable.
    fn value_grad(&self, _x: &[f64], _grad: &mut [f64]) -> Option<f64> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Multi-start budget for [`maximize_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptions {
    /// Local searches, started from the best quasi-random raw points.
    pub restarts: usize,
    pub raw_samples: usize,
    pub max_iters: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { restarts: 10, raw_samples: 512, max_iters: 200 }
    }
}

impl InnerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || self.raw_samples < self.restarts {
            return Err(Error::Config(format!("bad inner optimizer budget {self:?}")));
        }
        Ok(())
    }
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximize `f` over `space`. Finite spaces are enumerated. Boxes get
/// multi-start projected gradient ascent when `f` has gradients, compass
/// pattern search otherwise. Ties go to the first point found.
pub fn maximize_sample(f: &dyn Objective, space: &DesignSpace, opts: &InnerOptions, rng: &mut SimRng) -> Result<(Design, f64)> {
    let bounds = match space {
        DesignSpace::Finite { points } => {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                let v = finite_or_neg_inf(f.value(&p.coords));
                if v > f64::NEG_INFINITY && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            return best
                .map(|(i, v)| (points[i].clone(), v))
                .ok_or_else(|| Error::Optimizer(format!("objective is not finite at any of {} designs", points.len())));
        }
        DesignSpace::ContinuousBox { bounds } => bounds,
    };
    let d = bounds.len();
    let raw: Vec<Vec<f64>> = shifted_halton(rng, opts.raw_samples.max(1), d)
        .into_iter()
        .map(|u| u.iter().zip(bounds).map(|(t, (lo, hi))| lo + t * (hi - lo)).collect())
        .collect();
    let mut scored: Vec<(usize, f64)> = raw.iter().enumerate().map(|(i, x)| (i, finite_or_neg_inf(f.value(x)))).collect();
    // Stable sort keeps first-found order among equal values.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |x: Vec<f64>, v: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if v > f64::NEG_INFINITY && best.as_ref().is_none_or(|(_, b)| v > *b) {
            *best = Some((x, v));
        }
    };
    let mut grad = vec![0.0; d];
    let has_grad = f.value_grad(&raw[0], &mut grad).is_some();
    for &(i, v0) in scored.iter().take(opts.restarts) {
        if v0 == f64::NEG_INFINITY {
            continue;
        }
        let (x, v) = if has_grad {
            let (x, v) = gradient_ascent(f, bounds, raw[i].clone(), opts.max_iters);
            polish(f, bounds, x, v, opts.max_iters)
        } else {
            pattern_search(f, bounds, raw[i].clone(), v0, opts.max_iters)
        };
        if v >= v0 {
            consider(x, v, &mut best);
        } else {
            consider(raw[i].clone(), v0, &mut best);
        }
    }
    best.map(|(x, v)| (Design::new(x), v)).ok_or_else(|| {
        Error::Optimizer(format!(
            "objective is not finite at any of {} raw points ({} starts)",
            raw.len(),
            opts.restarts
        ))
    })
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Projected gradient ascent with Barzilai-Borwein steps and Armijo
/// backtracking.
fn gradient_ascent(f: &dyn Objective, bounds: &[(f64, f64)], mut x: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64) {
    let d = x.len();
    let wmin = bounds.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let mut g = vec![0.0; d];
    let mut fx = match f.value_grad(&x, &mut g) {
        Some(v) if v.is_finite() => v,
        _ => return (x, f64::NEG_INFINITY),
    };
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut alpha = 0.1 * wmin / gmax.max(1e-12);
    let mut trial = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    for _ in 0..max_iters {
        let mut accepted = false;
        for _ in 0..40 {
            for k in 0..d {
                trial[k] = x[k] + alpha * g[k];
            }
            project(&mut trial, bounds);
            let step: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if step == 0.0 {
                return (x, fx);
            }
            let gain: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gk, (t, xk))| gk * (t - xk)).sum();
            match f.value_grad(&trial, &mut g_new) {
                Some(v) if v.is_finite() && v >= fx + 1e-4 * gain => {
                    let mut ss = 0.0;
                    let mut sy = 0.0;
                    for k in 0..d {
                        let s = trial[k] - x[k];
                        ss += s * s;
                        sy += s * (g_new[k] - g[k]);
                    }
                    let improvement = v - fx;
                    std::mem::swap(&mut x, &mut trial);
                    std::mem::swap(&mut g, &mut g_new);
                    fx = v;
                    // Ascent: curvature along s is negative when sy < 0.
                    alpha = if sy < 0.0 { ss / -sy } else { alpha * 2.0 };
                    accepted = true;
                    if improvement <= 1e-14 * (1.0 + fx.abs()) && ss.sqrt() <= 1e-10 * wmin {
                        return (x, fx);
                    }
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    (x, fx)
}

/// Nelder-Mead refinement from the end of a gradient run. Scalarized
/// maxima often sit on a kink of the min term, where gradient steps zigzag.
fn polish(f: &dyn Objective, bounds: &[(f64, f64)], x: Vec<f64>, fx: f64, max_evals: usize) -> (Vec<f64>, f64) {
    if fx == f64::NEG_INFINITY {
        return (x, fx);
    }
    let wmin = bounds.iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let nm = NelderMead { max_evals, step: 1e-3 * wmin, ftol: 1e-13 * (1.0 + fx.abs()), xtol: 1e-10 * wmin };
    let m = nelder_mead(|y| -f.value(y), &x, bounds, nm);
    if -m.value > fx {
        (m.x, -m.value)
    } else {
        (x, fx)
    }
}

/// Compass search: poll `±h` along each coordinate, move on the first
/// improvement, halve `h` after a failed poll.
fn pattern_search(f: &dyn Objective, bounds: &[(f64, f64)], mut x: Vec<f64>, mut fx: f64, max_iters: usize) -> (Vec<f64>, f64) {
    let mut h: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.1 * (hi - lo)).collect();
    let min_h: Vec<f64> = bounds.iter().map(|(lo, hi)| 1e-7 * (hi - lo)).collect();
    let mut trial = x.clone();
    for _ in 0..max_iters {
        let mut moved = false;
        'poll: for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                trial[k] = (x[k] + sign * h[k]).clamp(bounds[k].0, bounds[k].1);
                if trial[k] == x[k] {
                    continue;
                }
                let v = finite_or_neg_inf(f.value(&trial));
                if v > fx {
                    x.copy_from_slice(&trial);
                    fx = v;
                    moved = true;
                    break 'poll;
                }
            }
        }
        if !moved {
            h.iter_mut().for_each(|v| *v *= 0.5);
            if h.iter().zip(&min_h).all(|(a, b)| a < b) {
                break;
            }
        }
    }
    (x, fx)
}
