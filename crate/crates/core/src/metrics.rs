//! Hypervolume indicator: exact for up to four objectives plus a Monte
//! Carlo estimate, and running traces over an interaction history.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::pareto::non_dominated_indices;
use crate::testbed::ObjectiveOracle;
use crate::types::{InteractionDataset, ObjectiveVector};

/// Largest objective count handled by [`hypervolume_exact`].
pub const MAX_EXACT_OBJECTIVES: usize = 4;

/// A set of objective vectors and the reference point they are measured
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontApproximation {
    pub points: Vec<ObjectiveVector>,
    pub reference: ObjectiveVector,
}

impl FrontApproximation {
    pub fn new(points: Vec<ObjectiveVector>, reference: ObjectiveVector) -> Result<Self> {
        for p in &points {
            check_len(reference.len(), p.len())?;
        }
        Ok(Self { points, reference })
    }

    fn rows(&self) -> Vec<&[f64]> {
        self.points.iter().map(|p| p.values.as_slice()).collect()
    }
}

/// Exact hypervolume of `front`. Points are clipped to the reference, so
/// anything below it in some coordinate adds nothing.
pub fn hypervolume_exact(front: &FrontApproximation) -> Result<f64> {
    hypervolume(&front.rows(), &front.reference.values)
}

/// Slice form of [`hypervolume_exact`].
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64> {
    let m = reference.len();
    if m == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    if m > MAX_EXACT_OBJECTIVES {
        return Err(Error::Unsupported(format!(
            "exact hypervolume supports up to {MAX_EXACT_OBJECTIVES} objectives, got {m}; use hypervolume_mc"
        )));
    }
    let mut shifted: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let p = p.as_ref();
        check_len(m, p.len())?;
        // Work relative to the reference; points not strictly above it in
        // every coordinate have zero volume.
        let s: Vec<f64> = p.iter().zip(reference).map(|(a, r)| a - r).collect();
        if s.iter().all(|v| *v > 0.0) {
            shifted.push(s);
        }
    }
    Ok(hv_recursive(shifted, m))
}

/// Hypervolume against the origin of points with positive coordinates,
/// slicing along the last objective.
fn hv_recursive(points: Vec<Vec<f64>>, m: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let keep = non_dominated_indices(&points.iter().map(|p| &p[..m]).collect::<Vec<_>>());
    let mut pts: Vec<Vec<f64>> = keep.into_iter().map(|i| points[i][..m].to_vec()).collect();
    match m {
        1 => pts.iter().map(|p| p[0]).fold(0.0, f64::max),
        2 => {
            pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
            let mut area = 0.0;
            let mut top = 0.0;
            for p in &pts {
                if p[1] > top {
                    area += p[0] * (p[1] - top);
                    top = p[1];
                }
            }
            area
        }
        _ => {
            let last = m - 1;
            pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
            let mut vol = 0.0;
            for i in 0..pts.len() {
                let next = if i + 1 < pts.len() { pts[i + 1][last] } else { 0.0 };
                let depth = pts[i][last] - next;
                if depth > 0.0 {
                    vol += depth * hv_recursive(pts[..=i].to_vec(), last);
                }
            }
            vol
        }
    }
}

/// Monte Carlo hypervolume: uniform samples in the box spanned by the
/// reference and the componentwise maximum. Returns the estimate and its
/// binomial standard error.
pub fn hypervolume_mc<R: Rng + ?Sized>(front: &FrontApproximation, n_samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    let r = &front.reference.values;
    let m = r.len();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in &front.points {
        check_len(m, p.len())?;
        if p.values.iter().zip(r).all(|(a, b)| a > b) {
            pts.push(p.values.clone());
        }
    }
    if pts.is_empty() || n_samples == 0 {
        return Ok((0.0, 0.0));
    }
    let keep = non_dominated_indices(&pts);
    let mut pts: Vec<Vec<f64>> = keep.into_iter().map(|i| pts[i].clone()).collect();
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
    let hi: Vec<f64> = (0..m).map(|j| pts.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let widths: Vec<f64> = hi.iter().zip(r).map(|(h, l)| h - l).collect();
    let vol: f64 = widths.iter().product();
    if !(vol > 0.0) {
        return Ok((0.0, 0.0));
    }
    let mut u = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        for j in 0..m {
            u[j] = r[j] + widths[j] * rng.random::<f64>();
        }
        for p in &pts {
            if p[0] < u[0] {
                break;
            }
            if p.iter().zip(&u).all(|(a, b)| a >= b) {
                hits += 1;
                break;
            }
        }
    }
    let frac = hits as f64 / n_samples as f64;
    let se = vol * (frac * (1.0 - frac) / n_samples as f64).sqrt();
    Ok((vol * frac, se))
}

/// Hypervolume after each record of the non-dominated set of true objective
/// vectors over every design shown so far.
pub fn running_hv_trace(dataset: &InteractionDataset, f: &dyn ObjectiveOracle, reference: &ObjectiveVector) -> Result<Vec<f64>> {
    let mut tracker = HvTracker::new(reference.values.clone())?;
    let mut out = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        for x in &r.query.designs {
            tracker.add(f.evaluate(x)?.values)?;
        }
        out.push(tracker.value());
    }
    Ok(out)
}

/// Incremental hypervolume of a growing point set.
#[derive(Debug, Clone)]
pub struct HvTracker {
    reference: Vec<f64>,
    front: Vec<Vec<f64>>,
    value: f64,
}

impl HvTracker {
    pub fn new(reference: Vec<f64>) -> Result<Self> {
        if reference.len() > MAX_EXACT_OBJECTIVES {
            return Err(Error::Unsupported(format!("hypervolume traces need m <= {MAX_EXACT_OBJECTIVES}")));
        }
        Ok(Self { reference, front: Vec::new(), value: 0.0 })
    }

    pub fn add(&mut self, y: Vec<f64>) -> Result<()> {
        check_len(self.reference.len(), y.len())?;
        if self.front.iter().any(|p| p.iter().zip(&y).all(|(a, b)| a >= b)) {
            return Ok(());
        }
        self.front.retain(|p| !p.iter().zip(&y).all(|(a, b)| a <= b));
        self.front.push(y);
        self.value = hypervolume(&self.front, &self.reference)?;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Current non-dominated points.
    pub fn front(&self) -> &[Vec<f64>] {
        &self.front
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        assert_eq!(hypervolume(&[[1.0, 1.0]], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&[[2.0, 1.0], [1.0, 2.0]], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(hypervolume::<[f64; 2]>(&[], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[[-1.0, 5.0]], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(hypervolume(&[[1.0; 5]], &[0.0; 5]), Err(Error::Unsupported(_))));
        // Unit cube plus an overlapping box: 1 + 2*1*1 - 1*1*1.
        let v = hypervolume(&[[1.0, 1.0, 1.0], [2.0, 1.0, 1.0]], &[0.0; 3]).unwrap();
        assert_eq!(v, 2.0);
        let v = hypervolume(&[[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]], &[0.0; 3]).unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn tracker_keeps_a_clean_front() {
        let mut t = HvTracker::new(vec![0.0, 0.0]).unwrap();
        t.add(vec![1.0, 1.0]).unwrap();
        t.add(vec![0.5, 0.5]).unwrap();
        assert_eq!(t.front().len(), 1);
        t.add(vec![2.0, 2.0]).unwrap();
        assert_eq!(t.front(), &[vec![2.0, 2.0]]);
        assert_eq!(t.value(), 4.0);
    }
}
