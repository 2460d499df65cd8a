//! Pareto dominance under maximization.

use crate::error::{check_len, Error, Result};
use crate::types::{Design, DesignSpace, ObjectiveVector};

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn pareto_dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    check_len(a.len(), b.len())?;
    Ok(dominates(&a.values, &b.values))
}

/// Slice form of [`pareto_dominates`]; lengths must already agree.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the points no other point dominates. Copies of a
/// non-dominated value are all kept.
pub fn non_dominated_filter(points: &[ObjectiveVector]) -> Result<Vec<usize>> {
    let first = points.first().ok_or(Error::EmptySet("non_dominated_filter input"))?;
    for p in points {
        check_len(first.len(), p.len())?;
    }
    let rows: Vec<&[f64]> = points.iter().map(|p| p.values.as_slice()).collect();
    Ok(non_dominated_indices(&rows))
}

/// Slice form of [`non_dominated_filter`]; empty input gives an empty set.
pub fn non_dominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    // Visiting in lexicographically descending order means a point can only
    // be dominated by points already visited, and any dominated point is
    // dominated by some non-dominated one, so checking the kept set suffices.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i].as_ref(), points[j].as_ref());
        b.iter()
            .zip(a)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i].as_ref();
        if !kept.iter().any(|&k| dominates(points[k].as_ref(), p)) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Exact Pareto-optimal subset of a finite design space.
pub fn pareto_set_finite<F>(space: &DesignSpace, f: F) -> Result<Vec<Design>>
where
    F: Fn(&Design) -> Result<ObjectiveVector>,
{
    let DesignSpace::Finite { points } = space else {
        return Err(Error::Unsupported("Pareto set enumeration needs a finite design space".into()));
    };
    let values = points.iter().map(&f).collect::<Result<Vec<_>>>()?;
    Ok(non_dominated_filter(&values)?.into_iter().map(|i| points[i].clone()).collect())
}
