//! Designs, objective vectors, queries, responses and the interaction record.
//!
//! All values are plain immutable data. Serialized field names (`coords`,
//! `designs`, `winners`, `records`, `observations`) are shared by the trace
//! files and the session API. Winner indices are 1-based on the wire and in
//! memory; use [`Response::winner_slot`] for a 0-based slot.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Coordinate tolerance used when deciding that two designs coincide.
pub const COORD_TOL: f64 = 1e-12;

/// A point of the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub coords: Vec<f64>,
}

impl Design {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinate-wise equality within [`COORD_TOL`].
    pub fn same_as(&self, other: &Design) -> bool {
        self.coords.len() == other.coords.len()
            && self.coords.iter().zip(&other.coords).all(|(a, b)| (a - b).abs() <= COORD_TOL)
    }
}

impl From<Vec<f64>> for Design {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

/// Objective values of one design. Every objective is maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite objective value {v}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<f64>> for ObjectiveVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// The space designs are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpace {
    ContinuousBox { bounds: Vec<(f64, f64)> },
    Finite { points: Vec<Design> },
}

impl DesignSpace {
    /// The unit box `[0,1]^dim`.
    pub fn unit_box(dim: usize) -> Result<Self> {
        Self::continuous(vec![(0.0, 1.0); dim])
    }

    pub fn continuous(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let space = DesignSpace::ContinuousBox { bounds };
        space.validate()?;
        Ok(space)
    }

    pub fn finite(points: Vec<Design>) -> Result<Self> {
        let space = DesignSpace::Finite { points };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesignSpace::ContinuousBox { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::Config("design space needs d >= 1".into()));
                }
                for (i, (lo, hi)) in bounds.iter().enumerate() {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::Config(format!("bad bounds [{lo}, {hi}] at coordinate {i}")));
                    }
                }
            }
            DesignSpace::Finite { points } => {
                let first = points.first().ok_or(Error::EmptySet("finite design space"))?;
                if first.dim() == 0 {
                    return Err(Error::Config("design space needs d >= 1".into()));
                }
                for (i, p) in points.iter().enumerate() {
                    check_len(first.dim(), p.dim())?;
                    if points[..i].iter().any(|o| o.same_as(p)) {
                        return Err(Error::Config(format!("duplicate design at index {i}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpace::ContinuousBox { bounds } => bounds.len(),
            DesignSpace::Finite { points } => points[0].dim(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, DesignSpace::Finite { .. })
    }

    pub fn contains(&self, x: &Design) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        match self {
            DesignSpace::ContinuousBox { bounds } => x
                .coords
                .iter()
                .zip(bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
            DesignSpace::Finite { points } => points.iter().any(|p| p.same_as(x)),
        }
    }

    pub fn check(&self, x: &Design) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{:?} not in design space", x.coords)))
        }
    }

    /// Uniform draw from the space.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Design {
        match self {
            DesignSpace::ContinuousBox { bounds } => {
                Design::new(bounds.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect())
            }
            DesignSpace::Finite { points } => points[rng.random_range(0..points.len())].clone(),
        }
    }

    /// Clamp into a continuous box; no-op for finite spaces.
    pub fn clamp(&self, coords: &mut [f64]) {
        if let DesignSpace::ContinuousBox { bounds } = self {
            for (v, (lo, hi)) in coords.iter_mut().zip(bounds) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }
}

/// `q >= 2` designs shown together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub designs: Vec<Design>,
}

impl Query {
    pub fn new(designs: Vec<Design>) -> Result<Self> {
        let q = Query { designs };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.len() < 2 {
            return Err(Error::Config(format!("a query needs q >= 2 designs, got {}", self.designs.len())));
        }
        let d = self.designs[0].dim();
        for x in &self.designs {
            check_len(d, x.dim())?;
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.designs.len()
    }
}

/// Per-objective winners. Entries are 1-based indices into the query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub winners: Vec<usize>,
}

impl Response {
    /// Build from 1-based winners, checking every entry lies in `1..=q`.
    pub fn new(winners: Vec<usize>, q: usize) -> Result<Self> {
        for &w in &winners {
            if w == 0 || w > q {
                return Err(Error::Index { index: w, max: q });
            }
        }
        Ok(Self { winners })
    }

    /// Build from 0-based slots.
    pub fn from_slots(slots: &[usize], q: usize) -> Result<Self> {
        Self::new(slots.iter().map(|s| s + 1).collect(), q)
    }

    /// 0-based query slot that won objective position `k`.
    pub fn winner_slot(&self, k: usize) -> usize {
        self.winners[k] - 1
    }
}

/// One interaction: the query shown and the preferences it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub query: Query,
    pub response: Response,
}

/// A direct (noisy) measurement of an observable objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub design: Design,
    pub value: f64,
}

/// Everything learned so far.
///
/// `latent` lists the objective indices that are observed through
/// preferences; response `winners` are ordered like `latent`. Observable
/// objectives keep their measurements in `observations`, keyed by objective
/// index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub num_objectives: usize,
    pub latent: Vec<usize>,
    pub records: Vec<Record>,
    #[serde(default)]
    pub observations: BTreeMap<usize, Vec<Observation>>,
}

impl InteractionDataset {
    /// Dataset where every objective is latent.
    pub fn all_latent(num_objectives: usize) -> Self {
        Self {
            num_objectives,
            latent: (0..num_objectives).collect(),
            records: Vec::new(),
            observations: BTreeMap::new(),
        }
    }

    /// Dataset with the given objectives observable and the rest latent.
    pub fn with_observable(num_objectives: usize, observable: &[usize]) -> Result<Self> {
        if let Some(&j) = observable.iter().find(|&&j| j >= num_objectives) {
            return Err(Error::Index { index: j + 1, max: num_objectives });
        }
        let latent = (0..num_objectives).filter(|j| !observable.contains(j)).collect();
        let observations = observable.iter().map(|&j| (j, Vec::new())).collect();
        Ok(Self { num_objectives, latent, records: Vec::new(), observations })
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn q(&self) -> Option<usize> {
        self.records.first().map(|r| r.query.q())
    }

    /// Position of objective `j` inside `latent`, if it is latent.
    pub fn latent_position(&self, j: usize) -> Option<usize> {
        self.latent.iter().position(|&l| l == j)
    }

    /// Append a record, enforcing shared `q` and response length.
    pub fn push(&mut self, query: Query, response: Response) -> Result<()> {
        query.validate()?;
        if let Some(q) = self.q() {
            check_len(q, query.q())?;
        }
        check_len(self.latent.len(), response.winners.len())?;
        let response = Response::new(response.winners, query.q())?;
        self.records.push(Record { query, response });
        Ok(())
    }

    pub fn observe(&mut self, objective: usize, design: Design, value: f64) -> Result<()> {
        let obs = self
            .observations
            .get_mut(&objective)
            .ok_or_else(|| Error::Config(format!("objective {objective} is not observable")))?;
        obs.push(Observation { design, value });
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for &j in self.observations.keys() {
            if self.latent.contains(&j) {
                return Err(Error::Data(format!("objective {j} is both latent and observable")));
            }
        }
        if let Some(q) = self.q() {
            for r in &self.records {
                check_len(q, r.query.q())?;
                check_len(self.latent.len(), r.response.winners.len())?;
                Response::new(r.response.winners.clone(), q)?;
            }
        }
        Ok(())
    }

    /// All designs shown so far, in presentation order (duplicates kept).
    pub fn shown_designs(&self) -> Vec<&Design> {
        self.records.iter().flat_map(|r| r.query.designs.iter()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_rejects_out_of_range() {
        assert!(Response::new(vec![1, 2], 2).is_ok());
        assert!(matches!(Response::new(vec![0], 2), Err(Error::Index { .. })));
        assert!(matches!(Response::new(vec![5], 2), Err(Error::Index { index: 5, max: 2 })));
    }

    #[test]
    fn query_needs_two_designs() {
        assert!(Query::new(vec![Design::new(vec![0.1])]).is_err());
        assert!(Query::new(vec![Design::new(vec![0.1]), Design::new(vec![0.1, 0.2])]).is_err());
    }

    #[test]
    fn finite_space_rejects_duplicates() {
        let p = Design::new(vec![0.5]);
        assert!(DesignSpace::finite(vec![p.clone(), p]).is_err());
        assert!(DesignSpace::finite(vec![]).is_err());
        assert!(DesignSpace::continuous(vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn dataset_serializes_with_canonical_names() {
        let mut ds = InteractionDataset::all_latent(2);
        let q = Query::new(vec![Design::new(vec![0.1]), Design::new(vec![0.9])]).unwrap();
        ds.push(q, Response::new(vec![1, 2], 2).unwrap()).unwrap();
        let json = serde_json::to_string(&ds).unwrap();
        for key in ["\"records\"", "\"designs\"", "\"coords\"", "\"winners\"", "\"observations\""] {
            assert!(json.contains(key), "{key} missing in {json}");
        }
        let back: InteractionDataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dataset_enforces_shared_q_and_m() {
        let mut ds = InteractionDataset::all_latent(2);
        let q2 = Query::new(vec![Design::new(vec![0.1]), Design::new(vec![0.9])]).unwrap();
        ds.push(q2.clone(), Response::new(vec![1, 1], 2).unwrap()).unwrap();
        assert!(ds.push(q2.clone(), Response::new(vec![1], 2).unwrap()).is_err());
        let q3 = Query::new(vec![Design::new(vec![0.1]); 3]).unwrap();
        assert!(ds.push(q3, Response::new(vec![1, 1], 3).unwrap()).is_err());
    }

    #[test]
    fn observable_split_is_disjoint() {
        let ds = InteractionDataset::with_observable(3, &[1]).unwrap();
        assert_eq!(ds.latent, vec![0, 2]);
        assert!(ds.validate().is_ok());
        assert!(InteractionDataset::with_observable(2, &[2]).is_err());
    }
}
