//! Generic NSGA-II machinery: dominance, non-dominated sorting, crowding
//! distance, crowded comparison and tournament selection, plus the
//! generational engine in [`engine`].

pub mod benchmarks;
pub mod engine;
pub mod metrics;
pub mod operators;
pub mod rng;

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{make_new_population, nsga2_step, run, Engine, EvolutionConfig, Problem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MooError {
    #[error("objective vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("objective vector contains a non-finite value")]
    NonFinite,
    #[error("individual {0} has not been evaluated and ranked")]
    Unevaluated(usize),
    #[error("population too small for a tournament: {0} member(s)")]
    PopulationTooSmall(usize),
    #[error("population sizes differ: parents {parents}, offspring {offspring}")]
    SizeMismatch { parents: usize, offspring: usize },
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("problem error: {0}")]
    Problem(String),
}

pub type Result<T> = std::result::Result<T, MooError>;

/// Minimisation objectives of one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(pub Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Self {
        ObjectiveVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for ObjectiveVector {
    fn from(v: Vec<f64>) -> Self {
        ObjectiveVector(v)
    }
}

impl std::ops::Index<usize> for ObjectiveVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// A genome together with its evaluation and NSGA-II bookkeeping.
///
/// `rank` is zero-based here: rank 0 is the Pareto front of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual<G> {
    pub genome: G,
    pub objectives: Option<ObjectiveVector>,
    pub rank: Option<usize>,
    #[serde(with = "crowding_serde", default)]
    pub crowding: Option<f64>,
    /// Set when the evaluation failed and sentinel objectives were assigned.
    #[serde(default)]
    pub failed: bool,
}

impl<G> Individual<G> {
    pub fn new(genome: G) -> Self {
        Individual {
            genome,
            objectives: None,
            rank: None,
            crowding: None,
            failed: false,
        }
    }

    pub fn objectives(&self) -> Option<&ObjectiveVector> {
        self.objectives.as_ref()
    }
}

// JSON has no infinity; boundary crowding is written as the string "inf".
mod crowding_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => Some(Repr::Text("inf".into())).serialize(s),
            Some(x) => Some(Repr::Num(*x)).serialize(s),
            None => None::<Repr>.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("bad crowding value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population<G> {
    pub members: Vec<Individual<G>>,
    pub generation: usize,
}

impl<G> Population<G> {
    pub fn new(members: Vec<Individual<G>>, generation: usize) -> Self {
        Population {
            members,
            generation,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Objective vectors of all members. Fails if any member is unevaluated.
    pub fn objectives(&self) -> Result<Vec<ObjectiveVector>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| m.objectives.clone().ok_or(MooError::Unevaluated(i)))
            .collect()
    }

    /// Members with rank 0.
    pub fn front(&self) -> impl Iterator<Item = &Individual<G>> {
        self.members.iter().filter(|m| m.rank == Some(0))
    }

    /// Recompute rank and crowding distance for every member.
    pub fn assign_rank_and_crowding(&mut self) -> Result<()> {
        let objs = self.objectives()?;
        let partition = fast_non_dominated_sort(&objs)?;
        for (rank, front) in partition.fronts.iter().enumerate() {
            let pts: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i].clone()).collect();
            let dist = crowding_distance(&pts);
            for (&i, d) in front.iter().zip(dist) {
                self.members[i].rank = Some(rank);
                self.members[i].crowding = Some(d);
            }
        }
        Ok(())
    }
}

/// Indices of the input grouped by level of non-domination.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrontPartition {
    pub fronts: Vec<Vec<usize>>,
}

impl FrontPartition {
    pub fn len(&self) -> usize {
        self.fronts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fronts.is_empty()
    }

    /// Zero-based rank of every input index.
    pub fn ranks(&self, n: usize) -> Vec<usize> {
        let mut ranks = vec![0; n];
        for (r, f) in self.fronts.iter().enumerate() {
            for &i in f {
                ranks[i] = r;
            }
        }
        ranks
    }
}

/// `a` dominates `b`: no worse in every objective and strictly better in one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    if a.len() != b.len() {
        return Err(MooError::LengthMismatch(a.len(), b.len()));
    }
    Ok(dominates_unchecked(&a.0, &b.0))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Deb's fast non-dominated sort. Indices inside each front are ascending.
pub fn fast_non_dominated_sort(objectives: &[ObjectiveVector]) -> Result<FrontPartition> {
    let n = objectives.len();
    if n == 0 {
        return Ok(FrontPartition::default());
    }
    let m = objectives[0].len();
    for o in objectives {
        if o.len() != m {
            return Err(MooError::LengthMismatch(m, o.len()));
        }
        if o.0.iter().any(|v| v.is_nan()) {
            return Err(MooError::NonFinite);
        }
    }

    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates_unchecked(&objectives[p].0, &objectives[q].0) {
                dominates_list[p].push(q);
                dominated_by_count[q] += 1;
            } else if dominates_unchecked(&objectives[q].0, &objectives[p].0) {
                dominates_list[q].push(p);
                dominated_by_count[p] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominates_list[p] {
                dominated_by_count[q] -= 1;
                if dominated_by_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(FrontPartition { fronts })
}

/// Crowding distance of each point of a single front.
///
/// Per objective, points holding the minimum or maximum value get +inf.
/// An interior point with a unique value adds the normalised gap between the
/// nearest distinct values above and below it; interior points that share
/// their value with another point add 0. An objective with zero range adds
/// nothing. Fronts of one or two points are all boundary points.
///
/// The result depends only on the multiset of points, not on input order.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..m {
        order.sort_by(|&a, &b| front[a][j].total_cmp(&front[b][j]));
        let lo = front[order[0]][j];
        let hi = front[order[n - 1]][j];
        let range = hi - lo;
        if range <= 0.0 || !range.is_finite() {
            continue;
        }
        // Walk groups of equal values.
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for &i in &order {
            let v = front[i][j];
            match groups.last_mut() {
                Some((gv, members)) if *gv == v => members.push(i),
                _ => groups.push((v, vec![i])),
            }
        }
        let last = groups.len() - 1;
        for (g, (_, members)) in groups.iter().enumerate() {
            if g == 0 || g == last {
                for &i in members {
                    dist[i] = f64::INFINITY;
                }
            } else if members.len() == 1 {
                let gap = (groups[g + 1].0 - groups[g - 1].0) / range;
                dist[members[0]] += gap;
            }
        }
    }
    dist
}

/// Crowded comparison. `Less` means `i` is preferred.
pub fn crowded_compare<G>(i: &Individual<G>, j: &Individual<G>) -> Result<Ordering> {
    let (ri, di) = match (i.rank, i.crowding) {
        (Some(r), Some(d)) => (r, d),
        _ => return Err(MooError::Unevaluated(0)),
    };
    let (rj, dj) = match (j.rank, j.crowding) {
        (Some(r), Some(d)) => (r, d),
        _ => return Err(MooError::Unevaluated(1)),
    };
    Ok(match ri.cmp(&rj) {
        Ordering::Equal => dj.partial_cmp(&di).unwrap_or(Ordering::Equal),
        o => o,
    })
}

/// Binary tournament on crowded comparison between two distinct members.
/// Returns the winner's index. Ties are settled by a coin flip from `rng`.
pub fn binary_tournament<G, R: Rng + ?Sized>(pop: &Population<G>, rng: &mut R) -> Result<usize> {
    let n = pop.len();
    if n < 2 {
        return Err(MooError::PopulationTooSmall(n));
    }
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let ord = crowded_compare(&pop.members[a], &pop.members[b]).map_err(|e| match e {
        MooError::Unevaluated(0) => MooError::Unevaluated(a),
        MooError::Unevaluated(_) => MooError::Unevaluated(b),
        e => e,
    })?;
    Ok(match ord {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    })
}
