//! The scheduler's tunable parameters as a mixed-type genome.
//!
//! Parameters are encoded as a flat `Vec<f64>` (one slot per gene, booleans
//! and categoricals as small integers) so the variation operators can work
//! gene-by-gene against a [`GenomeSpec`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moo::operators::{polynomial_mutation, sbx_pair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("{field} = {value} is outside [{lo}, {hi}]")]
    OutOfBounds {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{field} must be non-decreasing")]
    Unordered { field: String },
    #[error("unknown gene {0:?}")]
    UnknownGene(String),
    #[error("genome layout mismatch: {0}")]
    Layout(String),
    #[error("invalid bounds for {0}")]
    InvalidBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLevel {
    Computer,
    Cluster,
    Whole,
}

impl EntityLevel {
    pub const ALL: [EntityLevel; 3] = [EntityLevel::Computer, EntityLevel::Cluster, EntityLevel::Whole];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPolicy {
    Days,
    Previous,
    Ratio,
    Hit,
}

impl EpsilonPolicy {
    pub const ALL: [EpsilonPolicy; 4] = [
        EpsilonPolicy::Days,
        EpsilonPolicy::Previous,
        EpsilonPolicy::Ratio,
        EpsilonPolicy::Hit,
    ];
}

/// Decoded genome: every tuning knob of the epsilon-greedy scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlParameterSet {
    /// State space per hour of week instead of hour of day.
    pub week: bool,
    pub entity_level: EntityLevel,
    pub epsilon_policy: EpsilonPolicy,
    /// Day thresholds for the `days` policy, non-decreasing.
    pub ranges: [i64; 3],
    /// Reward thresholds for the reward-driven policies, non-decreasing.
    pub reward_boundaries: [f64; 3],
    pub epsilon_levels: [f64; 3],
    /// Weight of computer energy efficiency in the reward.
    pub sigma: f64,
    /// Number of initial days during which `delta` is added (0 = off).
    pub days: i64,
    pub delta: f64,
    /// Reward window per action; -1 keeps everything.
    pub history: i64,
    pub gaussian: bool,
    pub prior: bool,
    pub threshold: f64,
    pub defer: bool,
}

impl Default for RlParameterSet {
    fn default() -> Self {
        RlParameterSet {
            week: false,
            entity_level: EntityLevel::Cluster,
            epsilon_policy: EpsilonPolicy::Previous,
            ranges: [7, 14, 21],
            reward_boundaries: [-0.5, 0.0, 0.5],
            epsilon_levels: [0.3, 0.2, 0.1],
            sigma: 0.5,
            days: 0,
            delta: 0.0,
            history: 50,
            gaussian: false,
            prior: false,
            threshold: 0.5,
            defer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneKind {
    Boolean,
    Categorical { values: Vec<String> },
    Integer { lo: i64, hi: i64 },
    Continuous { lo: f64, hi: f64 },
}

impl GeneKind {
    fn bounds(&self) -> (f64, f64) {
        match self {
            GeneKind::Boolean => (0.0, 1.0),
            GeneKind::Categorical { values } => (0.0, (values.len().max(1) - 1) as f64),
            GeneKind::Integer { lo, hi } => (*lo as f64, *hi as f64),
            GeneKind::Continuous { lo, hi } => (*lo, *hi),
        }
    }

    fn is_discrete(&self) -> bool {
        !matches!(self, GeneKind::Continuous { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpec {
    pub name: String,
    pub kind: GeneKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeSpec {
    pub genes: Vec<GeneSpec>,
    /// Gene index groups whose values must be non-decreasing.
    pub ordered_groups: Vec<Vec<usize>>,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
}

const RL_GENE_NAMES: [&str; 20] = [
    "week",
    "entity_level",
    "epsilon_policy",
    "ranges_1",
    "ranges_2",
    "ranges_3",
    "reward_boundaries_1",
    "reward_boundaries_2",
    "reward_boundaries_3",
    "epsilon_levels_1",
    "epsilon_levels_2",
    "epsilon_levels_3",
    "sigma",
    "days",
    "delta",
    "history",
    "gaussian",
    "prior",
    "threshold",
    "defer",
];

fn gene(name: &str, kind: GeneKind) -> GeneSpec {
    GeneSpec {
        name: name.to_string(),
        kind,
    }
}

impl GenomeSpec {
    pub fn new(genes: Vec<GeneSpec>, ordered_groups: Vec<Vec<usize>>) -> Result<Self, GenomeError> {
        let spec = GenomeSpec {
            genes,
            ordered_groups,
            sbx_eta: 15.0,
            mutation_eta: 20.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The scheduler parameter space.
    pub fn rl_default() -> Self {
        let boolean = || GeneKind::Boolean;
        let unit = || GeneKind::Continuous { lo: 0.0, hi: 1.0 };
        let ranges = || GeneKind::Integer { lo: 0, hi: 999_999 };
        let reward = || GeneKind::Continuous { lo: -1.0, hi: 1.0 };
        let genes = vec![
            gene("week", boolean()),
            gene(
                "entity_level",
                GeneKind::Categorical {
                    values: vec!["computer".into(), "cluster".into(), "whole".into()],
                },
            ),
            gene(
                "epsilon_policy",
                GeneKind::Categorical {
                    values: vec!["days".into(), "previous".into(), "ratio".into(), "hit".into()],
                },
            ),
            gene("ranges_1", ranges()),
            gene("ranges_2", ranges()),
            gene("ranges_3", ranges()),
            gene("reward_boundaries_1", reward()),
            gene("reward_boundaries_2", reward()),
            gene("reward_boundaries_3", reward()),
            gene("epsilon_levels_1", unit()),
            gene("epsilon_levels_2", unit()),
            gene("epsilon_levels_3", unit()),
            gene("sigma", unit()),
            gene("days", GeneKind::Integer { lo: 0, hi: 365 }),
            gene("delta", unit()),
            gene("history", GeneKind::Integer { lo: -1, hi: 999_999 }),
            gene("gaussian", boolean()),
            gene("prior", boolean()),
            gene("threshold", unit()),
            gene("defer", boolean()),
        ];
        GenomeSpec {
            genes,
            ordered_groups: vec![vec![3, 4, 5], vec![6, 7, 8]],
            sbx_eta: 15.0,
            mutation_eta: 20.0,
        }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.genes.iter().position(|g| g.name == name)
    }

    pub fn validate(&self) -> Result<(), GenomeError> {
        for g in &self.genes {
            let ok = match &g.kind {
                GeneKind::Boolean => true,
                GeneKind::Categorical { values } => !values.is_empty(),
                GeneKind::Integer { lo, hi } => lo <= hi,
                GeneKind::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            };
            if !ok {
                return Err(GenomeError::InvalidBounds(g.name.clone()));
            }
        }
        for group in &self.ordered_groups {
            if group.iter().any(|&i| i >= self.genes.len()) {
                return Err(GenomeError::Layout("ordering group references a missing gene".into()));
            }
        }
        Ok(())
    }

    /// Narrow the bounds of a numeric gene. A triple's base name
    /// (`ranges`, `reward_boundaries`, `epsilon_levels`) applies to all three.
    pub fn override_bounds(&mut self, name: &str, lo: f64, hi: f64) -> Result<(), GenomeError> {
        let targets: Vec<usize> = match self.index_of(name) {
            Some(i) => vec![i],
            None => (1..=3)
                .filter_map(|k| self.index_of(&format!("{name}_{k}")))
                .collect(),
        };
        if targets.is_empty() {
            return Err(GenomeError::UnknownGene(name.to_string()));
        }
        if !(lo <= hi) {
            return Err(GenomeError::InvalidBounds(name.to_string()));
        }
        for i in targets {
            let g = &mut self.genes[i];
            g.kind = match g.kind {
                GeneKind::Integer { .. } => GeneKind::Integer {
                    lo: lo.ceil() as i64,
                    hi: hi.floor() as i64,
                },
                GeneKind::Continuous { .. } => GeneKind::Continuous { lo, hi },
                _ => return Err(GenomeError::InvalidBounds(g.name.clone())),
            };
        }
        self.validate()
    }

    fn check_rl_layout(&self) -> Result<(), GenomeError> {
        let names: Vec<&str> = self.genes.iter().map(|g| g.name.as_str()).collect();
        if names != RL_GENE_NAMES {
            return Err(GenomeError::Layout(
                "spec does not describe the scheduler parameter set".into(),
            ));
        }
        Ok(())
    }
}

fn category_index<T: PartialEq>(all: &[T], v: &T) -> f64 {
    all.iter().position(|x| x == v).unwrap_or(0) as f64
}

/// Flatten to one value per gene in the `GenomeSpec` gene order.
pub fn encode(p: &RlParameterSet) -> Vec<f64> {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    let mut out = vec![
        b(p.week),
        category_index(&EntityLevel::ALL, &p.entity_level),
        category_index(&EpsilonPolicy::ALL, &p.epsilon_policy),
    ];
    out.extend(p.ranges.iter().map(|&r| r as f64));
    out.extend(p.reward_boundaries);
    out.extend(p.epsilon_levels);
    out.extend([
        p.sigma,
        p.days as f64,
        p.delta,
        p.history as f64,
        b(p.gaussian),
        b(p.prior),
        p.threshold,
        b(p.defer),
    ]);
    out
}

/// Inverse of [`encode`]; checks bounds and ordering against `spec`.
pub fn decode(spec: &GenomeSpec, raw: &[f64]) -> Result<RlParameterSet, GenomeError> {
    spec.check_rl_layout()?;
    if raw.len() != spec.len() {
        return Err(GenomeError::Layout(format!(
            "expected {} genes, got {}",
            spec.len(),
            raw.len()
        )));
    }
    for (g, &v) in spec.genes.iter().zip(raw) {
        let (lo, hi) = g.kind.bounds();
        let integral = !g.kind.is_discrete() || v.fract() == 0.0;
        if !(lo..=hi).contains(&v) || !integral {
            return Err(GenomeError::OutOfBounds {
                field: g.name.clone(),
                value: v,
                lo,
                hi,
            });
        }
    }
    let p = RlParameterSet {
        week: raw[0] != 0.0,
        entity_level: EntityLevel::ALL[raw[1] as usize],
        epsilon_policy: EpsilonPolicy::ALL[raw[2] as usize],
        ranges: [raw[3] as i64, raw[4] as i64, raw[5] as i64],
        reward_boundaries: [raw[6], raw[7], raw[8]],
        epsilon_levels: [raw[9], raw[10], raw[11]],
        sigma: raw[12],
        days: raw[13] as i64,
        delta: raw[14],
        history: raw[15] as i64,
        gaussian: raw[16] != 0.0,
        prior: raw[17] != 0.0,
        threshold: raw[18],
        defer: raw[19] != 0.0,
    };
    for group in &spec.ordered_groups {
        if group.windows(2).any(|w| raw[w[0]] > raw[w[1]]) {
            let name = &spec.genes[group[0]].name;
            let field = name.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_');
            return Err(GenomeError::Unordered {
                field: field.to_string(),
            });
        }
    }
    Ok(p)
}

/// Check a parameter set against a `GenomeSpec`, naming the first offending field.
pub fn validate(spec: &GenomeSpec, p: &RlParameterSet) -> Result<(), GenomeError> {
    decode(spec, &encode(p)).map(|_| ())
}

/// Clamp every gene into its bounds (rounding discrete genes) and sort each
/// ordering group ascending. Idempotent.
pub fn repair_raw(spec: &GenomeSpec, raw: &mut [f64]) {
    for (g, v) in spec.genes.iter().zip(raw.iter_mut()) {
        let (lo, hi) = g.kind.bounds();
        let x = if v.is_nan() { lo } else { *v };
        let x = if g.kind.is_discrete() { x.round() } else { x };
        *v = x.clamp(lo, hi);
    }
    for group in &spec.ordered_groups {
        let mut vals: Vec<f64> = group.iter().map(|&i| raw[i]).collect();
        vals.sort_by(f64::total_cmp);
        for (&i, v) in group.iter().zip(vals) {
            raw[i] = v;
        }
    }
}

pub fn repair(spec: &GenomeSpec, mut raw: Vec<f64>) -> Result<RlParameterSet, GenomeError> {
    repair_raw(spec, &mut raw);
    decode(spec, &raw)
}

pub fn sample_raw<R: Rng + ?Sized>(spec: &GenomeSpec, rng: &mut R) -> Vec<f64> {
    let mut raw: Vec<f64> = spec
        .genes
        .iter()
        .map(|g| match &g.kind {
            GeneKind::Boolean => rng.gen_range(0..2) as f64,
            GeneKind::Categorical { values } => rng.gen_range(0..values.len()) as f64,
            GeneKind::Integer { lo, hi } => rng.gen_range(*lo..=*hi) as f64,
            GeneKind::Continuous { lo, hi } => {
                if lo < hi {
                    rng.gen_range(*lo..=*hi)
                } else {
                    *lo
                }
            }
        })
        .collect();
    repair_raw(spec, &mut raw);
    raw
}

pub fn crossover_raw<R: Rng + ?Sized>(
    spec: &GenomeSpec,
    a: &[f64],
    b: &[f64],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for (i, g) in spec.genes.iter().enumerate() {
        match &g.kind {
            GeneKind::Boolean | GeneKind::Categorical { .. } => {
                if rng.gen_bool(0.5) {
                    c1[i] = b[i];
                    c2[i] = a[i];
                }
            }
            GeneKind::Integer { .. } | GeneKind::Continuous { .. } => {
                let (lo, hi) = g.kind.bounds();
                let (u, v) = sbx_pair(a[i], b[i], lo, hi, spec.sbx_eta, rng);
                c1[i] = u;
                c2[i] = v;
            }
        }
    }
    repair_raw(spec, &mut c1);
    repair_raw(spec, &mut c2);
    (c1, c2)
}

pub fn mutate_raw<R: Rng + ?Sized>(spec: &GenomeSpec, x: &[f64], rate: f64, rng: &mut R) -> Vec<f64> {
    let mut out = x.to_vec();
    for (i, g) in spec.genes.iter().enumerate() {
        if !rng.gen_bool(rate) {
            continue;
        }
        out[i] = match &g.kind {
            GeneKind::Boolean => 1.0 - x[i],
            GeneKind::Categorical { values } => {
                if values.len() < 2 {
                    x[i]
                } else {
                    let k = rng.gen_range(0..values.len() - 1);
                    let k = if k as f64 >= x[i] { k + 1 } else { k };
                    k as f64
                }
            }
            GeneKind::Integer { lo, hi } => {
                let max_step = ((hi - lo) / 10).max(1);
                let step = rng.gen_range(1..=max_step);
                let signed = if rng.gen_bool(0.5) { step } else { -step };
                (x[i] as i64 + signed).clamp(*lo, *hi) as f64
            }
            GeneKind::Continuous { lo, hi } => {
                polynomial_mutation(x[i], *lo, *hi, spec.mutation_eta, rng)
            }
        };
    }
    repair_raw(spec, &mut out);
    out
}

pub fn sample<R: Rng + ?Sized>(spec: &GenomeSpec, rng: &mut R) -> Result<RlParameterSet, GenomeError> {
    decode(spec, &sample_raw(spec, rng))
}

pub fn crossover<R: Rng + ?Sized>(
    spec: &GenomeSpec,
    a: &RlParameterSet,
    b: &RlParameterSet,
    rng: &mut R,
) -> Result<(RlParameterSet, RlParameterSet), GenomeError> {
    let (c1, c2) = crossover_raw(spec, &encode(a), &encode(b), rng);
    Ok((decode(spec, &c1)?, decode(spec, &c2)?))
}

pub fn mutate<R: Rng + ?Sized>(
    spec: &GenomeSpec,
    x: &RlParameterSet,
    rate: f64,
    rng: &mut R,
) -> Result<RlParameterSet, GenomeError> {
    decode(spec, &mutate_raw(spec, &encode(x), rate, rng))
}

/// Approximate number of distinct genomes when every continuous gene is
/// discretised into `discretisation` values. Ordered groups count
/// combinations with repetition.
pub fn space_size(spec: &GenomeSpec, discretisation: u64) -> f64 {
    let cardinality = |g: &GeneSpec| -> f64 {
        match &g.kind {
            GeneKind::Boolean => 2.0,
            GeneKind::Categorical { values } => values.len() as f64,
            GeneKind::Integer { lo, hi } => (hi - lo + 1) as f64,
            GeneKind::Continuous { .. } => discretisation as f64,
        }
    };
    let grouped: Vec<usize> = spec.ordered_groups.iter().flatten().copied().collect();
    let mut total = 1.0;
    for (i, g) in spec.genes.iter().enumerate() {
        if !grouped.contains(&i) {
            total *= cardinality(g);
        }
    }
    for group in &spec.ordered_groups {
        let n = group
            .iter()
            .map(|&i| cardinality(&spec.genes[i]))
            .fold(f64::INFINITY, f64::min);
        // C(n + k - 1, k)
        let k = group.len();
        let mut c = 1.0;
        for i in 0..k {
            c *= (n + i as f64) / (i as f64 + 1.0);
        }
        total *= c;
    }
    total
}
