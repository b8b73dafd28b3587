//! The NSGA-II generational loop.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::hypervolume;
use super::rng::{derive_seed, stream, STREAM_EVALUATION, STREAM_INIT, STREAM_VARIATION};
use super::{
    binary_tournament, crowding_distance, fast_non_dominated_sort, Individual, MooError,
    ObjectiveVector, Population, Result,
};

/// A problem the engine can optimise. All methods must be deterministic given
/// their RNG or seed argument.
pub trait Problem: Sync {
    type Genome: Clone + Send + Sync;

    fn num_objectives(&self) -> usize;

    /// Draw a random genome within bounds.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Genome;

    fn crossover<R: Rng + ?Sized>(
        &self,
        a: &Self::Genome,
        b: &Self::Genome,
        rng: &mut R,
    ) -> (Self::Genome, Self::Genome);

    /// Mutate each gene independently with probability `rate`.
    fn mutate<R: Rng + ?Sized>(&self, x: &Self::Genome, rate: f64, rng: &mut R) -> Self::Genome;

    /// Evaluate a genome. `seed` is an independent stream for any randomness
    /// inside the evaluation. Errors are recorded, not propagated.
    fn evaluate(&self, x: &Self::Genome, seed: u64) -> std::result::Result<ObjectiveVector, String>;
}

fn default_stall_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub seed: u64,
    /// Stop early when front-0 hypervolume has not improved over this many
    /// generations.
    #[serde(default)]
    pub stall_window: Option<usize>,
    /// Relative hypervolume gain that counts as an improvement.
    #[serde(default = "default_stall_tolerance")]
    pub stall_tolerance: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 24,
            generations: 30,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            seed: 1,
            stall_window: None,
            stall_tolerance: default_stall_tolerance(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MooError::InvalidConfig(m));
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return bad(format!(
                "population_size must be an even number >= 4, got {}",
                self.population_size
            ));
        }
        if self.generations == 0 {
            return bad("generations must be positive".into());
        }
        for (name, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.stall_window == Some(0) {
            return bad("stall_window must be positive when set".into());
        }
        Ok(())
    }
}

/// Produce `N` offspring genomes by tournament selection, crossover and
/// mutation. The returned population is unevaluated.
pub fn make_new_population<P: Problem, R: Rng + ?Sized>(
    parents: &Population<P::Genome>,
    problem: &P,
    config: &EvolutionConfig,
    rng: &mut R,
) -> Result<Population<P::Genome>> {
    let n = config.population_size;
    let mut offspring = Vec::with_capacity(n);
    while offspring.len() < n {
        let a = binary_tournament(parents, rng)?;
        let b = binary_tournament(parents, rng)?;
        let (ga, gb) = (&parents.members[a].genome, &parents.members[b].genome);
        let (c1, c2) = if rng.gen_bool(config.crossover_rate) {
            problem.crossover(ga, gb, rng)
        } else {
            (ga.clone(), gb.clone())
        };
        offspring.push(Individual::new(problem.mutate(&c1, config.mutation_rate, rng)));
        if offspring.len() < n {
            offspring.push(Individual::new(problem.mutate(&c2, config.mutation_rate, rng)));
        }
    }
    Ok(Population::new(offspring, parents.generation + 1))
}

/// Environmental selection: merge parents and offspring, admit whole fronts
/// while they fit, then fill the rest from the straddling front by descending
/// crowding distance.
pub fn nsga2_step<G: Clone>(
    parents: &Population<G>,
    offspring: &Population<G>,
    config: &EvolutionConfig,
) -> Result<Population<G>> {
    let n = config.population_size;
    if parents.len() != n || offspring.len() != n {
        return Err(MooError::SizeMismatch {
            parents: parents.len(),
            offspring: offspring.len(),
        });
    }
    let merged: Vec<&Individual<G>> = parents.members.iter().chain(&offspring.members).collect();
    let objs: Vec<ObjectiveVector> = merged
        .iter()
        .enumerate()
        .map(|(i, m)| m.objectives.clone().ok_or(MooError::Unevaluated(i)))
        .collect::<Result<_>>()?;
    let partition = fast_non_dominated_sort(&objs)?;

    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for front in &partition.fronts {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            if chosen.len() == n {
                break;
            }
            continue;
        }
        let pts: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i].clone()).collect();
        let dist = crowding_distance(&pts);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
        let room = n - chosen.len();
        chosen.extend(order.into_iter().take(room).map(|k| front[k]));
        break;
    }

    let members = chosen.into_iter().map(|i| merged[i].clone()).collect();
    let mut next = Population::new(members, parents.generation.max(offspring.generation));
    next.assign_rank_and_crowding()?;
    Ok(next)
}

/// Resumable engine state: everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState<G> {
    pub population: Population<G>,
    /// Per-objective worst value among successful evaluations so far.
    pub worst_seen: Option<Vec<f64>>,
    /// Hypervolume reference point, fixed from the initial population.
    pub hv_reference: Vec<f64>,
    /// Front-0 hypervolume after each generation, starting with generation 0.
    pub hv_history: Vec<f64>,
    pub failed_evaluations: usize,
}

pub struct Engine<'p, P: Problem> {
    problem: &'p P,
    config: EvolutionConfig,
    pool: Option<rayon::ThreadPool>,
    state: EngineState<P::Genome>,
}

impl<'p, P: Problem> Engine<'p, P> {
    /// Sample, evaluate and rank generation 0 on `jobs` worker threads.
    pub fn initialize(problem: &'p P, config: EvolutionConfig, jobs: usize) -> Result<Self> {
        config.validate()?;
        let pool = build_pool(jobs)?;
        let mut rng = stream(config.seed, STREAM_INIT, 0, 0);
        let genomes: Vec<P::Genome> = (0..config.population_size)
            .map(|_| problem.sample(&mut rng))
            .collect();
        let mut population = Population::new(genomes.into_iter().map(Individual::new).collect(), 0);
        let mut state = EngineState {
            population: Population::new(Vec::new(), 0),
            worst_seen: None,
            hv_reference: Vec::new(),
            hv_history: Vec::new(),
            failed_evaluations: 0,
        };
        evaluate_population(problem, &config, pool.as_ref(), &mut population, &mut state)?;
        population.assign_rank_and_crowding()?;
        state.hv_reference = reference_point(&population.objectives()?);
        state.population = population;
        let hv = front_hypervolume(&state.population, &state.hv_reference)?;
        state.hv_history.push(hv);
        Ok(Engine {
            problem,
            config,
            pool,
            state,
        })
    }

    /// Continue from a saved state.
    pub fn resume(
        problem: &'p P,
        config: EvolutionConfig,
        state: EngineState<P::Genome>,
        jobs: usize,
    ) -> Result<Self> {
        config.validate()?;
        if state.population.len() != config.population_size {
            return Err(MooError::InvalidConfig(format!(
                "saved population has {} members, config expects {}",
                state.population.len(),
                config.population_size
            )));
        }
        Ok(Engine {
            problem,
            config,
            pool: build_pool(jobs)?,
            state,
        })
    }

    pub fn population(&self) -> &Population<P::Genome> {
        &self.state.population
    }

    pub fn state(&self) -> &EngineState<P::Genome> {
        &self.state
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn generation(&self) -> usize {
        self.state.population.generation
    }

    pub fn is_done(&self) -> bool {
        if self.generation() >= self.config.generations {
            return true;
        }
        match self.config.stall_window {
            Some(x) => {
                let h = &self.state.hv_history;
                h.len() > x && {
                    let now = h[h.len() - 1];
                    let then = h[h.len() - 1 - x];
                    now <= then + self.config.stall_tolerance * then.abs().max(1e-300)
                }
            }
            None => false,
        }
    }

    /// Run one generation: variation, evaluation, environmental selection.
    pub fn step(&mut self) -> Result<&Population<P::Genome>> {
        let next_gen = self.generation() + 1;
        let mut rng = stream(self.config.seed, STREAM_VARIATION, next_gen as u64, 0);
        let mut offspring =
            make_new_population(&self.state.population, self.problem, &self.config, &mut rng)?;
        evaluate_population(
            self.problem,
            &self.config,
            self.pool.as_ref(),
            &mut offspring,
            &mut self.state,
        )?;
        let next = nsga2_step(&self.state.population, &offspring, &self.config)?;
        self.state.population = next;
        let hv = front_hypervolume(&self.state.population, &self.state.hv_reference)?;
        self.state.hv_history.push(hv);
        Ok(&self.state.population)
    }
}

/// Run to termination and return every generation's population, starting
/// with the initial one.
pub fn run<P: Problem>(
    problem: &P,
    config: &EvolutionConfig,
    jobs: usize,
) -> Result<Vec<Population<P::Genome>>> {
    let mut engine = Engine::initialize(problem, config.clone(), jobs)?;
    let mut history = vec![engine.population().clone()];
    while !engine.is_done() {
        history.push(engine.step()?.clone());
    }
    Ok(history)
}

fn build_pool(jobs: usize) -> Result<Option<rayon::ThreadPool>> {
    if jobs <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map(Some)
        .map_err(|e| MooError::InvalidConfig(format!("thread pool: {e}")))
}

fn evaluate_population<P: Problem>(
    problem: &P,
    config: &EvolutionConfig,
    pool: Option<&rayon::ThreadPool>,
    population: &mut Population<P::Genome>,
    state: &mut EngineState<P::Genome>,
) -> Result<()> {
    let generation = population.generation as u64;
    let m = problem.num_objectives();
    let eval = |(i, ind): (usize, &Individual<P::Genome>)| {
        let seed = derive_seed(config.seed, STREAM_EVALUATION, generation, i as u64);
        problem
            .evaluate(&ind.genome, seed)
            .and_then(|o| {
                if o.len() != m {
                    Err(format!("expected {m} objectives, got {}", o.len()))
                } else if !o.is_finite() {
                    Err("non-finite objective".to_string())
                } else {
                    Ok(o)
                }
            })
    };
    let results: Vec<std::result::Result<ObjectiveVector, String>> = match pool {
        Some(pool) => pool.install(|| population.members.par_iter().enumerate().map(eval).collect()),
        None => population.members.iter().enumerate().map(eval).collect(),
    };

    // Worst-so-far includes this batch's successes, folded in index order.
    for o in results.iter().flatten() {
        let worst = state.worst_seen.get_or_insert_with(|| o.0.clone());
        for (w, v) in worst.iter_mut().zip(&o.0) {
            *w = w.max(*v);
        }
    }
    for (ind, res) in population.members.iter_mut().zip(results) {
        match res {
            Ok(o) => {
                ind.objectives = Some(o);
                ind.failed = false;
            }
            Err(_) => {
                let sentinel = match &state.worst_seen {
                    Some(w) => w.iter().map(|v| (10.0 * v.abs()).max(1.0)).collect(),
                    None => vec![1e30; m],
                };
                ind.objectives = Some(ObjectiveVector(sentinel));
                ind.failed = true;
                state.failed_evaluations += 1;
            }
        }
    }
    Ok(())
}

fn reference_point(objs: &[ObjectiveVector]) -> Vec<f64> {
    let m = objs[0].len();
    (0..m)
        .map(|j| {
            let hi = objs.iter().map(|o| o[j]).fold(f64::NEG_INFINITY, f64::max);
            let lo = objs.iter().map(|o| o[j]).fold(f64::INFINITY, f64::min);
            hi + 0.1 * hi.abs().max(hi - lo).max(1e-9)
        })
        .collect()
}

fn front_hypervolume<G>(pop: &Population<G>, reference: &[f64]) -> Result<f64> {
    let pts: Vec<Vec<f64>> = pop
        .front()
        .map(|m| m.objectives.as_ref().map(|o| o.0.clone()).ok_or(MooError::Unevaluated(0)))
        .collect::<Result<_>>()?;
    Ok(hypervolume(&pts, reference))
}
