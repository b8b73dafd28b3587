//! The HTC simulator as a two-objective problem over scheduler parameters.

use std::sync::Arc;

use rand::Rng;

use crate::genome::{self, GenomeSpec, RlParameterSet};
use crate::moo::{ObjectiveVector, Problem};
use crate::rl::RlScheduler;
use crate::sim::{run_simulation, SimError, SimResult, SimSettings};
use crate::traces::TraceSet;

/// One simulation of `traces` under an RL scheduler with the given parameters.
pub fn simulate_rl(
    traces: &TraceSet,
    params: &RlParameterSet,
    settings: &SimSettings,
    seed: u64,
) -> Result<SimResult, SimError> {
    let mut scheduler = RlScheduler::new(params.clone(), &traces.computers, seed);
    run_simulation(traces, &mut scheduler, settings)
}

/// Minimise (energy Wh, average overhead s).
#[derive(Debug, Clone)]
pub struct HtcProblem {
    pub traces: Arc<TraceSet>,
    pub spec: GenomeSpec,
    pub settings: SimSettings,
}

impl HtcProblem {
    pub fn new(traces: Arc<TraceSet>, spec: GenomeSpec, settings: SimSettings) -> Self {
        HtcProblem {
            traces,
            spec,
            settings,
        }
    }
}

// Repair keeps every raw vector decodable, so decode failures here are bugs.
const REPAIRED: &str = "repaired genome decodes";

impl Problem for HtcProblem {
    type Genome = RlParameterSet;

    fn num_objectives(&self) -> usize {
        2
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RlParameterSet {
        genome::sample(&self.spec, rng).expect(REPAIRED)
    }

    fn crossover<R: Rng + ?Sized>(
        &self,
        a: &RlParameterSet,
        b: &RlParameterSet,
        rng: &mut R,
    ) -> (RlParameterSet, RlParameterSet) {
        genome::crossover(&self.spec, a, b, rng).expect(REPAIRED)
    }

    fn mutate<R: Rng + ?Sized>(&self, x: &RlParameterSet, rate: f64, rng: &mut R) -> RlParameterSet {
        genome::mutate(&self.spec, x, rate, rng).expect(REPAIRED)
    }

    fn evaluate(&self, x: &RlParameterSet, seed: u64) -> Result<ObjectiveVector, String> {
        let r = simulate_rl(&self.traces, x, &self.settings, seed).map_err(|e| e.to_string())?;
        Ok(ObjectiveVector(vec![r.total_energy_wh, r.average_overhead_s]))
    }
}
