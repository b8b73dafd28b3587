use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use htcopt::genome::RlParameterSet;
use htcopt::moo::engine::EngineState;
use htcopt::moo::{Engine, Population};
use htcopt::tuning::HtcProblem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{write_atomic, RunConfig};
use crate::Invalid;

pub const RESULTS_FILE: &str = "results.csv";
pub const GENOMES_FILE: &str = "genomes.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RESULTS_HEADER: &str = "generation,individual,energy_wh,overhead_s,rank,crowding";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Parallel evaluations (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint and exit once this generation is written.
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    fingerprint: String,
    /// SHA-256 of `state`.
    checksum: String,
    state: String,
}

#[derive(Serialize, Deserialize)]
struct GenomeLine {
    generation: usize,
    individual: usize,
    parameters: RlParameterSet,
}

#[derive(Default)]
struct Outputs {
    results: Vec<String>,
    genomes: Vec<String>,
}

impl Outputs {
    fn record(&mut self, pop: &Population<RlParameterSet>) -> anyhow::Result<()> {
        for (i, ind) in pop.members.iter().enumerate() {
            let obj = ind
                .objectives
                .as_ref()
                .context("unevaluated individual in population")?;
            let rank = ind.rank.context("unranked individual")?;
            let crowding = ind.crowding.context("individual without crowding distance")?;
            self.results.push(format!(
                "{},{},{},{},{},{}",
                pop.generation,
                i,
                obj[0],
                obj[1],
                rank,
                format_crowding(crowding)
            ));
            self.genomes.push(serde_json::to_string(&GenomeLine {
                generation: pop.generation,
                individual: i,
                parameters: ind.genome.clone(),
            })?);
        }
        Ok(())
    }

    fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut csv = String::with_capacity(64 * (self.results.len() + 1));
        csv.push_str(RESULTS_HEADER);
        csv.push('\n');
        for r in &self.results {
            csv.push_str(r);
            csv.push('\n');
        }
        write_atomic(&dir.join(RESULTS_FILE), csv.as_bytes())?;
        let mut jsonl = String::new();
        for g in &self.genomes {
            jsonl.push_str(g);
            jsonl.push('\n');
        }
        write_atomic(&dir.join(GENOMES_FILE), jsonl.as_bytes())
    }

    /// Rows of generations `0..=generation` from a previous run.
    fn reload(dir: &Path, generation: usize, n: usize) -> anyhow::Result<Outputs> {
        let keep = |line: &&str| {
            line.split(',')
                .next()
                .and_then(|g| g.parse::<usize>().ok())
                .is_some_and(|g| g <= generation)
        };
        let results_text = fs::read_to_string(dir.join(RESULTS_FILE))
            .map_err(|e| Invalid(format!("cannot resume: {RESULTS_FILE}: {e}")))?;
        let results: Vec<String> = results_text
            .lines()
            .skip(1)
            .filter(keep)
            .map(str::to_string)
            .collect();
        let genomes_text = fs::read_to_string(dir.join(GENOMES_FILE))
            .map_err(|e| Invalid(format!("cannot resume: {GENOMES_FILE}: {e}")))?;
        let mut genomes = Vec::new();
        for line in genomes_text.lines() {
            let g: GenomeLine = serde_json::from_str(line)
                .map_err(|e| Invalid(format!("cannot resume: {GENOMES_FILE}: {e}")))?;
            if g.generation <= generation {
                genomes.push(line.to_string());
            }
        }
        let expected = (generation + 1) * n;
        if results.len() != expected || genomes.len() != expected {
            return Err(Invalid(format!(
                "cannot resume: expected {expected} rows up to generation {generation}, found {} results and {} genomes",
                results.len(),
                genomes.len()
            ))
            .into());
        }
        Ok(Outputs { results, genomes })
    }
}

fn format_crowding(c: f64) -> String {
    if c.is_infinite() {
        "inf".to_string()
    } else {
        c.to_string()
    }
}

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn write_checkpoint(dir: &Path, fingerprint: &str, state: &EngineState<RlParameterSet>) -> anyhow::Result<()> {
    let state = serde_json::to_string(state)?;
    let cp = Checkpoint {
        version: 1,
        fingerprint: fingerprint.to_string(),
        checksum: sha256_hex(&state),
        state,
    };
    write_atomic(&dir.join(CHECKPOINT_FILE), serde_json::to_string(&cp)?.as_bytes())
}

fn read_checkpoint(dir: &Path, fingerprint: &str) -> anyhow::Result<EngineState<RlParameterSet>> {
    let path = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Invalid(format!("cannot resume: {}: {e}", path.display())))?;
    let refuse = |why: &str| Invalid(format!("refusing to resume from {}: {why}", path.display()));
    let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| refuse(&e.to_string()))?;
    if cp.version != 1 {
        return Err(refuse("unsupported checkpoint version").into());
    }
    if sha256_hex(&cp.state) != cp.checksum {
        return Err(refuse("checksum mismatch").into());
    }
    if cp.fingerprint != fingerprint {
        return Err(refuse("checkpoint was written by a different configuration").into());
    }
    Ok(serde_json::from_str(&cp.state).map_err(|e| refuse(&e.to_string()))?)
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.evolution.seed = seed;
    }
    let jobs = args.jobs.unwrap_or_else(default_jobs);
    if jobs == 0 {
        return Err(Invalid("--jobs must be at least 1".into()).into());
    }
    let spec = cfg.genome_spec()?;
    let (traces, settings) = cfg.traces()?;
    let problem = HtcProblem::new(Arc::new(traces), spec, settings);
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let fingerprint = cfg.fingerprint();
    let n = cfg.evolution.population_size;

    let (mut engine, mut out) = if args.resume {
        let state = read_checkpoint(&dir, &fingerprint)?;
        let out = Outputs::reload(&dir, state.population.generation, n)?;
        let engine = Engine::resume(&problem, cfg.evolution.clone(), state, jobs)
            .map_err(|e| Invalid(format!("cannot resume: {e}")))?;
        (engine, out)
    } else {
        let engine = Engine::initialize(&problem, cfg.evolution.clone(), jobs)?;
        let mut out = Outputs::default();
        out.record(engine.population())?;
        out.write(&dir)?;
        write_checkpoint(&dir, &fingerprint, engine.state())?;
        (engine, out)
    };
    report(&engine);

    while !engine.is_done() {
        if args.stop_after.is_some_and(|g| engine.generation() >= g) {
            write_checkpoint(&dir, &fingerprint, engine.state())?;
            return Ok(());
        }
        engine.step()?;
        out.record(engine.population())?;
        out.write(&dir)?;
        if engine.generation() % cfg.checkpoint_interval == 0 || engine.is_done() {
            write_checkpoint(&dir, &fingerprint, engine.state())?;
        }
        report(&engine);
    }
    Ok(())
}

fn report(engine: &Engine<'_, HtcProblem>) {
    let s = engine.state();
    eprintln!(
        "generation {:>4}  front {:>3}  hypervolume {:.6e}  failed {}",
        engine.generation(),
        engine.population().front().count(),
        s.hv_history.last().copied().unwrap_or(0.0),
        s.failed_evaluations
    );
}
