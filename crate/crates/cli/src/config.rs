use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use htcopt::genome::GenomeSpec;
use htcopt::moo::EvolutionConfig;
use htcopt::sim::{SimSettings, DAY};
use htcopt::traces::{generate, TraceConfig, TraceSet};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOverride {
    pub gene: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    Generate(TraceConfig),
    /// Directory with computers.csv, sessions.csv and tasks.csv.
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub genome_overrides: Vec<BoundOverride>,
    pub traces: TraceSource,
    #[serde(default)]
    pub simulator: SimSettings,
    pub output_dir: PathBuf,
    /// Write a checkpoint every this many generations.
    #[serde(default = "default_interval")]
    pub checkpoint_interval: usize,
}

fn default_interval() -> usize {
    1
}

/// The parts of a run that must match for a checkpoint to be resumable.
#[derive(Serialize)]
struct Fingerprint<'a> {
    evolution: &'a EvolutionConfig,
    genome_overrides: &'a [BoundOverride],
    traces: &'a TraceSource,
    simulator: &'a SimSettings,
}

impl RunConfig {
    /// Read a config; relative paths are taken relative to the config file.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let TraceSource::Dir(d) = &mut cfg.traces {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if cfg.checkpoint_interval == 0 {
            return Err(Invalid("checkpoint_interval must be positive".into()).into());
        }
        cfg.evolution
            .validate()
            .map_err(|e| Invalid(format!("evolution: {e}")))?;
        Ok(cfg)
    }

    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&Fingerprint {
            evolution: &self.evolution,
            genome_overrides: &self.genome_overrides,
            traces: &self.traces,
            simulator: &self.simulator,
        })
        .expect("config serialises")
    }

    pub fn genome_spec(&self) -> anyhow::Result<GenomeSpec> {
        let mut spec = GenomeSpec::rl_default();
        for o in &self.genome_overrides {
            spec.override_bounds(&o.gene, o.lo, o.hi)
                .map_err(|e| Invalid(format!("genome_overrides: {e}")))?;
        }
        Ok(spec)
    }

    /// Load or generate the traces, and the simulator settings to use with
    /// them. Generated traces run for their configured horizon.
    pub fn traces(&self) -> anyhow::Result<(TraceSet, SimSettings)> {
        let mut settings = self.simulator.clone();
        let traces = match &self.traces {
            TraceSource::Generate(tc) => {
                if settings.horizon_s.is_none() {
                    settings.horizon_s = Some(tc.horizon_days as i64 * DAY);
                }
                generate(tc).map_err(|e| Invalid(e.to_string()))?
            }
            TraceSource::Dir(d) => load_traces(d)?,
        };
        Ok((traces, settings))
    }
}

pub fn load_traces(dir: &Path) -> anyhow::Result<TraceSet> {
    if !dir.is_dir() {
        return Err(Invalid(format!("traces directory not found: {}", dir.display())).into());
    }
    Ok(TraceSet::load(dir).map_err(|e| Invalid(format!("{}: {e}", dir.display())))?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read {what} {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| Invalid(format!("invalid {what} {}: {e}", path.display())))?)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
