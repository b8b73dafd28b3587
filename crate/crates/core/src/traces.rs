//! Synthetic trace generation and CSV ingestion.
//!
//! A [`TraceSet`] is what the simulator replays: the computers, the
//! interactive sessions on them and the HTC task submissions. Traces are
//! either generated from a [`TraceConfig`] or loaded from a directory holding
//! `computers.csv`, `sessions.csv` and `tasks.csv`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moo::rng::stream;
use crate::sim::{Computer, InteractiveSession, PowerRates, TaskSpec, DAY, HOUR};

const STREAM_HARDWARE: u64 = 0x6877;
const STREAM_SESSIONS: u64 = 0x7365_7373;
const STREAM_TASKS: u64 = 0x7461_736b;

pub const SESSIONS_FILE: &str = "sessions.csv";
pub const TASKS_FILE: &str = "tasks.csv";
pub const COMPUTERS_FILE: &str = "computers.csv";

const SESSIONS_HEADER: [&str; 3] = ["computer_id", "login_time", "logout_time"];
const TASKS_HEADER: [&str; 4] = ["task_id", "submit_time", "duration", "batch_id"];
const COMPUTERS_HEADER: [&str; 8] = [
    "computer_id",
    "cluster_id",
    "watts_sleep",
    "watts_idle",
    "watts_active",
    "efficiency",
    "suspendable",
    "reboot_hour",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace config: {0}")]
    Config(String),
    #[error("infeasible trace config: {0}")]
    Infeasible(String),
    #[error("{file} row {row}: {msg}")]
    Row { file: String, row: usize, msg: String },
    #[error("{file}: {msg}")]
    File { file: String, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn row_err(file: &str, row: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Row {
        file: file.to_string(),
        row,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub horizon_days: u32,
    pub computer_count: u32,
    pub cluster_count: u32,
    pub task_count: u32,
    /// Expected logins per computer in each hour of a weekday.
    pub hourly_login_rate: Vec<f64>,
    /// Multiplier on the login rate on Saturday and Sunday.
    pub weekend_damping: f64,
    pub mean_session_s: f64,
    /// Log-normal parameters of the task base duration in seconds.
    pub duration_mu: f64,
    pub duration_sigma: f64,
    /// Batch sizes are uniform on `1..=max_batch_size`.
    pub max_batch_size: u32,
    pub suspendable_fraction: f64,
    /// Probability that a cluster has a weekly reboot slot.
    pub reboot_fraction: f64,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        // Quiet nights, busy teaching hours.
        let hourly_login_rate = vec![
            0.01, 0.01, 0.01, 0.01, 0.01, 0.02, 0.05, 0.10, 0.30, 0.45, 0.50, 0.50, 0.40, 0.45,
            0.50, 0.45, 0.35, 0.25, 0.15, 0.10, 0.08, 0.05, 0.03, 0.02,
        ];
        TraceConfig {
            horizon_days: 28,
            computer_count: 50,
            cluster_count: 5,
            task_count: 2000,
            hourly_login_rate,
            weekend_damping: 0.3,
            mean_session_s: 2400.0,
            duration_mu: 7.5,
            duration_sigma: 1.0,
            max_batch_size: 20,
            suspendable_fraction: 0.5,
            reboot_fraction: 0.4,
            seed: 1,
        }
    }
}

impl TraceConfig {
    pub fn horizon_s(&self) -> i64 {
        self.horizon_days as i64 * DAY
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Config(m.to_string()));
        if self.horizon_days == 0 {
            return bad("horizon_days must be positive");
        }
        if self.computer_count == 0 {
            return bad("computer_count must be positive");
        }
        if self.cluster_count == 0 || self.cluster_count > self.computer_count {
            return bad("cluster_count must be in 1..=computer_count");
        }
        if self.hourly_login_rate.len() != 24 {
            return bad("hourly_login_rate needs 24 values");
        }
        if self.hourly_login_rate.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("hourly_login_rate values must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.weekend_damping) {
            return bad("weekend_damping must be in [0, 1]");
        }
        if !(self.mean_session_s.is_finite() && self.mean_session_s > 0.0) {
            return bad("mean_session_s must be positive");
        }
        if !self.duration_mu.is_finite() || !(self.duration_sigma.is_finite() && self.duration_sigma >= 0.0) {
            return bad("duration_mu/duration_sigma must be finite, sigma >= 0");
        }
        if self.max_batch_size == 0 {
            return bad("max_batch_size must be positive");
        }
        for (name, p) in [
            ("suspendable_fraction", self.suspendable_fraction),
            ("reboot_fraction", self.reboot_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TraceError::Config(format!("{name} must be in [0, 1]")));
            }
        }
        // Expected busy time per day cannot exceed the day.
        let busy: f64 = self.hourly_login_rate.iter().sum::<f64>() * self.mean_session_s;
        if busy > DAY as f64 {
            return Err(TraceError::Infeasible(format!(
                "expected session time {busy:.0} s per day exceeds {DAY} s"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub computers: Vec<Computer>,
    pub sessions: Vec<InteractiveSession>,
    pub tasks: Vec<TaskSpec>,
}

impl TraceSet {
    /// Latest logout or submission time.
    pub fn span(&self) -> i64 {
        let s = self.sessions.iter().map(|s| s.logout_time).max().unwrap_or(0);
        let t = self.tasks.iter().map(|t| t.submit_time).max().unwrap_or(0);
        s.max(t)
    }

    /// Check ids, times and per-computer session overlap. Row numbers in
    /// errors are 1-based data rows.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut ids = HashSet::new();
        for (i, c) in self.computers.iter().enumerate() {
            let row = i + 1;
            if !ids.insert(c.id) {
                return Err(row_err(COMPUTERS_FILE, row, format!("duplicate computer_id {}", c.id)));
            }
            let rates = [c.power.sleep, c.power.idle, c.power.active_htc, c.power.active_user, c.power.active_both];
            if rates.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(row_err(COMPUTERS_FILE, row, "power rates must be >= 0"));
            }
            if !(c.efficiency.is_finite() && c.efficiency > 0.0) {
                return Err(row_err(COMPUTERS_FILE, row, "efficiency must be > 0"));
            }
            if matches!(c.reboot_hour, Some(h) if h >= 168) {
                return Err(row_err(COMPUTERS_FILE, row, "reboot_hour must be in 0..168"));
            }
        }
        let mut last_logout: HashMap<u32, (i64, usize)> = HashMap::new();
        let mut order: Vec<usize> = (0..self.sessions.len()).collect();
        order.sort_by_key(|&i| (self.sessions[i].login_time, i));
        for i in order {
            let s = &self.sessions[i];
            let row = i + 1;
            if !ids.contains(&s.computer_id) {
                return Err(row_err(SESSIONS_FILE, row, format!("unknown computer_id {}", s.computer_id)));
            }
            if s.login_time < 0 {
                return Err(row_err(SESSIONS_FILE, row, "negative login_time"));
            }
            if s.logout_time <= s.login_time {
                return Err(row_err(SESSIONS_FILE, row, "logout_time must be after login_time"));
            }
            if let Some(&(prev, prev_row)) = last_logout.get(&s.computer_id) {
                if s.login_time < prev {
                    return Err(row_err(
                        SESSIONS_FILE,
                        row,
                        format!("overlaps session in row {prev_row} on computer {}", s.computer_id),
                    ));
                }
            }
            last_logout.insert(s.computer_id, (s.logout_time, row));
        }
        let mut task_ids = HashSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let row = i + 1;
            if !task_ids.insert(t.id) {
                return Err(row_err(TASKS_FILE, row, format!("duplicate task_id {}", t.id)));
            }
            if t.submit_time < 0 {
                return Err(row_err(TASKS_FILE, row, "negative submit_time"));
            }
            if t.duration < 0 {
                return Err(row_err(TASKS_FILE, row, "negative duration"));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), TraceError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_csv(&dir.join(COMPUTERS_FILE), &COMPUTERS_HEADER, self.computers.iter().map(|c| {
            vec![
                c.id.to_string(),
                c.cluster_id.to_string(),
                c.power.sleep.to_string(),
                c.power.idle.to_string(),
                c.power.active_htc.to_string(),
                c.efficiency.to_string(),
                c.suspendable.to_string(),
                c.reboot_hour.map(|h| h.to_string()).unwrap_or_default(),
            ]
        }))?;
        write_csv(&dir.join(SESSIONS_FILE), &SESSIONS_HEADER, self.sessions.iter().map(|s| {
            vec![s.computer_id.to_string(), s.login_time.to_string(), s.logout_time.to_string()]
        }))?;
        write_csv(&dir.join(TASKS_FILE), &TASKS_HEADER, self.tasks.iter().map(|t| {
            vec![
                t.id.to_string(),
                t.submit_time.to_string(),
                t.duration.to_string(),
                t.batch_id.map(|b| b.to_string()).unwrap_or_default(),
            ]
        }))?;
        Ok(())
    }

    /// Load and validate the three CSV files in `dir`. Sessions and tasks are
    /// ordered by time, ties kept in file order.
    pub fn load(dir: &Path) -> Result<TraceSet, TraceError> {
        let computers = read_csv(&dir.join(COMPUTERS_FILE), COMPUTERS_FILE, &COMPUTERS_HEADER, |f, row| {
            Ok(Computer {
                id: parse(f[0], COMPUTERS_FILE, row, "computer_id")?,
                cluster_id: parse(f[1], COMPUTERS_FILE, row, "cluster_id")?,
                power: PowerRates::simple(
                    parse(f[2], COMPUTERS_FILE, row, "watts_sleep")?,
                    parse(f[3], COMPUTERS_FILE, row, "watts_idle")?,
                    parse(f[4], COMPUTERS_FILE, row, "watts_active")?,
                ),
                efficiency: parse(f[5], COMPUTERS_FILE, row, "efficiency")?,
                suspendable: parse_bool(f[6], row)?,
                reboot_hour: parse_opt(f[7], COMPUTERS_FILE, row, "reboot_hour")?,
            })
        })?;
        let mut sessions = read_csv(&dir.join(SESSIONS_FILE), SESSIONS_FILE, &SESSIONS_HEADER, |f, row| {
            Ok(InteractiveSession {
                computer_id: parse(f[0], SESSIONS_FILE, row, "computer_id")?,
                login_time: parse(f[1], SESSIONS_FILE, row, "login_time")?,
                logout_time: parse(f[2], SESSIONS_FILE, row, "logout_time")?,
            })
        })?;
        let mut tasks = read_csv(&dir.join(TASKS_FILE), TASKS_FILE, &TASKS_HEADER, |f, row| {
            Ok(TaskSpec {
                id: parse(f[0], TASKS_FILE, row, "task_id")?,
                submit_time: parse(f[1], TASKS_FILE, row, "submit_time")?,
                duration: parse(f[2], TASKS_FILE, row, "duration")?,
                batch_id: parse_opt(f[3], TASKS_FILE, row, "batch_id")?,
            })
        })?;
        let set = TraceSet {
            computers,
            sessions: sessions.clone(),
            tasks: tasks.clone(),
        };
        // Validate before reordering so row numbers match the files.
        set.validate()?;
        sessions.sort_by_key(|s| s.login_time);
        tasks.sort_by_key(|t| t.submit_time);
        Ok(TraceSet {
            computers: set.computers,
            sessions,
            tasks,
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TraceError {
    TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), TraceError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file_err = |e: csv::Error| TraceError::File {
        file: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(file_err)?;
    w.write_record(header).map_err(file_err)?;
    for r in rows {
        w.write_record(&r).map_err(file_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_csv<T>(
    path: &Path,
    name: &str,
    header: &[&str],
    mut parse_row: impl FnMut(&[&str], usize) -> Result<T, TraceError>,
) -> Result<Vec<T>, TraceError> {
    if !path.exists() {
        return Err(TraceError::File {
            file: name.to_string(),
            msg: "file not found".into(),
        });
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TraceError::File {
            file: name.to_string(),
            msg: e.to_string(),
        })?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| TraceError::File {
            file: name.to_string(),
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(TraceError::File {
            file: name.to_string(),
            msg: format!("expected header {}, found {}", header.join(","), got.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_err(name, row, e.to_string()))?;
        let fields: Vec<&str> = rec.iter().collect();
        out.push(parse_row(&fields, row)?);
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(s: &str, file: &str, row: usize, field: &str) -> Result<T, TraceError> {
    s.parse()
        .map_err(|_| row_err(file, row, format!("cannot parse {field} from {s:?}")))
}

fn parse_opt<T: std::str::FromStr>(
    s: &str,
    file: &str,
    row: usize,
    field: &str,
) -> Result<Option<T>, TraceError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, file, row, field).map(Some)
    }
}

fn parse_bool(s: &str, row: usize) -> Result<bool, TraceError> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(row_err(COMPUTERS_FILE, row, format!("cannot parse suspendable from {s:?}"))),
    }
}

/// Day 0 is a Monday.
fn is_weekend(day: i64) -> bool {
    day % 7 >= 5
}

pub fn generate(config: &TraceConfig) -> Result<TraceSet, TraceError> {
    config.validate()?;
    let computers = generate_computers(config);
    let mut sessions = Vec::new();
    for c in &computers {
        generate_sessions(config, c.id, &mut sessions);
    }
    sessions.sort_by_key(|s| (s.login_time, s.computer_id));
    let tasks = generate_tasks(config);
    Ok(TraceSet {
        computers,
        sessions,
        tasks,
    })
}

fn generate_computers(config: &TraceConfig) -> Vec<Computer> {
    let mut rng = stream(config.seed, STREAM_HARDWARE, 0, 0);
    // One hardware profile per cluster.
    let profiles: Vec<(f64, f64, f64, Option<u32>)> = (0..config.cluster_count)
        .map(|_| {
            let efficiency = rng.gen_range(0.5..2.0f64);
            let idle = rng.gen_range(30.0..70.0f64);
            let active = idle + rng.gen_range(30.0..90.0f64) * efficiency.sqrt();
            let reboot = rng
                .gen_bool(config.reboot_fraction)
                .then(|| rng.gen_range(0..168u32));
            (
                (efficiency * 100.0).round() / 100.0,
                idle.round(),
                active.round(),
                reboot,
            )
        })
        .collect();
    (0..config.computer_count)
        .map(|i| {
            let cluster = i % config.cluster_count;
            let (efficiency, idle, active, reboot_hour) = profiles[cluster as usize];
            Computer {
                id: i,
                cluster_id: cluster,
                power: PowerRates::simple(2.0, idle, active),
                efficiency,
                suspendable: rng.gen_bool(config.suspendable_fraction),
                reboot_hour,
            }
        })
        .collect()
}

fn generate_sessions(config: &TraceConfig, computer_id: u32, out: &mut Vec<InteractiveSession>) {
    let mut rng = stream(config.seed, STREAM_SESSIONS, computer_id as u64, 0);
    let length = Exp::new(1.0 / config.mean_session_s).expect("positive mean");
    let horizon = config.horizon_s();
    let mut busy_until = 0i64;
    for hour in 0..horizon / HOUR {
        let day = hour * HOUR / DAY;
        let mut rate = config.hourly_login_rate[(hour % 24) as usize];
        if is_weekend(day) {
            rate *= config.weekend_damping;
        }
        if rate <= 0.0 {
            continue;
        }
        let n = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
        let mut logins: Vec<i64> = (0..n)
            .map(|_| hour * HOUR + rng.gen_range(0..HOUR))
            .collect();
        logins.sort_unstable();
        for login in logins {
            let len = (length.sample(&mut rng).round() as i64).max(60);
            // A login while the computer is already in use is dropped.
            if login < busy_until {
                continue;
            }
            let logout = (login + len).min(horizon);
            if logout <= login {
                continue;
            }
            out.push(InteractiveSession {
                computer_id,
                login_time: login,
                logout_time: logout,
            });
            busy_until = logout;
        }
    }
}

fn generate_tasks(config: &TraceConfig) -> Vec<TaskSpec> {
    let mut rng = stream(config.seed, STREAM_TASKS, 0, 0);
    let durations = LogNormal::new(config.duration_mu, config.duration_sigma).expect("valid log-normal");
    let horizon = config.horizon_s();
    let mut raw: Vec<(i64, u64, i64)> = Vec::with_capacity(config.task_count as usize);
    let mut batch = 0u64;
    while raw.len() < config.task_count as usize {
        let size = rng.gen_range(1..=config.max_batch_size) as usize;
        let submit = rng.gen_range(0..horizon);
        for _ in 0..size.min(config.task_count as usize - raw.len()) {
            let d = (durations.sample(&mut rng).round() as i64).max(1);
            raw.push((submit, batch, d));
        }
        batch += 1;
    }
    raw.sort_by_key(|&(submit, batch, _)| (submit, batch));
    // Renumber batches in submission order.
    let mut batch_ids: HashMap<u64, u64> = HashMap::new();
    raw.into_iter()
        .enumerate()
        .map(|(i, (submit, b, d))| {
            let next = batch_ids.len() as u64;
            let id = *batch_ids.entry(b).or_insert(next);
            TaskSpec {
                id: i as u64,
                submit_time: submit,
                duration: d,
                batch_id: Some(id),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TraceConfig {
        TraceConfig {
            horizon_days: 14,
            computer_count: 8,
            cluster_count: 2,
            task_count: 100,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&TraceConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_traces_are_valid() {
        let t = generate(&small()).unwrap();
        t.validate().unwrap();
        assert_eq!(t.tasks.len(), 100);
        assert!(!t.sessions.is_empty());
        assert!(t.tasks.windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        assert!(t.span() <= small().horizon_s());
    }

    #[test]
    fn zero_tasks_gives_sessions_only() {
        let t = generate(&TraceConfig { task_count: 0, ..small() }).unwrap();
        assert!(t.tasks.is_empty());
        assert!(!t.sessions.is_empty());
    }

    #[test]
    fn zero_weekend_damping_means_quiet_weekends() {
        let t = generate(&TraceConfig { weekend_damping: 0.0, ..small() }).unwrap();
        assert!(t.sessions.iter().all(|s| !is_weekend(s.login_time / DAY)));
    }

    #[test]
    fn infeasible_intensity_is_rejected() {
        let cfg = TraceConfig {
            hourly_login_rate: vec![2.0; 24],
            mean_session_s: 3600.0,
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(TraceError::Infeasible(_))));
        let neg = TraceConfig {
            hourly_login_rate: {
                let mut v = vec![0.1; 24];
                v[3] = -1.0;
                v
            },
            ..small()
        };
        assert!(matches!(generate(&neg), Err(TraceError::Config(_))));
        assert!(matches!(
            generate(&TraceConfig { horizon_days: 0, ..small() }),
            Err(TraceError::Config(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let t = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path()).unwrap();
        let back = TraceSet::load(dir.path()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn load_requires_computers_file() {
        let t = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path()).unwrap();
        fs::remove_file(dir.path().join(COMPUTERS_FILE)).unwrap();
        let err = TraceSet::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains(COMPUTERS_FILE));
    }

    #[test]
    fn bad_session_row_is_named() {
        let t = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path()).unwrap();
        fs::write(
            dir.path().join(SESSIONS_FILE),
            "computer_id,login_time,logout_time\n0,10,20\n1,50,50\n",
        )
        .unwrap();
        let err = TraceSet::load(dir.path()).unwrap_err();
        assert!(matches!(&err, TraceError::Row { row: 2, .. }), "{err}");

        fs::write(dir.path().join(SESSIONS_FILE), "computer_id,login,logout_time\n").unwrap();
        assert!(matches!(TraceSet::load(dir.path()), Err(TraceError::File { .. })));

        fs::write(
            dir.path().join(SESSIONS_FILE),
            "computer_id,login_time,logout_time\n999,10,20\n",
        )
        .unwrap();
        assert!(matches!(TraceSet::load(dir.path()), Err(TraceError::Row { row: 1, .. })));
    }
}
