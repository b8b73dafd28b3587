//! Trace-driven discrete-event simulation of an HTC pool shared with
//! interactive users.
//!
//! The simulator replays interactive sessions, places submitted tasks through
//! a [`Scheduler`], and keeps an exact per-computer ledger of seconds spent in
//! each [`PowerState`]. Its two outputs are total energy and average task
//! overhead.

mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::run_simulation;

pub const HOUR: i64 = 3600;
pub const DAY: i64 = 24 * HOUR;
pub const WEEK: i64 = 7 * DAY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("no computers to simulate")]
    NoComputers,
    #[error("task {0} has not completed")]
    Incomplete(u64),
    #[error("ledger references unknown computer {0}")]
    UnknownComputer(u32),
    #[error("invalid simulator settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    Sleep,
    Idle,
    /// Running an HTC task, no interactive user.
    ActiveHtc,
    /// Interactive user, no HTC task.
    ActiveUser,
    /// Interactive user with an HTC task suspended underneath.
    ActiveBoth,
}

impl PowerState {
    pub const ALL: [PowerState; 5] = [
        PowerState::Sleep,
        PowerState::Idle,
        PowerState::ActiveHtc,
        PowerState::ActiveUser,
        PowerState::ActiveBoth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// States whose energy is charged to the HTC workload.
    pub fn is_htc(self) -> bool {
        !matches!(self, PowerState::ActiveUser | PowerState::ActiveBoth)
    }
}

/// Watts drawn in each power state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRates {
    pub sleep: f64,
    pub idle: f64,
    pub active_htc: f64,
    pub active_user: f64,
    pub active_both: f64,
}

impl PowerRates {
    /// Sleep/idle/active triple, with one active rate for every busy state.
    pub fn simple(sleep: f64, idle: f64, active: f64) -> Self {
        PowerRates {
            sleep,
            idle,
            active_htc: active,
            active_user: active,
            active_both: active,
        }
    }

    pub fn watts(&self, state: PowerState) -> f64 {
        match state {
            PowerState::Sleep => self.sleep,
            PowerState::Idle => self.idle,
            PowerState::ActiveHtc => self.active_htc,
            PowerState::ActiveUser => self.active_user,
            PowerState::ActiveBoth => self.active_both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Computer {
    pub id: u32,
    pub cluster_id: u32,
    pub power: PowerRates,
    /// Relative work rate; 1.0 runs a task in its base duration.
    pub efficiency: f64,
    /// Whether a login suspends (rather than evicts) a running task.
    pub suspendable: bool,
    /// Hour of the week (0..168, Monday 00:00 = 0) of the weekly reboot.
    pub reboot_hour: Option<u32>,
}

impl Computer {
    /// Seconds this computer needs for a task of the given base duration.
    pub fn execution_time(&self, base_duration: i64) -> i64 {
        (base_duration as f64 / self.efficiency).ceil() as i64
    }

    /// Work per joule while running HTC work.
    pub fn energy_efficiency(&self) -> f64 {
        self.efficiency / self.power.active_htc.max(1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractiveSession {
    pub computer_id: u32,
    pub login_time: i64,
    pub logout_time: i64,
}

/// A task submission as it appears in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u64,
    pub submit_time: i64,
    /// Execution time on a computer of efficiency 1.0.
    pub duration: i64,
    pub batch_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Queued,
    Running,
    Suspended,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Run,
    Suspended,
}

/// A stretch of time a task occupied one computer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub computer_id: u32,
    pub start: i64,
    pub end: i64,
    pub kind: SegmentKind,
}

/// Outcome of one placement of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Completed,
    SuspendedThenCompleted,
    Evicted,
    /// A decision to hold the task in the queue, closed when it is next considered.
    QueuedExpired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: u64,
    pub submit_time: i64,
    pub finish_time: Option<i64>,
    pub base_duration: i64,
    /// Execution time of the successful attempt on the computer that ran it.
    pub exec_duration: i64,
    pub attempts: u32,
    pub state: TaskState,
    pub segments: Vec<Segment>,
}

impl TaskRecord {
    /// `f - q - d` with `d` the actual execution time.
    pub fn overhead(&self) -> Option<i64> {
        self.finish_time
            .map(|f| f - self.submit_time - self.exec_duration)
    }
}

/// Seconds a single computer spent in each power state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSeconds {
    pub sleep: i64,
    pub idle: i64,
    pub active_htc: i64,
    pub active_user: i64,
    pub active_both: i64,
}

impl StateSeconds {
    pub fn get(&self, s: PowerState) -> i64 {
        match s {
            PowerState::Sleep => self.sleep,
            PowerState::Idle => self.idle,
            PowerState::ActiveHtc => self.active_htc,
            PowerState::ActiveUser => self.active_user,
            PowerState::ActiveBoth => self.active_both,
        }
    }

    pub fn add(&mut self, s: PowerState, secs: i64) {
        let slot = match s {
            PowerState::Sleep => &mut self.sleep,
            PowerState::Idle => &mut self.idle,
            PowerState::ActiveHtc => &mut self.active_htc,
            PowerState::ActiveUser => &mut self.active_user,
            PowerState::ActiveBoth => &mut self.active_both,
        };
        *slot += secs;
    }

    pub fn total(&self) -> i64 {
        PowerState::ALL.iter().map(|&s| self.get(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub computer_id: u32,
    pub seconds: StateSeconds,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    /// Only states attributable to the HTC workload are charged.
    #[default]
    HtcAttribution,
    /// Every state is charged.
    TotalFacility,
}

/// Watt-hours for a ledger: sum over computers and states of hours x watts.
pub fn total_energy(
    ledger: &EnergyLedger,
    computers: &[Computer],
    mode: AccountingMode,
) -> Result<f64, SimError> {
    let mut wh = 0.0;
    for row in &ledger.rows {
        let c = computers
            .iter()
            .find(|c| c.id == row.computer_id)
            .ok_or(SimError::UnknownComputer(row.computer_id))?;
        for s in PowerState::ALL {
            let rate = match mode {
                AccountingMode::HtcAttribution if !s.is_htc() => 0.0,
                _ => c.power.watts(s),
            };
            wh += row.seconds.get(s) as f64 / HOUR as f64 * rate;
        }
    }
    Ok(wh)
}

/// Mean of `f - q - d` over completed tasks; 0 for an empty set.
pub fn average_overhead(tasks: &[TaskRecord]) -> Result<f64, SimError> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0i128;
    for t in tasks {
        let o = t.overhead().ok_or(SimError::Incomplete(t.task_id))?;
        sum += o as i128;
    }
    Ok(sum as f64 / tasks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Seconds a suspended task waits before it is evicted.
    pub suspend_timeout_s: i64,
    pub accounting: AccountingMode,
    /// Idle computers go to sleep after this many seconds; `None` never sleeps.
    pub sleep_after_s: Option<i64>,
    /// Simulated horizon. The trace span is used when absent or shorter.
    pub horizon_s: Option<i64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            suspend_timeout_s: 600,
            accounting: AccountingMode::HtcAttribution,
            sleep_after_s: None,
            horizon_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub total_energy_wh: f64,
    pub average_overhead_s: f64,
    pub horizon_s: i64,
    pub tasks_completed: usize,
    pub total_attempts: u64,
    pub tasks: Vec<TaskRecord>,
    pub ledger: EnergyLedger,
}

/// What the simulator asks a scheduler.
#[derive(Debug)]
pub struct PlacementRequest<'a> {
    pub time: i64,
    pub task: &'a TaskSpec,
    /// Indices (into `computers`) of computers with no user and no task.
    pub free: &'a [usize],
    pub computers: &'a [Computer],
    /// False once the trace horizon has passed; the scheduler must then run.
    pub allow_queue: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Run on this computer index; must be one of `free`.
    Run(usize),
    Queue,
}

pub type DecisionToken = u64;

pub trait Scheduler {
    /// Decide where a queued task goes. The token, if any, is handed back in
    /// [`Scheduler::resolve`] once the outcome of the decision is known.
    fn place(&mut self, req: &PlacementRequest<'_>) -> (Placement, Option<DecisionToken>);

    fn resolve(&mut self, token: DecisionToken, outcome: AttemptOutcome, time: i64);

    /// Called at each simulated midnight with the number of whole days elapsed.
    fn end_of_day(&mut self, _day: i64) {}
}

/// Places every task on the lowest-indexed free computer.
#[derive(Debug, Default)]
pub struct FirstFree;

impl Scheduler for FirstFree {
    fn place(&mut self, req: &PlacementRequest<'_>) -> (Placement, Option<DecisionToken>) {
        match req.free.first() {
            Some(&c) => (Placement::Run(c), None),
            None => (Placement::Queue, None),
        }
    }

    fn resolve(&mut self, _token: DecisionToken, _outcome: AttemptOutcome, _time: i64) {}
}
