use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{
    average_overhead, total_energy, AttemptOutcome, DecisionToken, EnergyLedger, LedgerRow,
    Placement, PlacementRequest, PowerState, Scheduler, Segment, SegmentKind, SimError,
    SimResult, SimSettings, StateSeconds, TaskRecord, TaskState, DAY, HOUR, WEEK,
};
use crate::traces::TraceSet;

// Variant order doubles as the tie-break within a class at equal times only
// through insertion sequence; the class is what orders kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Logout(usize),
    Login(usize),
    Reboot(usize),
    Submit(usize),
    Complete(usize, u64),
    SuspendTimeout(usize, u64),
    Sleep(usize, u64),
    DayBoundary(i64),
    Wakeup,
}

impl Event {
    /// Sessions, then tasks, then scheduler wake-ups.
    fn class(&self) -> u8 {
        match self {
            Event::Logout(_) | Event::Login(_) | Event::Reboot(_) => 0,
            Event::Submit(_) | Event::Complete(..) | Event::SuspendTimeout(..) => 1,
            Event::Sleep(..) | Event::DayBoundary(_) | Event::Wakeup => 2,
        }
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<(i64, u8, u64, Event)>>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: i64, ev: Event) {
        self.heap.push(Reverse((time, ev.class(), self.seq, ev)));
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<(i64, Event)> {
        self.heap.pop().map(|Reverse((t, _, _, ev))| (t, ev))
    }
}

struct Machine {
    user: bool,
    task: Option<usize>,
    state: PowerState,
    since: i64,
    idle_epoch: u64,
    seconds: StateSeconds,
}

struct Job {
    state: TaskState,
    attempts: u32,
    epoch: u64,
    computer: Option<usize>,
    remaining: i64,
    run_start: i64,
    suspend_start: i64,
    attempt_exec: i64,
    suspended_this_attempt: bool,
    token: Option<DecisionToken>,
    queue_token: Option<DecisionToken>,
    finish: Option<i64>,
    exec_duration: i64,
    segments: Vec<Segment>,
}

struct Sim<'a, S: Scheduler + ?Sized> {
    traces: &'a TraceSet,
    settings: &'a SimSettings,
    scheduler: &'a mut S,
    events: EventQueue,
    machines: Vec<Machine>,
    jobs: Vec<Job>,
    queue: VecDeque<usize>,
    wakeup_pending: bool,
    unfinished: usize,
    horizon: i64,
    last_completion: i64,
}

/// Replay `traces` under `scheduler`. Deterministic for a deterministic
/// scheduler.
pub fn run_simulation<S: Scheduler + ?Sized>(
    traces: &TraceSet,
    scheduler: &mut S,
    settings: &SimSettings,
) -> Result<SimResult, SimError> {
    if traces.computers.is_empty() {
        return Err(SimError::NoComputers);
    }
    traces
        .validate()
        .map_err(|e| SimError::InvalidTrace(e.to_string()))?;
    if settings.suspend_timeout_s < 0 {
        return Err(SimError::InvalidSettings("suspend_timeout_s must be >= 0".into()));
    }
    if matches!(settings.sleep_after_s, Some(s) if s < 0) {
        return Err(SimError::InvalidSettings("sleep_after_s must be >= 0".into()));
    }

    let horizon = settings.horizon_s.unwrap_or(0).max(traces.span());
    let mut sim = Sim {
        traces,
        settings,
        scheduler,
        events: EventQueue::default(),
        machines: traces
            .computers
            .iter()
            .map(|_| Machine {
                user: false,
                task: None,
                state: PowerState::Idle,
                since: 0,
                idle_epoch: 0,
                seconds: StateSeconds::default(),
            })
            .collect(),
        jobs: traces
            .tasks
            .iter()
            .map(|_| Job {
                state: TaskState::Queued,
                attempts: 0,
                epoch: 0,
                computer: None,
                remaining: 0,
                run_start: 0,
                suspend_start: 0,
                attempt_exec: 0,
                suspended_this_attempt: false,
                token: None,
                queue_token: None,
                finish: None,
                exec_duration: 0,
                segments: Vec::new(),
            })
            .collect(),
        queue: VecDeque::new(),
        wakeup_pending: false,
        unfinished: traces.tasks.len(),
        horizon,
        last_completion: 0,
    };
    sim.seed_events();
    sim.run();
    sim.finish()
}

impl<S: Scheduler + ?Sized> Sim<'_, S> {
    fn computer_index(&self, id: u32) -> usize {
        self.traces
            .computers
            .iter()
            .position(|c| c.id == id)
            .expect("validated trace")
    }

    fn seed_events(&mut self) {
        // Logouts precede logins at the same instant.
        let mut session_events: Vec<(i64, u8, usize)> = Vec::new();
        for s in &self.traces.sessions {
            let c = self.computer_index(s.computer_id);
            session_events.push((s.login_time, 1, c));
            session_events.push((s.logout_time, 0, c));
        }
        session_events.sort();
        for (t, kind, c) in session_events {
            let ev = if kind == 0 {
                Event::Logout(c)
            } else {
                Event::Login(c)
            };
            self.events.push(t, ev);
        }
        for (c, comp) in self.traces.computers.iter().enumerate() {
            if let Some(h) = comp.reboot_hour {
                let mut t = h as i64 * HOUR;
                while t < self.horizon {
                    self.events.push(t, Event::Reboot(c));
                    t += WEEK;
                }
            }
        }
        let mut order: Vec<usize> = (0..self.traces.tasks.len()).collect();
        order.sort_by_key(|&i| self.traces.tasks[i].submit_time);
        for i in order {
            self.events.push(self.traces.tasks[i].submit_time, Event::Submit(i));
        }
        if DAY < self.horizon || self.unfinished > 0 {
            self.events.push(DAY, Event::DayBoundary(1));
        }
        for c in 0..self.machines.len() {
            self.enter_idle(c, 0);
        }
    }

    fn run(&mut self) {
        while let Some((now, ev)) = self.events.pop() {
            if now > self.horizon && self.unfinished == 0 {
                break;
            }
            match ev {
                Event::Login(c) => self.login(c, now),
                Event::Logout(c) => self.logout(c, now),
                Event::Reboot(c) => {
                    if let Some(t) = self.machines[c].task {
                        self.evict(t, now);
                    }
                    self.refresh(c, now);
                    self.dispatch(now);
                }
                Event::Submit(t) => {
                    self.queue.push_back(t);
                    self.dispatch(now);
                }
                Event::Complete(t, epoch) => self.complete(t, epoch, now),
                Event::SuspendTimeout(t, epoch) => {
                    let j = &self.jobs[t];
                    if j.epoch == epoch && j.state == TaskState::Suspended {
                        self.evict(t, now);
                        self.dispatch(now);
                    }
                }
                Event::Sleep(c, epoch) => {
                    let m = &self.machines[c];
                    if m.idle_epoch == epoch && m.state == PowerState::Idle {
                        self.transition(c, PowerState::Sleep, now);
                    }
                }
                Event::DayBoundary(day) => {
                    self.scheduler.end_of_day(day);
                    let next = (day + 1) * DAY;
                    if next < self.horizon || self.unfinished > 0 {
                        self.events.push(next, Event::DayBoundary(day + 1));
                    }
                }
                Event::Wakeup => {
                    self.wakeup_pending = false;
                    self.dispatch(now);
                }
            }
        }
    }

    fn finish(mut self) -> Result<SimResult, SimError> {
        let end = self.horizon.max(self.last_completion);
        for c in 0..self.machines.len() {
            let m = &mut self.machines[c];
            m.seconds.add(m.state, end - m.since);
            m.since = end;
        }
        let ledger = EnergyLedger {
            rows: self
                .traces
                .computers
                .iter()
                .zip(&self.machines)
                .map(|(c, m)| LedgerRow {
                    computer_id: c.id,
                    seconds: m.seconds,
                })
                .collect(),
        };
        let tasks: Vec<TaskRecord> = self
            .traces
            .tasks
            .iter()
            .zip(self.jobs)
            .map(|(spec, j)| TaskRecord {
                task_id: spec.id,
                submit_time: spec.submit_time,
                finish_time: j.finish,
                base_duration: spec.duration,
                exec_duration: j.exec_duration,
                attempts: j.attempts,
                state: j.state,
                segments: j.segments,
            })
            .collect();
        let total_energy_wh =
            total_energy(&ledger, &self.traces.computers, self.settings.accounting)?;
        let average_overhead_s = average_overhead(&tasks)?;
        Ok(SimResult {
            total_energy_wh,
            average_overhead_s,
            horizon_s: end,
            tasks_completed: tasks.iter().filter(|t| t.finish_time.is_some()).count(),
            total_attempts: tasks.iter().map(|t| t.attempts as u64 + 1).sum(),
            tasks,
            ledger,
        })
    }

    fn transition(&mut self, c: usize, to: PowerState, now: i64) {
        let m = &mut self.machines[c];
        if m.state == to {
            return;
        }
        m.seconds.add(m.state, now - m.since);
        m.state = to;
        m.since = now;
    }

    fn enter_idle(&mut self, c: usize, now: i64) {
        self.transition(c, PowerState::Idle, now);
        let m = &mut self.machines[c];
        m.idle_epoch += 1;
        if let Some(after) = self.settings.sleep_after_s {
            let epoch = m.idle_epoch;
            self.events.push(now + after, Event::Sleep(c, epoch));
        }
    }

    /// Bring the power state in line with the user/task situation.
    fn refresh(&mut self, c: usize, now: i64) {
        let m = &self.machines[c];
        let task_state = m.task.map(|t| self.jobs[t].state);
        let want = match (m.user, task_state) {
            (true, Some(TaskState::Suspended)) => PowerState::ActiveBoth,
            (true, _) => PowerState::ActiveUser,
            (false, Some(TaskState::Running)) => PowerState::ActiveHtc,
            (false, _) => PowerState::Idle,
        };
        match (m.state, want) {
            (PowerState::Idle | PowerState::Sleep, PowerState::Idle) => {}
            (_, PowerState::Idle) => self.enter_idle(c, now),
            _ => self.transition(c, want, now),
        }
    }

    fn free_computers(&self) -> Vec<usize> {
        self.machines
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.user && m.task.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    fn dispatch(&mut self, now: i64) {
        while let Some(&t) = self.queue.front() {
            let free = self.free_computers();
            if free.is_empty() {
                break;
            }
            if let Some(tok) = self.jobs[t].queue_token.take() {
                self.scheduler.resolve(tok, AttemptOutcome::QueuedExpired, now);
            }
            let allow_queue = now < self.horizon;
            let req = PlacementRequest {
                time: now,
                task: &self.traces.tasks[t],
                free: &free,
                computers: &self.traces.computers,
                allow_queue,
            };
            let (placement, token) = self.scheduler.place(&req);
            match placement {
                Placement::Run(c) if free.contains(&c) => {
                    self.queue.pop_front();
                    self.start(t, c, now, token);
                }
                _ if !allow_queue => {
                    if let Some(tok) = token {
                        self.scheduler.resolve(tok, AttemptOutcome::QueuedExpired, now);
                    }
                    self.queue.pop_front();
                    self.start(t, free[0], now, None);
                }
                _ => {
                    self.jobs[t].queue_token = token;
                    break;
                }
            }
        }
        if !self.queue.is_empty() && !self.wakeup_pending {
            self.wakeup_pending = true;
            self.events.push((now / HOUR + 1) * HOUR, Event::Wakeup);
        }
    }

    fn start(&mut self, t: usize, c: usize, now: i64, token: Option<DecisionToken>) {
        let exec = self.traces.computers[c].execution_time(self.traces.tasks[t].duration);
        let j = &mut self.jobs[t];
        j.state = TaskState::Running;
        j.epoch += 1;
        j.computer = Some(c);
        j.remaining = exec;
        j.attempt_exec = exec;
        j.run_start = now;
        j.suspended_this_attempt = false;
        j.token = token;
        let epoch = j.epoch;
        self.machines[c].task = Some(t);
        self.events.push(now + exec, Event::Complete(t, epoch));
        self.refresh(c, now);
    }

    fn push_segment(&mut self, t: usize, start: i64, end: i64, kind: SegmentKind) {
        if end > start {
            let c = self.jobs[t].computer.expect("placed task");
            let computer_id = self.traces.computers[c].id;
            self.jobs[t].segments.push(Segment {
                computer_id,
                start,
                end,
                kind,
            });
        }
    }

    fn evict(&mut self, t: usize, now: i64) {
        let c = self.jobs[t].computer.expect("placed task");
        match self.jobs[t].state {
            TaskState::Running => self.push_segment(t, self.jobs[t].run_start, now, SegmentKind::Run),
            TaskState::Suspended => {
                self.push_segment(t, self.jobs[t].suspend_start, now, SegmentKind::Suspended)
            }
            _ => return,
        }
        let j = &mut self.jobs[t];
        j.attempts += 1;
        j.epoch += 1;
        j.state = TaskState::Queued;
        j.computer = None;
        let token = j.token.take();
        self.machines[c].task = None;
        if let Some(tok) = token {
            self.scheduler.resolve(tok, AttemptOutcome::Evicted, now);
        }
        self.queue.push_back(t);
        self.refresh(c, now);
    }

    fn login(&mut self, c: usize, now: i64) {
        self.machines[c].user = true;
        if let Some(t) = self.machines[c].task {
            if self.jobs[t].state == TaskState::Running {
                if self.traces.computers[c].suspendable {
                    self.push_segment(t, self.jobs[t].run_start, now, SegmentKind::Run);
                    let j = &mut self.jobs[t];
                    j.remaining -= now - j.run_start;
                    j.state = TaskState::Suspended;
                    j.suspend_start = now;
                    j.suspended_this_attempt = true;
                    j.epoch += 1;
                    let epoch = j.epoch;
                    self.events.push(
                        now + self.settings.suspend_timeout_s,
                        Event::SuspendTimeout(t, epoch),
                    );
                } else {
                    self.evict(t, now);
                }
            }
        }
        self.refresh(c, now);
        self.dispatch(now);
    }

    fn logout(&mut self, c: usize, now: i64) {
        self.machines[c].user = false;
        if let Some(t) = self.machines[c].task {
            if self.jobs[t].state == TaskState::Suspended {
                self.push_segment(t, self.jobs[t].suspend_start, now, SegmentKind::Suspended);
                let j = &mut self.jobs[t];
                j.state = TaskState::Running;
                j.run_start = now;
                j.epoch += 1;
                let (epoch, remaining) = (j.epoch, j.remaining);
                self.events.push(now + remaining, Event::Complete(t, epoch));
            }
        }
        self.refresh(c, now);
        self.dispatch(now);
    }

    fn complete(&mut self, t: usize, epoch: u64, now: i64) {
        if self.jobs[t].epoch != epoch || self.jobs[t].state != TaskState::Running {
            return;
        }
        self.push_segment(t, self.jobs[t].run_start, now, SegmentKind::Run);
        let c = self.jobs[t].computer.expect("placed task");
        let j = &mut self.jobs[t];
        j.state = TaskState::Completed;
        j.finish = Some(now);
        j.exec_duration = j.attempt_exec;
        j.epoch += 1;
        let outcome = if j.suspended_this_attempt {
            AttemptOutcome::SuspendedThenCompleted
        } else {
            AttemptOutcome::Completed
        };
        let token = j.token.take();
        self.machines[c].task = None;
        self.unfinished -= 1;
        self.last_completion = self.last_completion.max(now);
        if let Some(tok) = token {
            self.scheduler.resolve(tok, outcome, now);
        }
        self.refresh(c, now);
        self.dispatch(now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{AccountingMode, Computer, FirstFree, InteractiveSession, PowerRates, TaskSpec};

    fn computer(id: u32, suspendable: bool) -> Computer {
        Computer {
            id,
            cluster_id: 0,
            power: PowerRates::simple(1.0, 10.0, 100.0),
            efficiency: 1.0,
            suspendable,
            reboot_hour: None,
        }
    }

    fn task(id: u64, submit: i64, duration: i64) -> TaskSpec {
        TaskSpec {
            id,
            submit_time: submit,
            duration,
            batch_id: None,
        }
    }

    fn session(c: u32, a: i64, b: i64) -> InteractiveSession {
        InteractiveSession {
            computer_id: c,
            login_time: a,
            logout_time: b,
        }
    }

    fn run(traces: &TraceSet, settings: &SimSettings) -> SimResult {
        run_simulation(traces, &mut FirstFree, settings).unwrap()
    }

    #[test]
    fn single_task_energy_fixture() {
        let traces = TraceSet {
            computers: vec![computer(0, false)],
            sessions: vec![],
            tasks: vec![task(1, 0, 3600)],
        };
        let settings = SimSettings {
            horizon_s: Some(7200),
            ..Default::default()
        };
        let r = run(&traces, &settings);
        assert_eq!(r.average_overhead_s, 0.0);
        assert_eq!(r.total_energy_wh, 110.0);
        assert_eq!(r.ledger.rows[0].seconds.active_htc, 3600);
        assert_eq!(r.ledger.rows[0].seconds.idle, 3600);
    }

    #[test]
    fn eviction_fixture() {
        let traces = TraceSet {
            computers: vec![computer(0, false)],
            sessions: vec![session(0, 50, 80)],
            tasks: vec![task(1, 0, 100)],
        };
        let r = run(&traces, &SimSettings::default());
        let t = &r.tasks[0];
        assert_eq!(t.finish_time, Some(180));
        assert_eq!(t.attempts, 1);
        assert_eq!(r.average_overhead_s, 80.0);
        assert_eq!(r.horizon_s, 180);
    }

    #[test]
    fn suspension_resumes_on_logout() {
        let traces = TraceSet {
            computers: vec![computer(0, true)],
            sessions: vec![session(0, 50, 80)],
            tasks: vec![task(1, 0, 100)],
        };
        let r = run(&traces, &SimSettings::default());
        let t = &r.tasks[0];
        assert_eq!(t.finish_time, Some(130));
        assert_eq!(t.attempts, 0);
        assert_eq!(r.average_overhead_s, 30.0);
        assert_eq!(r.ledger.rows[0].seconds.active_both, 30);
    }

    #[test]
    fn long_suspension_evicts() {
        let traces = TraceSet {
            computers: vec![computer(0, true)],
            sessions: vec![session(0, 50, 1000)],
            tasks: vec![task(1, 0, 100)],
        };
        let settings = SimSettings {
            suspend_timeout_s: 600,
            ..Default::default()
        };
        let r = run(&traces, &settings);
        let t = &r.tasks[0];
        assert_eq!(t.attempts, 1);
        assert_eq!(t.finish_time, Some(1100));
        let s = r.ledger.rows[0].seconds;
        assert_eq!(s.active_both, 600);
        assert_eq!(s.active_user, 350);
    }

    #[test]
    fn empty_workload_is_idle_only() {
        let traces = TraceSet {
            computers: vec![computer(0, false), computer(1, false)],
            sessions: vec![session(0, 0, 3600)],
            tasks: vec![],
        };
        let settings = SimSettings {
            horizon_s: Some(7200),
            ..Default::default()
        };
        let r = run(&traces, &settings);
        assert_eq!(r.average_overhead_s, 0.0);
        // 3600 s idle on computer 0, 7200 s idle on computer 1, user time unattributed
        assert_eq!(r.total_energy_wh, 30.0);
        for row in &r.ledger.rows {
            assert_eq!(row.seconds.total(), 7200);
        }
    }

    #[test]
    fn reboot_evicts_running_task() {
        let mut c = computer(0, false);
        c.reboot_hour = Some(1);
        let traces = TraceSet {
            computers: vec![c],
            sessions: vec![],
            tasks: vec![task(1, 0, 5000)],
        };
        let settings = SimSettings {
            horizon_s: Some(WEEK),
            ..Default::default()
        };
        let r = run(&traces, &settings);
        let t = &r.tasks[0];
        assert_eq!(t.attempts, 1);
        assert_eq!(t.finish_time, Some(3600 + 5000));
    }

    #[test]
    fn sleep_after_idle_timeout() {
        let traces = TraceSet {
            computers: vec![computer(0, false)],
            sessions: vec![],
            tasks: vec![task(1, 0, 1000)],
        };
        let settings = SimSettings {
            sleep_after_s: Some(500),
            horizon_s: Some(4000),
            accounting: AccountingMode::TotalFacility,
            ..Default::default()
        };
        let r = run(&traces, &settings);
        let s = r.ledger.rows[0].seconds;
        assert_eq!(s.active_htc, 1000);
        assert_eq!(s.idle, 500);
        assert_eq!(s.sleep, 2500);
    }

    #[test]
    fn faster_computer_shortens_execution() {
        let mut fast = computer(0, false);
        fast.efficiency = 2.0;
        let traces = TraceSet {
            computers: vec![fast],
            sessions: vec![],
            tasks: vec![task(1, 10, 100)],
        };
        let r = run(&traces, &SimSettings::default());
        assert_eq!(r.tasks[0].finish_time, Some(60));
        assert_eq!(r.tasks[0].exec_duration, 50);
        assert_eq!(r.average_overhead_s, 0.0);
    }

    #[test]
    fn queued_tasks_wait_for_free_computer() {
        let traces = TraceSet {
            computers: vec![computer(0, false)],
            sessions: vec![],
            tasks: vec![task(1, 0, 100), task(2, 0, 100), task(3, 50, 10)],
        };
        let r = run(&traces, &SimSettings::default());
        let f: Vec<_> = r.tasks.iter().map(|t| t.finish_time.unwrap()).collect();
        assert_eq!(f, vec![100, 200, 210]);
        assert_eq!(r.average_overhead_s, (0.0 + 100.0 + 150.0) / 3.0);
    }

    #[test]
    fn invalid_traces_are_rejected() {
        let traces = TraceSet {
            computers: vec![computer(0, false)],
            sessions: vec![session(3, 0, 10)],
            tasks: vec![],
        };
        assert!(matches!(
            run_simulation(&traces, &mut FirstFree, &SimSettings::default()),
            Err(SimError::InvalidTrace(_))
        ));
        let none = TraceSet {
            computers: vec![],
            sessions: vec![],
            tasks: vec![],
        };
        assert_eq!(
            run_simulation(&none, &mut FirstFree, &SimSettings::default()),
            Err(SimError::NoComputers)
        );
    }
}
