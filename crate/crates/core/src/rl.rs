//! Epsilon-greedy placement scheduler.
//!
//! The state is the hour (of day or of week) and a bucket of the free-computer
//! fraction. Each (state, action) pair keeps a bounded window of rewards whose
//! mean, optionally gaussian-weighted towards recent rewards, is the action's
//! estimate. Epsilon is revised at each simulated midnight by one of four
//! policies.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::genome::{EntityLevel, EpsilonPolicy, RlParameterSet};
use crate::sim::{
    AttemptOutcome, Computer, DecisionToken, Placement, PlacementRequest, Scheduler, DAY, HOUR,
    WEEK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// A single computer, by index.
    Computer(usize),
    /// Any free computer of a cluster.
    Cluster(u32),
    /// Any free computer in the pool.
    Run,
    Queue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub hour: u32,
    /// 0 none free, 1 below 25%, 2 below 50%, 3 below 75%, 4 otherwise.
    pub availability: u8,
}

impl StateKey {
    pub fn new(time: i64, free: usize, total: usize, week: bool) -> Self {
        let hour = if week {
            (time.rem_euclid(WEEK) / HOUR) as u32
        } else {
            (time.rem_euclid(DAY) / HOUR) as u32
        };
        StateKey {
            hour,
            availability: availability_class(free, total),
        }
    }
}

pub fn availability_class(free: usize, total: usize) -> u8 {
    if free == 0 || total == 0 {
        return 0;
    }
    let f = free as f64 / total as f64;
    if f < 0.25 {
        1
    } else if f < 0.5 {
        2
    } else if f < 0.75 {
        3
    } else {
        4
    }
}

/// Actions at the given entity level, queue last.
pub fn action_space(level: EntityLevel, computers: &[Computer]) -> Vec<Action> {
    let mut actions: Vec<Action> = match level {
        EntityLevel::Computer => (0..computers.len()).map(Action::Computer).collect(),
        EntityLevel::Cluster => {
            let mut ids: Vec<u32> = computers.iter().map(|c| c.cluster_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter().map(Action::Cluster).collect()
        }
        EntityLevel::Whole => vec![Action::Run],
    };
    actions.push(Action::Queue);
    actions
}

#[derive(Debug, Clone, Default)]
pub struct RewardHistory {
    /// Newest at the back.
    rewards: VecDeque<f64>,
    limit: Option<usize>,
}

impl RewardHistory {
    /// `history` < 0 keeps every reward.
    pub fn new(history: i64) -> Self {
        RewardHistory {
            rewards: VecDeque::new(),
            limit: usize::try_from(history).ok(),
        }
    }

    pub fn push(&mut self, r: f64) {
        self.rewards.push_back(r);
        if let Some(limit) = self.limit {
            while self.rewards.len() > limit {
                self.rewards.pop_front();
            }
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Oldest first.
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.rewards.iter().copied()
    }
}

/// Plain or gaussian-weighted mean of the window; 0 when empty.
pub fn action_estimate(hist: &RewardHistory, gaussian: bool) -> f64 {
    let n = hist.len();
    if n == 0 {
        return 0.0;
    }
    if !gaussian {
        return hist.rewards().sum::<f64>() / n as f64;
    }
    let s = n as f64 / 3.0;
    let (mut num, mut den) = (0.0, 0.0);
    // k = 0 for the newest reward.
    for (k, r) in hist.rewards.iter().rev().enumerate() {
        let w = (-((k * k) as f64) / (2.0 * s * s)).exp();
        num += w * r;
        den += w;
    }
    num / den
}

pub fn outcome_reward(outcome: AttemptOutcome) -> f64 {
    match outcome {
        AttemptOutcome::Completed => 1.0,
        AttemptOutcome::SuspendedThenCompleted => 0.5,
        AttemptOutcome::Evicted => -1.0,
        AttemptOutcome::QueuedExpired => 0.0,
    }
}

/// `(1 - sigma) * r_out + sigma * r_eff`, with `r_eff` in [-1, 1].
pub fn compute_reward(outcome: AttemptOutcome, r_eff: f64, sigma: f64) -> f64 {
    (1.0 - sigma) * outcome_reward(outcome) + sigma * r_eff
}

/// Energy efficiency of each computer min-max scaled to [-1, 1]; all zeros
/// when every computer is equally efficient.
pub fn efficiency_terms(computers: &[Computer]) -> Vec<f64> {
    let ee: Vec<f64> = computers.iter().map(Computer::energy_efficiency).collect();
    let lo = ee.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ee.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; ee.len()];
    }
    ee.iter().map(|e| 2.0 * (e - lo) / (hi - lo) - 1.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonState {
    pub current: f64,
    pub previous: f64,
    pub day_sum: f64,
    pub day_count: u64,
    pub day_best: f64,
    pub day_all_negative: bool,
}

impl EpsilonState {
    pub fn new(params: &RlParameterSet) -> Self {
        let e = params.epsilon_levels[0].clamp(0.0, 1.0);
        EpsilonState {
            current: e,
            previous: e,
            day_sum: 0.0,
            day_count: 0,
            day_best: f64::NEG_INFINITY,
            day_all_negative: true,
        }
    }

    pub fn day_average(&self) -> Option<f64> {
        (self.day_count > 0).then(|| self.day_sum / self.day_count as f64)
    }

    /// Record one reward; under the `hit` policy this may move epsilon.
    pub fn record(&mut self, reward: f64, params: &RlParameterSet) {
        let before = self.day_average().unwrap_or(0.0);
        self.day_sum += reward;
        self.day_count += 1;
        self.day_best = self.day_best.max(reward);
        self.day_all_negative &= reward < 0.0;
        if params.epsilon_policy == EpsilonPolicy::Hit {
            let after = self.day_sum / self.day_count as f64;
            let crossed = params
                .reward_boundaries
                .iter()
                .position(|&r| (before < r) != (after < r));
            if let Some(i) = crossed {
                self.previous = self.current;
                self.current = params.epsilon_levels[i].clamp(0.0, 1.0);
            }
        }
    }

    fn reset_day(&mut self) {
        self.day_sum = 0.0;
        self.day_count = 0;
        self.day_best = f64::NEG_INFINITY;
        self.day_all_negative = true;
    }
}

fn bracket(avg: f64, r: &[f64; 3]) -> usize {
    if avg < r[0] {
        0
    } else if avg < r[1] {
        1
    } else {
        2
    }
}

/// Revise epsilon at the end of `day` (1 at the first midnight) and clear the
/// day accumulators. Returns the new epsilon and a label of the branch taken.
pub fn end_of_day_epsilon(params: &RlParameterSet, eps: &mut EpsilonState, day: i64) -> (f64, String) {
    let old = eps.current;
    let avg = eps.day_average();
    let levels = params.epsilon_levels;
    let (mut next, mut branch) = match params.epsilon_policy {
        EpsilonPolicy::Days => {
            let i = params.ranges.iter().position(|&r| day <= r).unwrap_or(2);
            (levels[i], format!("days[{i}]"))
        }
        EpsilonPolicy::Previous => match avg {
            Some(a) => {
                let i = bracket(a, &params.reward_boundaries);
                (levels[i], format!("previous[{i}]"))
            }
            None => (old, "no_data".to_string()),
        },
        EpsilonPolicy::Ratio => match avg {
            Some(a) if a > 0.0 && eps.day_best / a < params.threshold => {
                (eps.previous, "ratio_revert".to_string())
            }
            Some(a) => {
                let i = bracket(a, &params.reward_boundaries);
                (levels[i], format!("ratio[{i}]"))
            }
            None => (old, "no_data".to_string()),
        },
        EpsilonPolicy::Hit => (old, "hit".to_string()),
    };
    if params.days > 0 && day <= params.days {
        next += params.delta;
        branch.push_str("+delta");
    }
    if params.prior && eps.day_count > 0 && eps.day_all_negative {
        next += 0.1;
        branch.push_str("+prior");
    }
    let next = next.clamp(0.0, 1.0);
    if params.epsilon_policy != EpsilonPolicy::Hit {
        eps.previous = old;
    }
    eps.current = next;
    eps.reset_day();
    (next, branch)
}

/// Pick `candidates[i]`: uniformly at random with probability `epsilon`,
/// otherwise the best estimate with ties broken uniformly.
pub fn select_index<R: Rng + ?Sized>(estimates: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!estimates.is_empty(), "no candidate actions");
    if rng.gen_bool(epsilon.clamp(0.0, 1.0)) {
        return rng.gen_range(0..estimates.len());
    }
    let best = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..estimates.len()).filter(|&i| estimates[i] == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayDiagnostic {
    pub day: i64,
    pub epsilon: f64,
    pub avg_reward: Option<f64>,
    pub best_reward: Option<f64>,
    pub policy_branch: String,
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DayDiagnostic]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
struct Pending {
    state: StateKey,
    action: usize,
    computer: Option<usize>,
}

pub struct RlScheduler {
    params: RlParameterSet,
    actions: Vec<Action>,
    eff: Vec<f64>,
    table: HashMap<(StateKey, usize), RewardHistory>,
    eps: EpsilonState,
    rng: ChaCha8Rng,
    pending: HashMap<DecisionToken, Pending>,
    next_token: DecisionToken,
    diagnostics: Vec<DayDiagnostic>,
}

impl RlScheduler {
    pub fn new(params: RlParameterSet, computers: &[Computer], seed: u64) -> Self {
        RlScheduler {
            actions: action_space(params.entity_level, computers),
            eff: efficiency_terms(computers),
            table: HashMap::new(),
            eps: EpsilonState::new(&params),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: HashMap::new(),
            next_token: 0,
            diagnostics: Vec::new(),
            params,
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn epsilon(&self) -> &EpsilonState {
        &self.eps
    }

    pub fn diagnostics(&self) -> &[DayDiagnostic] {
        &self.diagnostics
    }

    pub fn history(&self, state: StateKey, action: usize) -> Option<&RewardHistory> {
        self.table.get(&(state, action))
    }

    pub fn estimate(&self, state: StateKey, action: usize) -> f64 {
        self.table
            .get(&(state, action))
            .map_or(0.0, |h| action_estimate(h, self.params.gaussian))
    }

    /// Record a reward for (state, action) and fold it into the day totals.
    pub fn update(&mut self, state: StateKey, action: usize, reward: f64) {
        let history = self.params.history;
        self.table
            .entry((state, action))
            .or_insert_with(|| RewardHistory::new(history))
            .push(reward);
        self.eps.record(reward, &self.params);
    }

    /// Most energy-efficient free computer the action can use; lowest index on ties.
    fn target(&self, action: Action, free: &[usize], computers: &[Computer]) -> Option<usize> {
        let in_scope = |c: usize| match action {
            Action::Computer(i) => c == i,
            Action::Cluster(k) => computers[c].cluster_id == k,
            Action::Run => true,
            Action::Queue => false,
        };
        let better = |c: usize, b: usize| {
            let (ec, eb) = (computers[c].energy_efficiency(), computers[b].energy_efficiency());
            ec > eb || (ec == eb && c < b)
        };
        let mut best: Option<usize> = None;
        for &c in free.iter().filter(|&&c| in_scope(c)) {
            if best.map_or(true, |b| better(c, b)) {
                best = Some(c);
            }
        }
        best
    }

    fn issue(&mut self, pending: Pending) -> DecisionToken {
        let t = self.next_token;
        self.next_token += 1;
        self.pending.insert(t, pending);
        t
    }
}

impl Scheduler for RlScheduler {
    fn place(&mut self, req: &PlacementRequest<'_>) -> (Placement, Option<DecisionToken>) {
        let state = StateKey::new(req.time, req.free.len(), req.computers.len(), self.params.week);
        let queue = self.actions.len() - 1;
        let mut candidates: Vec<(usize, Option<usize>)> = Vec::new();
        for (i, &a) in self.actions.iter().enumerate() {
            if a == Action::Queue {
                if req.allow_queue {
                    candidates.push((i, None));
                }
            } else if let Some(c) = self.target(a, req.free, req.computers) {
                candidates.push((i, Some(c)));
            }
        }
        if candidates.is_empty() {
            return (Placement::Queue, None);
        }
        let estimates: Vec<f64> = candidates.iter().map(|&(a, _)| self.estimate(state, a)).collect();
        let epsilon = self.eps.current;
        let (mut action, mut computer) = candidates[select_index(&estimates, epsilon, &mut self.rng)];

        if self.params.defer && req.allow_queue {
            if let Some(c) = computer {
                let hour_of_week = (req.time.rem_euclid(WEEK) / HOUR) as u32;
                if req.computers[c].reboot_hour == Some(hour_of_week) {
                    action = queue;
                    computer = None;
                }
            }
        }
        let token = self.issue(Pending {
            state,
            action,
            computer,
        });
        match computer {
            Some(c) => (Placement::Run(c), Some(token)),
            None => (Placement::Queue, Some(token)),
        }
    }

    fn resolve(&mut self, token: DecisionToken, outcome: AttemptOutcome, _time: i64) {
        let Some(p) = self.pending.remove(&token) else {
            return;
        };
        let r_eff = p.computer.map_or(0.0, |c| self.eff[c]);
        let reward = compute_reward(outcome, r_eff, self.params.sigma);
        self.update(p.state, p.action, reward);
    }

    fn end_of_day(&mut self, day: i64) {
        let avg = self.eps.day_average();
        let best = (self.eps.day_count > 0).then_some(self.eps.day_best);
        let (epsilon, policy_branch) = end_of_day_epsilon(&self.params, &mut self.eps, day);
        self.diagnostics.push(DayDiagnostic {
            day,
            epsilon,
            avg_reward: avg,
            best_reward: best,
            policy_branch,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PowerRates;

    fn computer(id: u32, cluster: u32, efficiency: f64) -> Computer {
        Computer {
            id,
            cluster_id: cluster,
            power: PowerRates::simple(1.0, 10.0, 100.0),
            efficiency,
            suspendable: false,
            reboot_hour: None,
        }
    }

    fn hist(h: i64, rs: &[f64]) -> RewardHistory {
        let mut x = RewardHistory::new(h);
        for &r in rs {
            x.push(r);
        }
        x
    }

    #[test]
    fn estimate_examples() {
        let ones = hist(-1, &[1.0, 1.0, 1.0]);
        assert_eq!(action_estimate(&ones, false), 1.0);
        assert!((action_estimate(&ones, true) - 1.0).abs() < 1e-12);
        // oldest -1, newest 1
        assert!(action_estimate(&hist(-1, &[-1.0, 1.0]), true) > 0.0);
        let w = hist(2, &[-3.0, 0.2, 0.5, 0.9]);
        assert!((action_estimate(&w, false) - 0.7).abs() < 1e-12);
        assert_eq!(action_estimate(&RewardHistory::new(5), true), 0.0);
    }

    #[test]
    fn window_bounds() {
        let mut h = RewardHistory::new(3);
        for r in [1.0, 2.0, 3.0, 4.0] {
            h.push(r);
        }
        assert_eq!(h.rewards().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        let mut u = RewardHistory::new(-1);
        for i in 0..1000 {
            u.push(i as f64);
        }
        assert_eq!(u.len(), 1000);
    }

    #[test]
    fn reward_examples() {
        for o in [AttemptOutcome::Completed, AttemptOutcome::Evicted] {
            assert_eq!(compute_reward(o, 0.8, 0.0), outcome_reward(o));
        }
        let mut cs = [computer(0, 0, 1.0), computer(1, 0, 2.0), computer(2, 0, 3.0)];
        for c in &mut cs {
            c.power.active_htc = 1.0;
        }
        let eff = efficiency_terms(&cs);
        assert_eq!(eff, vec![-1.0, 0.0, 1.0]);
        assert_eq!(compute_reward(AttemptOutcome::Evicted, eff[2], 1.0), 1.0);
        assert_eq!(compute_reward(AttemptOutcome::Completed, eff[1], 0.5), 0.5);
        assert_eq!(efficiency_terms(&[computer(0, 0, 1.0), computer(1, 0, 1.0)]), vec![0.0, 0.0]);
    }

    #[test]
    fn action_space_sizes() {
        let cs = [computer(0, 4, 1.0), computer(1, 4, 1.0), computer(2, 9, 1.0)];
        assert_eq!(action_space(EntityLevel::Whole, &cs).len(), 2);
        assert_eq!(action_space(EntityLevel::Cluster, &cs).len(), 3);
        assert_eq!(action_space(EntityLevel::Computer, &cs).len(), 4);
        assert_eq!(*action_space(EntityLevel::Computer, &cs).last().unwrap(), Action::Queue);
    }

    #[test]
    fn greedy_picks_strict_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            assert_eq!(select_index(&[0.1, 0.9, -0.3, 0.5], 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[select_index(&[5.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn greedy_ties_are_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false; 3];
        for _ in 0..200 {
            seen[select_index(&[1.0, 1.0, 0.0], 0.0, &mut rng)] = true;
        }
        assert_eq!(seen, [true, true, false]);
    }

    fn request<'a>(time: i64, free: &'a [usize], cs: &'a [Computer], task: &'a crate::sim::TaskSpec) -> PlacementRequest<'a> {
        PlacementRequest {
            time,
            task,
            free,
            computers: cs,
            allow_queue: true,
        }
    }

    #[test]
    fn defer_queues_before_reboot() {
        let mut c = computer(0, 0, 1.0);
        c.reboot_hour = Some(26); // Tuesday 02:00
        let cs = [c];
        let params = RlParameterSet {
            entity_level: EntityLevel::Whole,
            epsilon_levels: [0.0, 0.0, 0.0],
            defer: true,
            ..Default::default()
        };
        let mut s = RlScheduler::new(params.clone(), &cs, 1);
        let hour = StateKey::new(26 * HOUR, 1, 1, false);
        s.update(hour, 0, 1.0);
        s.update(StateKey { hour: 3, ..hour }, 0, 1.0);
        let task = crate::sim::TaskSpec {
            id: 0,
            submit_time: 0,
            duration: 1,
            batch_id: None,
        };
        let (p, tok) = s.place(&request(26 * HOUR + 100, &[0], &cs, &task));
        assert_eq!(p, Placement::Queue);
        assert!(tok.is_some());
        let (p, _) = s.place(&request(27 * HOUR, &[0], &cs, &task));
        assert_eq!(p, Placement::Run(0));

        let mut no_defer = RlScheduler::new(RlParameterSet { defer: false, ..params }, &cs, 1);
        no_defer.update(hour, 0, 1.0);
        let (p, _) = no_defer.place(&request(26 * HOUR + 100, &[0], &cs, &task));
        assert_eq!(p, Placement::Run(0));
    }

    #[test]
    fn cluster_action_targets_most_efficient() {
        let cs = [computer(0, 0, 1.0), computer(1, 0, 2.0), computer(2, 1, 3.0)];
        let s = RlScheduler::new(RlParameterSet::default(), &cs, 1);
        assert_eq!(s.target(Action::Cluster(0), &[0, 1, 2], &cs), Some(1));
        assert_eq!(s.target(Action::Cluster(0), &[0, 2], &cs), Some(0));
        assert_eq!(s.target(Action::Cluster(1), &[0, 1], &cs), None);
        assert_eq!(s.target(Action::Run, &[0, 1, 2], &cs), Some(2));
    }

    #[test]
    fn update_counts_once() {
        let cs = [computer(0, 0, 1.0)];
        let mut s = RlScheduler::new(RlParameterSet::default(), &cs, 1);
        let k = StateKey { hour: 3, availability: 4 };
        for i in 1..=5 {
            s.update(k, 0, 0.5);
            assert_eq!(s.epsilon().day_count, i);
        }
    }

    #[test]
    fn days_policy_brackets() {
        let params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Days,
            ranges: [10, 20, 999_999],
            epsilon_levels: [0.3, 0.2, 0.1],
            ..Default::default()
        };
        let mut e = EpsilonState::new(&params);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 15).0, 0.2);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 10).0, 0.3);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 21).0, 0.1);
    }

    #[test]
    fn prior_boost_clamps() {
        let params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Hit,
            prior: true,
            ..Default::default()
        };
        let mut e = EpsilonState::new(&params);
        e.current = 0.95;
        e.day_sum = -1.5;
        e.day_count = 3;
        e.day_best = -0.1;
        e.day_all_negative = true;
        assert_eq!(end_of_day_epsilon(&params, &mut e, 1).0, 1.0);
    }

    #[test]
    fn delta_only_while_days_gene_active() {
        let mut params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Days,
            ranges: [999_999; 3],
            epsilon_levels: [0.3, 0.2, 0.1],
            days: 0,
            delta: 0.25,
            ..Default::default()
        };
        let mut e = EpsilonState::new(&params);
        for day in 1..10 {
            assert_eq!(end_of_day_epsilon(&params, &mut e, day).0, 0.3);
        }
        params.days = 2;
        assert_eq!(end_of_day_epsilon(&params, &mut e, 2).0, 0.55);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 3).0, 0.3);
    }

    #[test]
    fn previous_and_ratio_policies() {
        let params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Previous,
            reward_boundaries: [-0.5, 0.0, 0.5],
            epsilon_levels: [0.3, 0.2, 0.1],
            ..Default::default()
        };
        let mut e = EpsilonState::new(&params);
        e.record(-0.8, &params);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 1).0, 0.3);
        e.record(-0.2, &params);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 2).0, 0.2);
        e.record(0.9, &params);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 3).0, 0.1);
        // No rewards: unchanged.
        assert_eq!(end_of_day_epsilon(&params, &mut e, 4).0, 0.1);

        let ratio = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Ratio,
            threshold: 2.0,
            ..params
        };
        let mut e = EpsilonState::new(&ratio);
        e.record(0.9, &ratio);
        // best/avg = 1 < 2: revert to the previous epsilon (initial 0.3).
        let (eps, branch) = end_of_day_epsilon(&ratio, &mut e, 1);
        assert_eq!((eps, branch.as_str()), (0.3, "ratio_revert"));
        e.record(-0.9, &ratio);
        assert_eq!(end_of_day_epsilon(&ratio, &mut e, 2).0, 0.3);
    }

    #[test]
    fn hit_policy_switches_on_crossing() {
        let params = RlParameterSet {
            epsilon_policy: EpsilonPolicy::Hit,
            reward_boundaries: [-0.5, 0.0, 0.5],
            epsilon_levels: [0.3, 0.2, 0.1],
            ..Default::default()
        };
        let mut e = EpsilonState::new(&params);
        e.record(-0.2, &params); // running mean 0 -> -0.2 crosses R2
        assert_eq!(e.current, 0.2);
        e.record(-1.0, &params); // -0.2 -> -0.6 crosses R1
        assert_eq!(e.current, 0.3);
        assert_eq!(end_of_day_epsilon(&params, &mut e, 1).0, 0.3);
    }

    #[test]
    fn diagnostics_csv_header() {
        let rows = vec![DayDiagnostic {
            day: 1,
            epsilon: 0.2,
            avg_reward: Some(0.5),
            best_reward: None,
            policy_branch: "previous[2]".into(),
        }];
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("day,epsilon,avg_reward,best_reward,policy_branch\n1,0.2,0.5,,previous[2]"));
    }
}
