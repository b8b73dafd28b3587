use htcopt::genome::{self, GenomeSpec};
use htcopt::sim::{AccountingMode, SegmentKind, SimResult, SimSettings, TaskSpec};
use htcopt::traces::{generate, TraceConfig, TraceSet};
use htcopt::tuning::simulate_rl;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenario(seed: u64, computers: u32, tasks: u32, days: u32) -> TraceSet {
    generate(&TraceConfig {
        horizon_days: days,
        computer_count: computers,
        cluster_count: computers.min(3),
        task_count: tasks,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn run(traces: &TraceSet, seed: u64, mode: AccountingMode, timeout: i64) -> SimResult {
    let params = genome::sample(&GenomeSpec::rl_default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let settings = SimSettings {
        suspend_timeout_s: timeout,
        accounting: mode,
        ..Default::default()
    };
    simulate_rl(traces, &params, &settings, seed).unwrap()
}

/// Energy from session and task intervals alone.
fn interval_energy(traces: &TraceSet, r: &SimResult, mode: AccountingMode) -> f64 {
    let mut wh = 0.0;
    for c in &traces.computers {
        let user: i64 = traces
            .sessions
            .iter()
            .filter(|s| s.computer_id == c.id)
            .map(|s| s.logout_time - s.login_time)
            .sum();
        let (mut run, mut suspended) = (0i64, 0i64);
        for seg in r.tasks.iter().flat_map(|t| &t.segments).filter(|s| s.computer_id == c.id) {
            match seg.kind {
                SegmentKind::Run => run += seg.end - seg.start,
                SegmentKind::Suspended => suspended += seg.end - seg.start,
            }
        }
        let idle = r.horizon_s - user - run;
        wh += (run as f64 * c.power.active_htc + idle as f64 * c.power.idle) / 3600.0;
        if mode == AccountingMode::TotalFacility {
            wh += ((user - suspended) as f64 * c.power.active_user
                + suspended as f64 * c.power.active_both)
                / 3600.0;
        }
    }
    wh
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_and_energy_conservation(
        seed in any::<u64>(),
        computers in 1u32..12,
        tasks in 0u32..150,
        days in 1u32..5,
        timeout in 0i64..3000,
        total in any::<bool>(),
    ) {
        let traces = scenario(seed, computers, tasks, days);
        let mode = if total { AccountingMode::TotalFacility } else { AccountingMode::HtcAttribution };
        let r = run(&traces, seed, mode, timeout);
        for row in &r.ledger.rows {
            prop_assert_eq!(row.seconds.total(), r.horizon_s);
        }
        let oracle = interval_energy(&traces, &r, mode);
        prop_assert!((r.total_energy_wh - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        prop_assert_eq!(r.tasks_completed, traces.tasks.len());
        for t in &r.tasks {
            let o = t.overhead().unwrap();
            prop_assert!(o >= 0, "task {} overhead {}", t.task_id, o);
            prop_assert!(t.finish_time.unwrap() >= t.submit_time + t.exec_duration);
        }
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), computers in 1u32..8, tasks in 0u32..80) {
        let traces = scenario(seed, computers, tasks, 2);
        let a = run(&traces, seed, AccountingMode::HtcAttribution, 600);
        let b = run(&traces, seed, AccountingMode::HtcAttribution, 600);
        prop_assert_eq!(a, b);
    }
}

// With identical computers and no interactive users every task's run time is
// fixed, so the only freedom left is when it runs. Elsewhere placement
// changes can legitimately move energy either way.
#[test]
fn extra_task_never_lowers_energy() {
    use htcopt::sim::{run_simulation, FirstFree};
    for seed in 0..20 {
        let mut traces = scenario(seed, 4, 30, 2);
        traces.sessions.clear();
        let template = traces.computers[0].clone();
        for c in &mut traces.computers {
            c.power = template.power;
            c.efficiency = template.efficiency;
            c.reboot_hour = None;
        }
        let settings = SimSettings {
            horizon_s: Some(4 * 86_400),
            ..Default::default()
        };
        let before = run_simulation(&traces, &mut FirstFree, &settings).unwrap();
        let id = traces.tasks.iter().map(|t| t.id).max().unwrap_or(0) + 1;
        traces.tasks.push(TaskSpec {
            id,
            submit_time: 86_400,
            duration: 1800,
            batch_id: None,
        });
        let after = run_simulation(&traces, &mut FirstFree, &settings).unwrap();
        assert!(
            after.total_energy_wh >= before.total_energy_wh - 1e-9,
            "seed {seed}: {} < {}",
            after.total_energy_wh,
            before.total_energy_wh
        );
    }
}
