//! End-to-end acceptance checks. Every test prints one `PASS`/`FAIL` line.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ehsched_core::baselines::CapMode;
use ehsched_core::energy::{traffic_budget_phi, BatteryState};
use ehsched_core::harness::run_simulation_observed;
use ehsched_core::inner::solve_inner;
use ehsched_core::oracle::{brute_force_inner, kkt_report, random_instance, sinr_direct, GridSpec};
use ehsched_core::scenario::load_params;
use ehsched_core::scheduler::per_user_backhaul_cap;
use ehsched_core::voice::{admit_voice, feasibility_check, voice_power};
use ehsched_core::{MetricsLog, RunOptions, SchedulerKind, SlotResult, SolveOptions, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE: &str = include_str!("../../../configs/reference.toml");
const BACKHAUL_500K: &str = include_str!("../../../configs/backhaul_500k.toml");
const BATTERY: &str = include_str!("../../../configs/battery.toml");

/// Writes to the stderr handle directly so the line survives output capture.
fn report(id: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "{verdict} criterion {id}: {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

#[derive(Debug, Clone, Copy)]
struct SlotChecks {
    budget_slots: usize,
    worst_budget_gap: f64,
    capped_slots: usize,
    worst_cap_excess: f64,
    min_battery: f64,
    max_battery: f64,
}

impl SlotChecks {
    fn new() -> Self {
        SlotChecks {
            budget_slots: 0,
            worst_budget_gap: 0.0,
            capped_slots: 0,
            worst_cap_excess: f64::NEG_INFINITY,
            min_battery: f64::INFINITY,
            max_battery: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, r: &SlotResult, cap: Option<(CapMode, f64)>) {
        self.min_battery = self.min_battery.min(r.battery_before.min(r.battery_after));
        self.max_battery = self.max_battery.max(r.battery_before.max(r.battery_after));
        let active = r.weights.iter().any(|&w| w > 0.0);
        if !r.outage && !r.cap_binding && active && r.data_budget > 0.0 {
            let gap = (r.data.total_power() - r.data_budget).abs() / r.data_budget;
            self.budget_slots += 1;
            self.worst_budget_gap = self.worst_budget_gap.max(gap);
        }
        if let Some((mode, cap)) = cap {
            let used = match mode {
                CapMode::PerUser => r.rates.iter().copied().fold(0.0, f64::max),
                CapMode::Sum => r.rates.iter().sum(),
            };
            self.capped_slots += 1;
            self.worst_cap_excess = self.worst_cap_excess.max(used / cap - 1.0);
        }
    }
}

struct Run {
    log: MetricsLog,
    checks: SlotChecks,
    elapsed: Duration,
}

fn simulate(params: &SystemParams, scheduler: SchedulerKind, num_slots: u64, grid_power: bool) -> Run {
    let options = RunOptions {
        scheduler,
        num_slots,
        seed: params.seed,
        grid_power,
    };
    let cap = match scheduler {
        SchedulerKind::Stochastic => None,
        SchedulerKind::PfPerUser => Some((CapMode::PerUser, CapMode::PerUser.cap(params).unwrap())),
        SchedulerKind::PfSum => Some((CapMode::Sum, CapMode::Sum.cap(params).unwrap())),
    };
    let mut checks = SlotChecks::new();
    let start = Instant::now();
    let log = run_simulation_observed(params, &options, |r| checks.observe(r, cap)).unwrap();
    Run {
        log,
        checks,
        elapsed: start.elapsed(),
    }
}

fn params(text: &str) -> SystemParams {
    load_params(text).unwrap()
}

fn run_500k() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(BACKHAUL_500K), SchedulerKind::Stochastic, 50_000, true))
}

fn run_2m() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(REFERENCE), SchedulerKind::Stochastic, 50_000, true))
}

fn run_2m_pf_per_user() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(REFERENCE), SchedulerKind::PfPerUser, 50_000, true))
}

fn run_2m_pf_sum() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(REFERENCE), SchedulerKind::PfSum, 50_000, true))
}

fn run_battery() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| simulate(&params(BATTERY), SchedulerKind::Stochastic, 100_000, false))
}

#[test]
fn oracle_optimality() {
    let grid = GridSpec {
        power_points: 200,
        code_points: 41,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..20 {
        let instance = random_instance(&SystemParams::reference(), 2, 4.0, &mut rng).unwrap();
        let solved = solve_inner(&instance, &SolveOptions::default()).unwrap();
        let oracle = brute_force_inner(&instance, &grid).unwrap();
        worst_gap = worst_gap.max((oracle.objective - solved.objective) / oracle.objective);
    }
    let elapsed = start.elapsed();
    report(
        1,
        worst_gap <= 0.01 && elapsed <= Duration::from_secs(120),
        format!(
            "20 two-user instances, worst grid-over-solver gap {:.3e} (limit 1e-2), {:.1} s (limit 120 s)",
            worst_gap,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn kkt_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut stationarity, mut slackness) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let users = rng.random_range(1..=6);
        let instance = random_instance(&SystemParams::reference(), users, 15.0, &mut rng).unwrap();
        let solved = solve_inner(&instance, &SolveOptions::default()).unwrap();
        let k = kkt_report(&instance, &solved).unwrap();
        stationarity = stationarity.max(k.max_stationarity()).max(k.boundary_violation);
        let products = k.power_slackness.abs().max(k.code_slackness.abs());
        slackness = slackness.max(products / k.objective);
    }
    report(
        2,
        stationarity < 1e-4 && slackness < 1e-6,
        format!(
            "100 instances of 1 to 6 users, max stationarity residual {stationarity:.2e} (limit 1e-4), \
             max slackness/objective {slackness:.2e} (limit 1e-6)"
        ),
    );
}

#[test]
fn budget_equality() {
    let runs = [
        ("500k stochastic", run_500k()),
        ("2M stochastic", run_2m()),
        ("2M pf-per-user", run_2m_pf_per_user()),
        ("2M pf-sum", run_2m_pf_sum()),
        ("battery stochastic", run_battery()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in runs {
        let c = run.checks;
        pass &= c.budget_slots > 0 && c.worst_budget_gap <= 1e-3;
        parts.push(format!(
            "{name} {} slots gap {:.1e}",
            c.budget_slots, c.worst_budget_gap
        ));
    }
    report(
        3,
        pass,
        format!("sum of data powers vs budget (limit 1e-3): {}", parts.join(", ")),
    );
}

#[test]
fn backhaul_feasibility_at_500k() {
    let run = run_500k();
    let p = params(BACKHAUL_500K);
    let cap = per_user_backhaul_cap(&p).unwrap();
    let summary = run.log.summary(0.1).unwrap();
    let worst = summary.max_avg_rate / cap;
    let min_mu = summary.tail_mu.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        4,
        worst <= 1.02 && min_mu > 0.0 && run.elapsed <= Duration::from_secs(300),
        format!(
            "cap {:.3} Kbps, max average rate {:.3} Kbps (ratio {worst:.4}, limit 1.02), min tail mu {min_mu:.3e}, {:.1} s",
            cap / 1e3,
            summary.max_avg_rate / 1e3,
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn access_limited_at_2m() {
    let summary = run_2m().log.summary(0.1).unwrap();
    let ratio = summary
        .tail_mu
        .iter()
        .zip(&summary.tail_lambda)
        .map(|(m, l)| m / l)
        .fold(0.0, f64::max);
    let spread = summary.max_avg_rate / summary.min_avg_rate;
    report(
        5,
        ratio <= 1e-2 && spread <= 1.05,
        format!("max tail mu/lambda {ratio:.2e} (limit 1e-2), max/min average rate {spread:.4} (limit 1.05)"),
    );
}

#[test]
fn fairer_than_pf() {
    let ours = run_2m().log.summary(0.1).unwrap().jain;
    let pf = run_2m_pf_per_user().log.summary(0.1).unwrap().jain;
    report(
        6,
        ours >= pf,
        format!("Jain stochastic {ours:.6} vs pf-per-user {pf:.6}"),
    );
}

#[test]
fn battery_lower_bound() {
    let run = run_battery();
    let p = params(BATTERY);
    let tail = run.log.summary(0.5).unwrap().tail_battery;
    let bound = p.harvest.prob_at(0) * p.packet_energy / p.alpha;
    let c = run.checks;
    let ok_range = c.min_battery >= 0.0 && c.max_battery <= p.b_max;
    report(
        7,
        tail >= 0.98 * bound && ok_range,
        format!(
            "tail mean battery {:.2} uJ (limit {:.2} uJ), range [{:.2}, {:.2}] uJ within [0, {:.0}] uJ",
            tail * 1e6,
            0.98 * bound * 1e6,
            c.min_battery * 1e6,
            c.max_battery * 1e6,
            p.b_max * 1e6
        ),
    );
}

#[test]
fn voice_correctness() {
    let p = SystemParams::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut served_total) = (0, 0);
    let (mut worst_approx, mut worst_exact) = (0.0f64, f64::INFINITY);
    for _ in 0..1000 {
        let users = rng.random_range(1..=4);
        let gains: Vec<f64> = (0..users)
            .map(|_| {
                let d: f64 = rng.random_range(50.0..250.0);
                10f64.powf(-3.8) * d.powf(-3.5) * rng.random_range(0.05..3.0)
            })
            .collect();
        let battery = BatteryState::new(rng.random_range(0.1..1.0) * p.b_max);
        let phi = traffic_budget_phi(&battery, &p);
        let p_rad = phi / p.slot_duration + p.p_cpich;
        let direct: f64 = gains.iter().map(|&h| voice_power(h, p_rad, &p).unwrap()).sum();
        let direct_ok = direct <= phi / p.slot_duration;
        if feasibility_check(&gains, &battery, &p).is_feasible() != direct_ok {
            mismatches += 1;
        }
        let alloc = admit_voice(&gains, &battery, &p, p.admission).unwrap();
        for &k in &alloc.served {
            served_total += 1;
            let approx = sinr_direct(alloc.powers[k], alloc.p_rad, gains[k], &p, false);
            let exact = sinr_direct(alloc.powers[k], alloc.p_rad, gains[k], &p, true);
            worst_approx = worst_approx.max((approx - p.gamma).abs() / p.gamma);
            worst_exact = worst_exact.min(exact / p.gamma);
        }
    }
    report(
        8,
        mismatches == 0 && worst_approx <= 1e-9 && worst_exact >= 1.0,
        format!(
            "1000 draws, {mismatches} verdict mismatches, {served_total} served users, \
             worst approximate SINR error {worst_approx:.1e}, min exact SINR/target {worst_exact:.6}"
        ),
    );
}

#[test]
fn pf_caps_enforced() {
    let per_user = run_2m_pf_per_user().checks;
    let sum = run_2m_pf_sum().checks;
    let mut battery = SlotChecks::new();
    for mode in [SchedulerKind::PfPerUser, SchedulerKind::PfSum] {
        let c = simulate(&params(BATTERY), mode, 20_000, false).checks;
        battery.capped_slots += c.capped_slots;
        battery.worst_cap_excess = battery.worst_cap_excess.max(c.worst_cap_excess);
    }
    let worst = per_user
        .worst_cap_excess
        .max(sum.worst_cap_excess)
        .max(battery.worst_cap_excess);
    report(
        9,
        worst <= 1e-3,
        format!(
            "{} slots, worst excess per-user {:.1e}, sum {:.1e}, battery mode {:.1e} (limit 1e-3)",
            per_user.capped_slots + sum.capped_slots + battery.capped_slots,
            per_user.worst_cap_excess,
            sum.worst_cap_excess,
            battery.worst_cap_excess
        ),
    );
}

#[test]
fn deterministic_csv() {
    let mut identical = true;
    let mut bytes = 0;
    for (text, grid) in [(REFERENCE, true), (BATTERY, false)] {
        let p = params(text);
        for scheduler in SchedulerKind::ALL {
            let csv = || simulate(&p, scheduler, 3000, grid).log.to_csv_string().unwrap();
            let (a, b) = (csv(), csv());
            identical &= a == b;
            bytes += a.len();
        }
    }
    report(
        10,
        identical,
        format!("6 run pairs ({bytes} CSV bytes per copy) identical: {identical}"),
    );
}
