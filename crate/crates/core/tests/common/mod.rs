//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the library's delay formulas.
#![allow(dead_code)]

use fogsim::agent::{AgentConfig, HeadMode, OraAgent, StateScale};
use fogsim::alloc::JointAction;
use fogsim::model::{LinkBudget, SystemCapacity, TaskSpec};
use fogsim::sim::{EpisodeReport, ObsState, Transition};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const BLOCK_HZ: f64 = 1.8e5;
pub const UNIT_HZ: f64 = 1e7;

pub fn cap(m: u32, n: u32) -> SystemCapacity {
    SystemCapacity {
        block_width_hz: BLOCK_HZ,
        unit_cycles_per_s: UNIT_HZ,
        total_blocks: m,
        total_units: n,
        qos_deadline_s: 1.0,
        drop_penalty_s: 10.0,
        shannon_plus_one: true,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Link budget worked in dB: transmit power in dBm minus path loss gives
/// received power, minus noise floor gives SNR.
pub fn hand_eta(tx_power_w: f64, path_loss_db: f64, noise_dbm: f64) -> f64 {
    let tx_dbm = 10.0 * (tx_power_w * 1000.0).log10();
    let snr_db = tx_dbm - path_loss_db - noise_dbm;
    let snr = 10f64.powf(snr_db / 10.0);
    (1.0 + snr).log2()
}

/// Served delay, or the 10 s penalty past the 1 s deadline / on a zero grant.
pub fn hand_delay(l: f64, mu: f64, snr: f64, x: u32, y: u32, c: &SystemCapacity) -> (f64, bool) {
    if x == 0 || y == 0 {
        return (c.drop_penalty_s, true);
    }
    let rate = x as f64 * c.block_width_hz * (1.0 + snr).log2();
    let speed = y as f64 * c.unit_cycles_per_s;
    let d = l / rate + mu * l / speed;
    if d <= c.qos_deadline_s {
        (d, false)
    } else {
        (c.drop_penalty_s, true)
    }
}

pub fn task_snr(t: &TaskSpec) -> f64 {
    t.link.tx_power_w * t.link.channel_gain / t.link.noise_power_w
}

pub fn task(id: u32, l: f64, mu: f64, snr: f64) -> TaskSpec {
    TaskSpec::new(id, 0.0, l, mu, LinkBudget::new(snr, 1.0, 1.0).unwrap()).unwrap()
}

/// Flat odometer over every `(x_i, y_i)` in `[0, M] x [0, N]` per task,
/// discarding combinations over capacity. Ties (within 1e-12 relative) go
/// to the lexicographically smallest grant list.
pub fn enumerate_static(tasks: &[TaskSpec], c: &SystemCapacity) -> (Vec<(u32, u32)>, f64) {
    let k = tasks.len();
    let (m, n) = (c.total_blocks, c.total_units);
    let mut digits = vec![0u32; 2 * k];
    let mut all: Vec<(Vec<(u32, u32)>, f64)> = Vec::new();
    loop {
        let sx: u32 = (0..k).map(|i| digits[2 * i]).sum();
        let sy: u32 = (0..k).map(|i| digits[2 * i + 1]).sum();
        if sx <= m && sy <= n {
            let grants: Vec<(u32, u32)> =
                (0..k).map(|i| (digits[2 * i], digits[2 * i + 1])).collect();
            let mut total = 0.0;
            for (t, g) in tasks.iter().zip(&grants) {
                total += hand_delay(t.data_size_bits, t.intensity, task_snr(t), g.0, g.1, c).0;
            }
            all.push((grants, total / k as f64));
        }
        // advance odometer
        let mut pos = 0;
        loop {
            if pos == 2 * k {
                let best = all.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
                let winner = all
                    .iter()
                    .filter(|(_, v)| (v - best).abs() <= 1e-12 * v.abs().max(best.abs()))
                    .map(|(g, v)| (g.clone(), *v))
                    .min_by(|a, b| a.0.cmp(&b.0))
                    .unwrap();
                return winner;
            }
            let limit = if pos % 2 == 0 { m } else { n };
            if digits[pos] < limit {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

pub fn random_static_instance(
    rng: &mut ChaCha8Rng,
    max_tasks: usize,
    max_res: u32,
) -> (Vec<TaskSpec>, SystemCapacity) {
    let k = rng.gen_range(1..=max_tasks);
    let c = cap(rng.gen_range(1..=max_res), rng.gen_range(1..=max_res));
    let tasks = (0..k)
        .map(|i| {
            let l = rng.gen_range(1e5..1.5e6);
            let mu = rng.gen_range(0.5..8.0);
            let snr = 10f64.powf(rng.gen_range(0.0..4.0));
            task(i as u32, l, mu, snr)
        })
        .collect();
    (tasks, c)
}

/// Straight-line re-run of an episode from its recorded requests: releases
/// everything whose completion time is at or before each arrival, clamps
/// the request to what is free, and recomputes the delay by hand.
pub fn replay_mean_delay(
    tasks: &[TaskSpec],
    report: &EpisodeReport,
    c: &SystemCapacity,
) -> (f64, Vec<(u32, u32)>) {
    let mut live: Vec<(f64, u32, u32)> = Vec::new();
    let mut total = 0.0;
    let mut grants = Vec::new();
    for (t, o) in tasks.iter().zip(&report.outcomes) {
        assert_eq!(t.id, o.id);
        live.retain(|r| r.0 > t.arrival_time);
        let used_x: u32 = live.iter().map(|r| r.1).sum();
        let used_y: u32 = live.iter().map(|r| r.2).sum();
        let x = o.requested.blocks.min(c.total_blocks - used_x);
        let y = o.requested.units.min(c.total_units - used_y);
        let (d, dropped) = hand_delay(t.data_size_bits, t.intensity, task_snr(t), x, y, c);
        if !dropped {
            live.push((t.arrival_time + d, x, y));
            grants.push((x, y));
        } else {
            grants.push((0, 0));
        }
        total += d;
    }
    (total / tasks.len() as f64, grants)
}

pub fn small_agent_config(seed: u64, hidden: Vec<usize>) -> AgentConfig {
    AgentConfig {
        seed,
        hidden_layers: hidden,
        ..AgentConfig::default()
    }
}

pub fn unit_scale() -> StateScale {
    StateScale {
        blocks: 1.0,
        units: 1.0,
        data_bits: 2e6,
        cycles: 2e7,
    }
}

pub fn random_state(rng: &mut ChaCha8Rng, c: &SystemCapacity) -> ObsState {
    ObsState {
        remaining_blocks: rng.gen_range(0..=c.total_blocks),
        remaining_units: rng.gen_range(0..=c.total_units),
        data_size_bits: rng.gen_range(1e4..3e6),
        computation_cycles: rng.gen_range(1e4..5e7),
    }
}

/// Tape entries rearranged into `DenseNet::params` order (per layer:
/// weights then biases).
pub fn tape_in_param_order(tape: &fogsim::nn::GradientTape) -> Vec<f64> {
    tape.weights
        .iter()
        .zip(&tape.biases)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
        .collect()
}

/// Worst per-component mismatch between an analytic gradient and central
/// differences of `f`, relative to the larger magnitude with a small floor.
pub fn fd_mismatch(analytic: &[f64], mut f: impl FnMut(usize, f64) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let numeric = (f(i, h) - f(i, -h)) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max(err);
    }
    worst
}

pub struct GradientCase {
    pub actor_err: f64,
    pub critic_err: f64,
}

/// Compares the actor's `-A grad ln pi(a|s)` and the critic's TD-loss
/// gradient against central differences for one random net and input.
pub fn gradient_case(seed: u64) -> GradientCase {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 4] = [&[64, 64], &[8, 8], &[16], &[32, 16]];
    let hidden = shapes[(seed % 4) as usize].to_vec();
    let c = if seed % 2 == 0 {
        cap(27, 30)
    } else {
        cap(5, 4)
    };
    let mode = match seed % 3 {
        0 => HeadMode::Joint,
        1 => HeadMode::FixedUnits(2),
        _ => HeadMode::FixedBlocks(2),
    };
    let mut cfg = small_agent_config(seed, hidden);
    cfg.entropy_coef = 0.0;
    let mut agent = OraAgent::new(cfg, mode, &c, unit_scale()).unwrap();

    let mut state = random_state(&mut rng, &c);
    state.remaining_blocks = state.remaining_blocks.max(2);
    state.remaining_units = state.remaining_units.max(2);
    let (px, py) = agent.policy(&state).unwrap();
    let pick = |p: &[f64], rng: &mut ChaCha8Rng| {
        let support: Vec<usize> = (0..p.len()).filter(|i| p[*i] > 0.0).collect();
        support[rng.gen_range(0..support.len())] as u32
    };
    let action = JointAction::new(pick(&px, &mut rng), pick(&py, &mut rng));
    let adv = rng.gen_range(-3.0..3.0);
    let t = Transition {
        state,
        action,
        reward: rng.gen_range(-10.0..0.0),
        next_state: random_state(&mut rng, &c),
    };

    let tape = agent
        .actor_gradient_with(std::slice::from_ref(&t), &[adv])
        .unwrap();
    let analytic = tape_in_param_order(&tape);
    let mut probe = agent.clone();
    let actor_err = fd_mismatch(&analytic, |i, h| {
        let orig = *probe.actor_mut().param_mut(i);
        *probe.actor_mut().param_mut(i) = orig + h;
        let v = -adv * probe.log_prob(&t.state, &t.action).unwrap();
        *probe.actor_mut().param_mut(i) = orig;
        v
    });

    let tape = agent
        .critic_loss_gradient(std::slice::from_ref(&t))
        .unwrap();
    let analytic = tape_in_param_order(&tape);
    // the bootstrap target is held fixed, as in the update rule
    let gamma = agent.config().gamma;
    let target = t.reward + gamma * agent.value(&t.next_state).unwrap();
    let mut probe = agent.clone();
    let critic_err = fd_mismatch(&analytic, |i, h| {
        let orig = *probe.critic_mut().param_mut(i);
        *probe.critic_mut().param_mut(i) = orig + h;
        let d = target - probe.value(&t.state).unwrap();
        *probe.critic_mut().param_mut(i) = orig;
        0.5 * d * d
    });
    GradientCase {
        actor_err,
        critic_err,
    }
}

/// Named worked examples of the delay model, each recomputed by hand.
pub fn formula_checks() -> Vec<(&'static str, bool)> {
    use fogsim::model::*;
    use fogsim::scenario::{capacity_from_table, path_loss_db};
    use fogsim::sim::{build_state, reward_of, ResourceLedger};

    let c = cap(27, 30);
    let close = |a: f64, b: f64| rel_err(a, b) <= 1e-9;
    let link = |snr: f64| LinkBudget::new(snr, 1.0, 1.0).unwrap();
    let mut out = Vec::new();

    out.push(("eta at snr 1", close(spectral_efficiency(&link(1.0)), 1.0)));
    out.push(("eta at snr 3", close(spectral_efficiency(&link(3.0)), 2.0)));
    let lb = LinkBudget::new(0.2, db_to_linear(-90.5), dbm_to_watts(-104.0)).unwrap();
    let eta = spectral_efficiency(&lb);
    out.push((
        "link budget 0.1 km",
        rel_err(eta, hand_eta(0.2, 90.5, -104.0)) <= 1e-6 && (eta - 12.13).abs() < 0.01,
    ));

    let t1 = task(0, 1.8e6, 1.0, 1.0);
    out.push((
        "tx delay 1.8 Mbit x=10 eta=1",
        close(transmission_delay(&t1, 10, &c).unwrap(), 1.0),
    ));
    // eta = 12.13 exactly: pick snr = 2^12.13 - 1
    let t2 = task(0, 1e6, 1.0, 2f64.powf(12.13) - 1.0);
    out.push((
        "tx delay 1 Mbit x=27 eta=12.13",
        close(
            transmission_delay(&t2, 27, &c).unwrap(),
            1e6 / (27.0 * 1.8e5 * 12.13),
        ),
    ));
    out.push((
        "tx delay zero blocks",
        transmission_delay(&t2, 0, &c).is_err(),
    ));
    let t3 = task(0, 1e6, 10.0, 1.0);
    out.push((
        "comp delay 1e7 cycles y=1",
        close(computing_delay(&t3, 1, &c).unwrap(), 1.0),
    ));
    out.push((
        "comp delay 1e7 cycles y=30",
        close(computing_delay(&t3, 30, &c).unwrap(), 1e7 / 3e8),
    ));
    out.push((
        "comp delay zero units",
        computing_delay(&t3, 0, &c).is_err(),
    ));

    // 0.4 s + 0.5 s: l = 0.72 Mbit over 10 blocks at eta 1, 5e6 cycles on one unit
    let t4 = task(0, 7.2e5, 5e6 / 7.2e5, 1.0);
    let d = task_delay(&t4, ResourceGrants::new(10, 1), &c);
    out.push((
        "0.4 + 0.5 s served",
        close(d.total_s, 0.9) && !d.dropped && d.total_s == d.transmission_s + d.computing_s,
    ));
    out.push((
        "0.9 s feasible",
        qos_feasible(&t4, ResourceGrants::new(10, 1), &c),
    ));
    let t5 = task(0, 1.08e6, 6e6 / 1.08e6, 1.0);
    let d = task_delay(&t5, ResourceGrants::new(10, 1), &c);
    out.push(("1.2 s dropped at 10 s", d.dropped && d.total_s == 10.0));
    out.push((
        "1.2 s infeasible",
        !qos_feasible(&t5, ResourceGrants::new(10, 1), &c),
    ));
    let d = task_delay(&t4, ResourceGrants::new(0, 5), &c);
    out.push(("zero blocks dropped", d.dropped && d.total_s == 10.0));

    let mean = objective_value(&[t4], &[ResourceGrants::new(10, 1)], &c).unwrap();
    out.push(("objective single 0.9 s", close(mean, 0.9)));
    // 0.5 s served plus a 1.5 s task that is dropped
    let fast = task(0, 9e5, 1.0, 1.0);
    let slow = task(1, 2.7e6, 1.0, 1.0);
    let grants = [ResourceGrants::new(10, 30), ResourceGrants::new(10, 30)];
    let both = objective_value(&[fast, slow], &grants, &c).unwrap();
    let (d_fast, _) = hand_delay(9e5, 1.0, 1.0, 10, 30, &c);
    out.push((
        "objective 0.5 s and dropped",
        close(both, (d_fast + 10.0) / 2.0),
    ));
    out.push((
        "objective two-task mean 5.25",
        close((0.5 + 10.0) / 2.0, 5.25),
    ));
    out.push(("objective empty", objective_value(&[], &[], &c).is_err()));

    // scan for minimal feasible grants against an exhaustive scan
    let probe = task(0, 1.2e6, 12.0, 300.0);
    let mut scan_ok = true;
    for x in 1..=27u32 {
        for y in 1..=30u32 {
            let (_, dropped) = hand_delay(1.2e6, 12.0, 300.0, x, y, &c);
            scan_ok &= qos_feasible(&probe, ResourceGrants::new(x, y), &c) == !dropped;
        }
    }
    out.push(("feasibility scan", scan_ok));

    out.push(("path loss 1 km", close(path_loss_db(1.0).unwrap(), 128.1)));
    out.push(("path loss 0.1 km", close(path_loss_db(0.1).unwrap(), 90.5)));
    out.push((
        "path loss 0.25 km",
        close(path_loss_db(0.25).unwrap(), 128.1 + 37.6 * 0.25f64.log10()),
    ));
    out.push(("path loss 0 km", path_loss_db(0.0).is_err()));

    let table = capacity_from_table(5e6, 1.8e5, 3e8, 1e7, 1.0).unwrap();
    out.push((
        "table capacity 27 x 30",
        table.total_blocks == 27 && table.total_units == 30,
    ));
    let single = capacity_from_table(1.8e5, 1.8e5, 1e7, 1e7, 1.0).unwrap();
    out.push(("one block", single.total_blocks == 1));

    let mut ledger = ResourceLedger::new(&table);
    let s = build_state(&ledger, &t4);
    out.push((
        "empty ledger state",
        s.remaining_blocks == 27 && s.remaining_units == 30,
    ));
    ledger.reserve(9, 5, 4, 0.0, 1.0).unwrap();
    let s = build_state(&ledger, &t4);
    out.push((
        "one reservation state",
        s.remaining_blocks == 22 && s.remaining_units == 26,
    ));
    ledger.release(9, 5, 4);
    let s = build_state(&ledger, &t4);
    out.push((
        "post-release state",
        s.remaining_blocks == 27 && s.remaining_units == 30,
    ));

    let served = |t: f64| DelayBreakdown {
        transmission_s: t / 2.0,
        computing_s: t / 2.0,
        total_s: t,
        dropped: false,
    };
    out.push(("reward 0.9 s", close(reward_of(&served(0.9)), -0.9)));
    out.push((
        "reward dropped",
        reward_of(&task_delay(&t5, ResourceGrants::new(10, 1), &c)) == -10.0,
    ));
    // exactly 1 s: 0.5 s + 0.5 s
    let edge = task(0, 9e5, 5e6 / 9e5, 1.0);
    let d = task_delay(&edge, ResourceGrants::new(10, 1), &c);
    out.push((
        "deadline inclusive",
        !d.dropped && close(reward_of(&d), -1.0),
    ));
    out
}
