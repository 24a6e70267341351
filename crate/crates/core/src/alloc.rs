//! Allocation policies: the allocator interface, simple fixed/random/greedy
//! policies, equal-share sizing for the single-dimension baselines, and the
//! exhaustive solver for small static instances.

use std::cmp::Ordering;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{task_delay, ResourceGrants, SystemCapacity, TaskSpec};
use crate::scenario::Scenario;
use crate::sim::{run_episode, ObsState, Transition};

/// Blocks `x` and units `y` requested for one arriving task.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct JointAction {
    pub blocks: u32,
    pub units: u32,
}

impl JointAction {
    pub fn new(blocks: u32, units: u32) -> Self {
        Self { blocks, units }
    }
}

pub trait Allocator {
    fn name(&self) -> &str;

    /// Chooses `(x, y)` for the arriving task. Must stay within `0..=M`,
    /// `0..=N`; the engine clamps to the currently free amounts.
    fn decide(&mut self, state: &ObsState, rng: &mut dyn RngCore) -> JointAction;

    /// Called once per finalized transition.
    fn observe(&mut self, _transition: &Transition) {}
}

impl<A: Allocator + ?Sized> Allocator for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, state: &ObsState, rng: &mut dyn RngCore) -> JointAction {
        (**self).decide(state, rng)
    }

    fn observe(&mut self, transition: &Transition) {
        (**self).observe(transition)
    }
}

/// Always requests the same action.
#[derive(Clone, Debug)]
pub struct FixedAllocator {
    action: JointAction,
}

impl FixedAllocator {
    pub fn new(action: JointAction) -> Self {
        Self { action }
    }
}

impl Allocator for FixedAllocator {
    fn name(&self) -> &str {
        "fixed"
    }

    fn decide(&mut self, _state: &ObsState, _rng: &mut dyn RngCore) -> JointAction {
        self.action
    }
}

/// Uniform over `1..=e` blocks and `1..=c` units (zero when nothing is free).
#[derive(Clone, Debug)]
pub struct RandomAllocator {
    capacity: SystemCapacity,
}

impl RandomAllocator {
    pub fn new(capacity: SystemCapacity) -> Self {
        Self { capacity }
    }
}

impl Allocator for RandomAllocator {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, state: &ObsState, rng: &mut dyn RngCore) -> JointAction {
        let e = state.remaining_blocks.min(self.capacity.total_blocks);
        let c = state.remaining_units.min(self.capacity.total_units);
        let x = if e == 0 { 0 } else { rng.gen_range(1..=e) };
        let y = if c == 0 { 0 } else { rng.gen_range(1..=c) };
        JointAction::new(x, y)
    }
}

/// Solves the static problem for the arriving task alone: with both delays
/// strictly decreasing in their grant, the optimum is everything free.
#[derive(Clone, Debug, Default)]
pub struct GreedyOracle;

impl Allocator for GreedyOracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decide(&mut self, state: &ObsState, _rng: &mut dyn RngCore) -> JointAction {
        JointAction::new(state.remaining_blocks, state.remaining_units)
    }
}

/// Equal split of `total` among `expected_concurrency` tasks, at least 1.
pub fn fixed_share(total: u32, expected_concurrency: u32) -> u32 {
    (total / expected_concurrency.max(1)).max(1)
}

/// Fixed-point estimate of how many tasks are in service at once when every
/// task receives an equal share.
///
/// Starting from one share per task arriving each second, a pilot episode is
/// run with the equal-share split, and the concurrency is re-estimated as
/// `ceil(arrival_rate * E[D])` where `E[D]` is the mean delay of served
/// tasks. Iterates until the estimate repeats.
pub fn pilot_concurrency(scenario: &Scenario, arrival_rate: f64, seed: u64) -> Result<u32> {
    let cap = scenario.capacity;
    let limit = cap.total_blocks.max(cap.total_units);
    let mut k = (arrival_rate.ceil() as u32).clamp(1, limit);
    let mut seen = vec![k];
    for _ in 0..32 {
        let action = JointAction::new(
            fixed_share(cap.total_blocks, k),
            fixed_share(cap.total_units, k),
        );
        let report = run_episode(scenario, &mut FixedAllocator::new(action), seed)?;
        let served: Vec<f64> = report
            .outcomes
            .iter()
            .filter(|o| !o.delay.dropped)
            .map(|o| o.delay.total_s)
            .collect();
        let mean = if served.is_empty() {
            cap.qos_deadline_s
        } else {
            served.iter().sum::<f64>() / served.len() as f64
        };
        let next = ((arrival_rate * mean).ceil() as u32).clamp(1, limit);
        if seen.contains(&next) {
            return Ok(next);
        }
        seen.push(next);
        k = next;
    }
    Ok(k)
}

pub const BRUTE_FORCE_MAX_TASKS: usize = 4;
pub const BRUTE_FORCE_MAX_RESOURCE: u32 = 8;

/// Relative tolerance under which two objective values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

fn compare_assignments(
    value: f64,
    grants: &[ResourceGrants],
    best_value: f64,
    best: &[ResourceGrants],
) -> Ordering {
    let scale = value.abs().max(best_value.abs()).max(f64::MIN_POSITIVE);
    if (value - best_value).abs() <= TIE_TOLERANCE * scale {
        grants.cmp(best)
    } else {
        value.total_cmp(&best_value)
    }
}

/// All vectors of length `n` with entries in `0..=total` summing to at most
/// `total`, in lexicographic order.
fn bounded_vectors(n: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(n, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, total, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Exact minimizer of the mean task delay for tasks that all arrive together.
///
/// Enumerates every block vector with `sum(x) <= M` and unit vector with
/// `sum(y) <= N`; QoS violations are priced at the drop penalty. Among
/// (numerically) tied assignments the lexicographically smallest list of
/// `(x_i, y_i)` wins.
pub fn brute_force_static(
    tasks: &[TaskSpec],
    cap: &SystemCapacity,
) -> Result<(Vec<ResourceGrants>, f64)> {
    if tasks.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if tasks.len() > BRUTE_FORCE_MAX_TASKS
        || cap.total_blocks > BRUTE_FORCE_MAX_RESOURCE
        || cap.total_units > BRUTE_FORCE_MAX_RESOURCE
    {
        return Err(Error::InstanceTooLarge(format!(
            "{} tasks, M={}, N={} (limits: {} tasks, M,N <= {})",
            tasks.len(),
            cap.total_blocks,
            cap.total_units,
            BRUTE_FORCE_MAX_TASKS,
            BRUTE_FORCE_MAX_RESOURCE
        )));
    }
    cap.validate()?;

    let m = cap.total_blocks as usize;
    let nu = cap.total_units as usize;
    // delay[i][x][y]
    let table: Vec<Vec<Vec<f64>>> = tasks
        .iter()
        .map(|t| {
            (0..=m)
                .map(|x| {
                    (0..=nu)
                        .map(|y| {
                            task_delay(t, ResourceGrants::new(x as u32, y as u32), cap).total_s
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let xs = bounded_vectors(tasks.len(), cap.total_blocks);
    let ys = bounded_vectors(tasks.len(), cap.total_units);
    let n = tasks.len() as f64;
    let mut best: Option<(f64, Vec<ResourceGrants>)> = None;
    let mut grants = vec![ResourceGrants::ZERO; tasks.len()];
    for x in &xs {
        for y in &ys {
            let mut sum = 0.0;
            for i in 0..tasks.len() {
                sum += table[i][x[i] as usize][y[i] as usize];
                grants[i] = ResourceGrants::new(x[i], y[i]);
            }
            let value = sum / n;
            let better = match &best {
                None => true,
                Some((bv, bg)) => compare_assignments(value, &grants, *bv, bg) == Ordering::Less,
            };
            if better {
                best = Some((value, grants.clone()));
            }
        }
    }
    let (value, grants) = best.expect("at least the all-zero assignment exists");
    Ok((grants, value))
}
