//! Discrete-event episode runner.
//!
//! Arrivals query the allocator with the current free capacity; served tasks
//! hold their grants until a release event, dropped tasks hold nothing. Events
//! at equal timestamps are ordered releases first, then by task id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{Allocator, JointAction};
use crate::error::{Error, Result};
use crate::model::{task_delay, DelayBreakdown, ResourceGrants, SystemCapacity, TaskSpec};
use crate::scenario::Scenario;

/// Agent-visible state `(e, c, d, l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsState {
    pub remaining_blocks: u32,
    pub remaining_units: u32,
    pub data_size_bits: f64,
    pub computation_cycles: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: ObsState,
    /// The action the allocator asked for, before clamping.
    pub action: JointAction,
    pub reward: f64,
    pub next_state: ObsState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseMode {
    /// Blocks and units are both held until the task completes.
    #[default]
    Whole,
    /// Blocks are returned once the upload finishes.
    Phased,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub release_mode: ReleaseMode,
}

#[derive(Clone, Copy, Debug)]
struct Reservation {
    task_id: u32,
    blocks: u32,
    units: u32,
    release_time_s: f64,
}

/// Live reservations against `M` blocks and `N` units.
#[derive(Clone, Debug)]
pub struct ResourceLedger {
    total_blocks: u32,
    total_units: u32,
    used_blocks: u32,
    used_units: u32,
    active: Vec<Reservation>,
}

impl ResourceLedger {
    pub fn new(cap: &SystemCapacity) -> Self {
        Self {
            total_blocks: cap.total_blocks,
            total_units: cap.total_units,
            used_blocks: 0,
            used_units: 0,
            active: Vec::new(),
        }
    }

    pub fn free_blocks(&self) -> u32 {
        self.total_blocks - self.used_blocks
    }

    pub fn free_units(&self) -> u32 {
        self.total_units - self.used_units
    }

    pub fn used(&self) -> (u32, u32) {
        (self.used_blocks, self.used_units)
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Reserves `blocks`/`units` for `task_id` until `release_time_s`.
    pub fn reserve(
        &mut self,
        task_id: u32,
        blocks: u32,
        units: u32,
        now: f64,
        release_time_s: f64,
    ) -> Result<()> {
        if blocks > self.free_blocks() || units > self.free_units() || !(release_time_s > now) {
            return Err(Error::LedgerViolation {
                time: now,
                used_blocks: self.used_blocks + blocks,
                used_units: self.used_units + units,
                max_blocks: self.total_blocks,
                max_units: self.total_units,
            });
        }
        self.used_blocks += blocks;
        self.used_units += units;
        self.active.push(Reservation {
            task_id,
            blocks,
            units,
            release_time_s,
        });
        Ok(())
    }

    /// Releases part (or all) of a task's reservation.
    pub fn release(&mut self, task_id: u32, blocks: u32, units: u32) {
        let idx = self
            .active
            .iter()
            .position(|r| r.task_id == task_id)
            .expect("release for unknown reservation");
        let r = &mut self.active[idx];
        assert!(blocks <= r.blocks && units <= r.units, "over-release");
        r.blocks -= blocks;
        r.units -= units;
        self.used_blocks -= blocks;
        self.used_units -= units;
        if r.blocks == 0 && r.units == 0 {
            self.active.swap_remove(idx);
        }
    }

    /// Earliest pending release time, if any.
    pub fn next_release(&self) -> Option<f64> {
        self.active
            .iter()
            .map(|r| r.release_time_s)
            .min_by(|a, b| a.total_cmp(b))
    }
}

pub fn build_state(ledger: &ResourceLedger, next_task: &TaskSpec) -> ObsState {
    ObsState {
        remaining_blocks: ledger.free_blocks(),
        remaining_units: ledger.free_units(),
        data_size_bits: next_task.data_size_bits,
        computation_cycles: next_task.computation_cycles,
    }
}

pub fn reward_of(breakdown: &DelayBreakdown) -> f64 {
    -breakdown.total_s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Release,
    Arrival,
}

/// Ledger occupancy right after an event was processed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_s: f64,
    pub kind: EventKind,
    pub task_id: u32,
    pub used_blocks: u32,
    pub used_units: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub id: u32,
    pub arrival_s: f64,
    pub requested: JointAction,
    pub granted: ResourceGrants,
    pub delay: DelayBreakdown,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub outcomes: Vec<TaskOutcome>,
    pub mean_total_s: f64,
    /// Over served tasks only; 0 when every task was dropped.
    pub mean_transmission_s: f64,
    pub mean_computing_s: f64,
    pub drop_count: usize,
    pub transitions: Vec<Transition>,
    pub events: Vec<EventRecord>,
}

impl EpisodeReport {
    pub fn drop_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.drop_count as f64 / self.outcomes.len() as f64
        }
    }

    pub fn mean_reward(&self) -> f64 {
        -self.mean_total_s
    }

    pub const CSV_HEADER: [&'static str; 9] = [
        "id", "arrival", "x", "y", "Dt", "Dc", "D", "dropped", "reward",
    ];

    /// One row per task in arrival order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for o in &self.outcomes {
            w.write_record([
                o.id.to_string(),
                o.arrival_s.to_string(),
                o.granted.blocks.to_string(),
                o.granted.units.to_string(),
                o.delay.transmission_s.to_string(),
                o.delay.computing_s.to_string(),
                o.delay.total_s.to_string(),
                (o.delay.dropped as u8).to_string(),
                o.reward.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    kind: EventKind,
    task_id: u32,
    /// Index into the scenario for arrivals; released amounts otherwise.
    index: usize,
    blocks: u32,
    units: u32,
}

impl Event {
    fn key(&self) -> (f64, u8, u32) {
        let rank = match self.kind {
            EventKind::Release => 0,
            EventKind::Arrival => 1,
        };
        (self.time, rank, self.task_id)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so that BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ra, ia) = self.key();
        let (tb, rb, ib) = other.key();
        tb.total_cmp(&ta).then(rb.cmp(&ra)).then(ib.cmp(&ia))
    }
}

pub fn run_episode(
    scenario: &Scenario,
    allocator: &mut dyn Allocator,
    seed: u64,
) -> Result<EpisodeReport> {
    run_episode_with(scenario, allocator, seed, EngineConfig::default())
}

pub fn run_episode_with(
    scenario: &Scenario,
    allocator: &mut dyn Allocator,
    seed: u64,
    config: EngineConfig,
) -> Result<EpisodeReport> {
    if scenario.tasks.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let cap = scenario.capacity;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = ResourceLedger::new(&cap);
    let mut queue: BinaryHeap<Event> = scenario
        .tasks
        .iter()
        .enumerate()
        .map(|(index, t)| Event {
            time: t.arrival_time,
            kind: EventKind::Arrival,
            task_id: t.id,
            index,
            blocks: 0,
            units: 0,
        })
        .collect();

    let n = scenario.tasks.len();
    let mut outcomes = Vec::with_capacity(n);
    let mut transitions = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(3 * n);
    let mut pending: Option<(ObsState, JointAction, f64)> = None;

    while let Some(ev) = queue.pop() {
        match ev.kind {
            EventKind::Release => {
                ledger.release(ev.task_id, ev.blocks, ev.units);
            }
            EventKind::Arrival => {
                let task = &scenario.tasks[ev.index];
                let state = build_state(&ledger, task);
                if let Some((s, a, r)) = pending.take() {
                    let t = Transition {
                        state: s,
                        action: a,
                        reward: r,
                        next_state: state,
                    };
                    allocator.observe(&t);
                    transitions.push(t);
                }

                let action = allocator.decide(&state, &mut rng);
                if action.blocks > cap.total_blocks || action.units > cap.total_units {
                    return Err(Error::ProtocolViolation {
                        blocks: action.blocks,
                        units: action.units,
                        max_blocks: cap.total_blocks,
                        max_units: cap.total_units,
                    });
                }
                let clamped = ResourceGrants::new(
                    action.blocks.min(state.remaining_blocks),
                    action.units.min(state.remaining_units),
                );
                let delay = task_delay(task, clamped, &cap);
                let granted = if delay.dropped {
                    ResourceGrants::ZERO
                } else {
                    let done = task.arrival_time + delay.total_s;
                    ledger.reserve(
                        task.id,
                        clamped.blocks,
                        clamped.units,
                        task.arrival_time,
                        done,
                    )?;
                    match config.release_mode {
                        ReleaseMode::Whole => queue.push(Event {
                            time: done,
                            kind: EventKind::Release,
                            task_id: task.id,
                            index: ev.index,
                            blocks: clamped.blocks,
                            units: clamped.units,
                        }),
                        ReleaseMode::Phased => {
                            queue.push(Event {
                                time: task.arrival_time + delay.transmission_s,
                                kind: EventKind::Release,
                                task_id: task.id,
                                index: ev.index,
                                blocks: clamped.blocks,
                                units: 0,
                            });
                            queue.push(Event {
                                time: done,
                                kind: EventKind::Release,
                                task_id: task.id,
                                index: ev.index,
                                blocks: 0,
                                units: clamped.units,
                            });
                        }
                    }
                    clamped
                };
                let reward = reward_of(&delay);
                outcomes.push(TaskOutcome {
                    id: task.id,
                    arrival_s: task.arrival_time,
                    requested: action,
                    granted,
                    delay,
                    reward,
                });
                pending = Some((state, action, reward));
            }
        }
        let (used_blocks, used_units) = ledger.used();
        if used_blocks > cap.total_blocks || used_units > cap.total_units {
            return Err(Error::LedgerViolation {
                time: ev.time,
                used_blocks,
                used_units,
                max_blocks: cap.total_blocks,
                max_units: cap.total_units,
            });
        }
        events.push(EventRecord {
            time_s: ev.time,
            kind: ev.kind,
            task_id: ev.task_id,
            used_blocks,
            used_units,
        });
    }

    debug_assert_eq!(ledger.used(), (0, 0));
    if let Some((s, a, r)) = pending.take() {
        // terminal: next state is the drained ledger seen by the last task
        let t = Transition {
            state: s,
            action: a,
            reward: r,
            next_state: ObsState {
                remaining_blocks: ledger.free_blocks(),
                remaining_units: ledger.free_units(),
                ..s
            },
        };
        allocator.observe(&t);
        transitions.push(t);
    }

    let drop_count = outcomes.iter().filter(|o| o.delay.dropped).count();
    let served = outcomes.len() - drop_count;
    let mean_total_s = outcomes.iter().map(|o| o.delay.total_s).sum::<f64>() / n as f64;
    let served_mean = |f: fn(&TaskOutcome) -> f64| {
        if served == 0 {
            0.0
        } else {
            outcomes
                .iter()
                .filter(|o| !o.delay.dropped)
                .map(f)
                .sum::<f64>()
                / served as f64
        }
    };
    let mean_transmission_s = served_mean(|o| o.delay.transmission_s);
    let mean_computing_s = served_mean(|o| o.delay.computing_s);

    Ok(EpisodeReport {
        outcomes,
        mean_total_s,
        mean_transmission_s,
        mean_computing_s,
        drop_count,
        transitions,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{FixedAllocator, RandomAllocator};
    use crate::model::{computing_delay, transmission_delay, LinkBudget};
    use crate::scenario::{CapacityConfig, ScenarioConfig};

    fn capacity() -> SystemCapacity {
        CapacityConfig::default().to_capacity().unwrap()
    }

    fn task(id: u32, arrival: f64) -> TaskSpec {
        let link = LinkBudget::new(0.2, 1e-10, 4e-14).unwrap();
        TaskSpec::new(id, arrival, 1e6, 10.0, link).unwrap()
    }

    #[test]
    fn single_task_bookkeeping() {
        let cap = capacity();
        let t = task(0, 1.0);
        let s = Scenario::new(vec![t], cap).unwrap();
        let mut alloc = FixedAllocator::new(JointAction::new(27, 30));
        let r = run_episode(&s, &mut alloc, 0).unwrap();
        let o = &r.outcomes[0];
        assert!(!o.delay.dropped);
        assert_eq!(
            o.delay.transmission_s,
            transmission_delay(&t, 27, &cap).unwrap()
        );
        assert_eq!(o.delay.computing_s, computing_delay(&t, 30, &cap).unwrap());
        assert_eq!(r.events.len(), 2);
        assert_eq!((r.events[0].used_blocks, r.events[0].used_units), (27, 30));
        assert_eq!((r.events[1].used_blocks, r.events[1].used_units), (0, 0));
        assert_eq!(r.transitions.len(), 1);
        assert_eq!(r.transitions[0].next_state.remaining_blocks, 27);
        assert_eq!(r.transitions[0].next_state.remaining_units, 30);
    }

    #[test]
    fn simultaneous_arrivals_exhaust_capacity() {
        let cap = capacity();
        let s = Scenario::new(vec![task(0, 1.0), task(1, 1.0)], cap).unwrap();
        let mut alloc = FixedAllocator::new(JointAction::new(27, 30));
        let r = run_episode(&s, &mut alloc, 0).unwrap();
        assert!(!r.outcomes[0].delay.dropped);
        let second = &r.outcomes[1];
        assert_eq!(second.id, 1);
        assert!(second.delay.dropped);
        assert_eq!(second.granted, ResourceGrants::ZERO);
        assert_eq!(second.reward, -10.0);
        assert_eq!(r.transitions[0].next_state.remaining_blocks, 0);
        assert_eq!(r.drop_count, 1);
        assert_eq!(r.mean_total_s, (r.outcomes[0].delay.total_s + 10.0) / 2.0);
    }

    #[test]
    fn release_precedes_simultaneous_arrival() {
        let cap = capacity();
        let t0 = task(0, 0.0);
        let d = task_delay(&t0, ResourceGrants::new(27, 30), &cap).total_s;
        let t1 = task(1, d);
        let s = Scenario::new(vec![t0, t1], cap).unwrap();
        let mut alloc = FixedAllocator::new(JointAction::new(27, 30));
        let r = run_episode(&s, &mut alloc, 0).unwrap();
        assert!(!r.outcomes[1].delay.dropped);
        assert_eq!(r.events[1].kind, EventKind::Release);
    }

    #[test]
    fn protocol_violation_is_reported() {
        let cap = capacity();
        let s = Scenario::new(vec![task(0, 0.0)], cap).unwrap();
        let mut alloc = FixedAllocator::new(JointAction::new(28, 1));
        assert!(matches!(
            run_episode(&s, &mut alloc, 0),
            Err(Error::ProtocolViolation { .. })
        ));
    }

    #[test]
    fn build_state_tracks_ledger() {
        let cap = capacity();
        let t = task(0, 0.0);
        let mut ledger = ResourceLedger::new(&cap);
        let s = build_state(&ledger, &t);
        assert_eq!((s.remaining_blocks, s.remaining_units), (27, 30));
        assert_eq!(s.data_size_bits, 1e6);
        assert_eq!(s.computation_cycles, 1e7);
        ledger.reserve(9, 5, 4, 0.0, 1.0).unwrap();
        let s = build_state(&ledger, &t);
        assert_eq!((s.remaining_blocks, s.remaining_units), (22, 26));
        ledger.release(9, 5, 4);
        let s = build_state(&ledger, &t);
        assert_eq!((s.remaining_blocks, s.remaining_units), (27, 30));
        assert_eq!(ledger.active_count(), 0);
        assert!(ledger.reserve(1, 28, 0, 0.0, 1.0).is_err());
        assert!(ledger.reserve(1, 1, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn reward_examples() {
        let d = DelayBreakdown {
            transmission_s: 0.4,
            computing_s: 0.5,
            total_s: 0.9,
            dropped: false,
        };
        assert_eq!(reward_of(&d), -0.9);
        let d = DelayBreakdown {
            total_s: 10.0,
            dropped: true,
            ..d
        };
        assert_eq!(reward_of(&d), -10.0);
        let d = DelayBreakdown {
            transmission_s: 0.5,
            computing_s: 0.5,
            total_s: 1.0,
            dropped: false,
        };
        assert_eq!(reward_of(&d), -1.0);
    }

    #[test]
    fn phased_release_frees_blocks_early() {
        let cap = capacity();
        let t0 = task(0, 0.0);
        let d = task_delay(&t0, ResourceGrants::new(27, 30), &cap);
        // arrives after upload but before compute completes
        let t1 = task(1, d.transmission_s + 0.5 * d.computing_s);
        let s = Scenario::new(vec![t0, t1], cap).unwrap();
        let config = EngineConfig {
            release_mode: ReleaseMode::Phased,
        };
        let mut alloc = FixedAllocator::new(JointAction::new(27, 30));
        let r = run_episode_with(&s, &mut alloc, 0, config).unwrap();
        let st = r.transitions[0].next_state;
        assert_eq!((st.remaining_blocks, st.remaining_units), (27, 0));
        assert!(r.outcomes[1].delay.dropped);

        let mut alloc = FixedAllocator::new(JointAction::new(27, 30));
        let r = run_episode(&s, &mut alloc, 0).unwrap();
        let st = r.transitions[0].next_state;
        assert_eq!((st.remaining_blocks, st.remaining_units), (0, 0));
    }

    #[test]
    fn default_scenario_random_allocator_is_safe_and_deterministic() {
        let cap = capacity();
        let s = Scenario::generate(&ScenarioConfig::default(), cap).unwrap();
        let a = run_episode(&s, &mut RandomAllocator::new(cap), 11).unwrap();
        let b = run_episode(&s, &mut RandomAllocator::new(cap), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.transitions.len(), 500);
        for e in &a.events {
            assert!(e.used_blocks <= 27 && e.used_units <= 30);
        }
        let last = a.events.last().unwrap();
        assert_eq!((last.used_blocks, last.used_units), (0, 0));
        for o in &a.outcomes {
            if o.delay.dropped {
                assert_eq!(o.reward, -10.0);
            } else {
                assert!(o.delay.total_s <= 1.0);
            }
        }
    }

    #[test]
    fn csv_schema() {
        let cap = capacity();
        let s = Scenario::new(vec![task(0, 0.0), task(1, 0.0)], cap).unwrap();
        let r = run_episode(&s, &mut FixedAllocator::new(JointAction::new(27, 30)), 0).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "id,arrival,x,y,Dt,Dc,D,dropped,reward"
        );
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("1,0,0,0,"));
    }
}
