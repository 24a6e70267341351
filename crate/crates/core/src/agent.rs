//! Actor-critic allocator.
//!
//! The actor maps the normalized state `(e/M, c/N, d/2E[l], l/2E[c])` to two
//! categorical heads over `x in 0..=M` and `y in 0..=N`; the joint policy is
//! their product. The critic estimates `V(s)`. Each training epoch runs one
//! episode with sampled actions, stores every transition, then applies one
//! actor and one critic update on a uniformly sampled batch.
//!
//! The single-dimension baselines are the same learner with one head frozen
//! to a fixed share (see [`HeadMode`]).

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{Allocator, JointAction};
use crate::error::{Error, Result};
use crate::model::SystemCapacity;
use crate::nn::{
    adam_step, softmax_logits_to_probs, AdamConfig, AdamState, DenseNet, ForwardCache, GradientTape,
};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::sim::{run_episode_with, EngineConfig, ObsState, Transition};

pub const STATE_DIM: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub memory_capacity: usize,
    /// Weight of the policy entropy bonus. Rewards reach -10 on a drop, so
    /// much smaller values let both heads collapse to a fixed action early.
    pub entropy_coef: f64,
    /// TD(0) target `r + gamma V(s')` for both advantage and critic. When
    /// false the advantage is `r - V(s)` and the critic target `r + V(s')`.
    pub use_discounted_target: bool,
    pub action_masking: bool,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub optimizer: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epochs: 3000,
            batch_size: 256,
            memory_capacity: 50_000,
            entropy_coef: 0.3,
            use_discounted_target: true,
            action_masking: true,
            seed: 0,
            hidden_layers: vec![64, 64],
            optimizer: AdamConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("agent: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.memory_capacity {
            return bad("need 1 <= batch_size <= memory_capacity");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be >= 0");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.optimizer.step_size > 0.0) {
            return bad("optimizer step size must be positive");
        }
        Ok(())
    }
}

/// Which heads the agent learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum HeadMode {
    Joint,
    /// Transmission-only: units fixed to this share, blocks learned.
    FixedUnits(u32),
    /// Computation-only: blocks fixed to this share, units learned.
    FixedBlocks(u32),
}

impl HeadMode {
    fn learns_blocks(&self) -> bool {
        !matches!(self, HeadMode::FixedBlocks(_))
    }

    fn learns_units(&self) -> bool {
        !matches!(self, HeadMode::FixedUnits(_))
    }
}

/// Divisors applied to the raw state before it enters the networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateScale {
    pub blocks: f64,
    pub units: f64,
    pub data_bits: f64,
    pub cycles: f64,
}

impl StateScale {
    pub fn for_workload(cap: &SystemCapacity, scenario: &ScenarioConfig) -> Self {
        Self {
            blocks: cap.total_blocks as f64,
            units: cap.total_units as f64,
            data_bits: 2.0 * scenario.data_size_mean_bits,
            cycles: 2.0 * scenario.mean_computation_cycles(),
        }
    }

    pub fn normalize(&self, s: &ObsState) -> [f64; STATE_DIM] {
        [
            s.remaining_blocks as f64 / self.blocks,
            s.remaining_units as f64 / self.units,
            s.data_size_bits / self.data_bits,
            s.computation_cycles / self.cycles,
        ]
    }
}

/// FIFO ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ExperienceMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl ExperienceMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.buf.get(i)
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<Transition> {
        if self.buf.is_empty() {
            return Vec::new();
        }
        (0..batch_size)
            .map(|_| self.buf[rng.gen_range(0..self.buf.len())])
            .collect()
    }
}

/// Work done by the agent, in units of head entries and per-sample updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub decisions: u64,
    pub head_entries: u64,
    pub actor_samples: u64,
    pub critic_samples: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub mean_reward: f64,
    pub mean_delay_s: f64,
    pub drop_count: usize,
}

#[derive(Clone, Debug)]
pub struct OraAgent {
    config: AgentConfig,
    mode: HeadMode,
    scale: StateScale,
    total_blocks: u32,
    total_units: u32,
    actor: DenseNet,
    critic: DenseNet,
    actor_opt: AdamState,
    critic_opt: AdamState,
    memory: ExperienceMemory,
    rng: ChaCha8Rng,
    explore: bool,
    learning: bool,
    counters: WorkCounters,
}

struct HeadOutput {
    cache: ForwardCache,
    x_probs: Option<Vec<f64>>,
    y_probs: Option<Vec<f64>>,
}

impl OraAgent {
    pub fn new(
        config: AgentConfig,
        mode: HeadMode,
        cap: &SystemCapacity,
        scale: StateScale,
    ) -> Result<Self> {
        config.validate()?;
        cap.validate()?;
        match mode {
            HeadMode::FixedUnits(y) if y == 0 || y > cap.total_units => {
                return Err(Error::InvalidConfig(format!(
                    "fixed unit share {y} out of range"
                )))
            }
            HeadMode::FixedBlocks(x) if x == 0 || x > cap.total_blocks => {
                return Err(Error::InvalidConfig(format!(
                    "fixed block share {x} out of range"
                )))
            }
            _ => {}
        }
        let m = cap.total_blocks as usize;
        let n = cap.total_units as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut actor_sizes = vec![STATE_DIM];
        actor_sizes.extend(&config.hidden_layers);
        actor_sizes.push(m + 1 + n + 1);
        let mut critic_sizes = vec![STATE_DIM];
        critic_sizes.extend(&config.hidden_layers);
        critic_sizes.push(1);
        let actor = DenseNet::new(&actor_sizes, &mut rng)?;
        let critic = DenseNet::new(&critic_sizes, &mut rng)?;
        Ok(Self {
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            memory: ExperienceMemory::new(config.memory_capacity),
            config,
            mode,
            scale,
            total_blocks: cap.total_blocks,
            total_units: cap.total_units,
            actor,
            critic,
            rng,
            explore: true,
            learning: false,
            counters: WorkCounters::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn mode(&self) -> HeadMode {
        self.mode
    }

    pub fn scale(&self) -> StateScale {
        self.scale
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.total_blocks, self.total_units)
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut DenseNet {
        &mut self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut DenseNet {
        &mut self.critic
    }

    pub fn memory(&self) -> &ExperienceMemory {
        &self.memory
    }

    pub fn counters(&self) -> WorkCounters {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = WorkCounters::default();
    }

    /// Sampling vs. argmax in [`Allocator::decide`].
    pub fn set_explore(&mut self, explore: bool) {
        self.explore = explore;
    }

    /// Whether observed transitions are stored in memory.
    pub fn set_learning(&mut self, learning: bool) {
        self.learning = learning;
    }

    pub fn name(&self) -> &'static str {
        match self.mode {
            HeadMode::Joint => "ora",
            HeadMode::FixedUnits(_) => "tx-only",
            HeadMode::FixedBlocks(_) => "comp-only",
        }
    }

    fn masks(&self, s: &ObsState) -> (Vec<bool>, Vec<bool>) {
        let m = self.total_blocks as usize;
        let n = self.total_units as usize;
        if !self.config.action_masking {
            return (vec![true; m + 1], vec![true; n + 1]);
        }
        let e = s.remaining_blocks.min(self.total_blocks) as usize;
        let c = s.remaining_units.min(self.total_units) as usize;
        let forbid_zero = e >= 1 && c >= 1;
        let x = (0..=m)
            .map(|i| i <= e && !(forbid_zero && i == 0))
            .collect();
        let y = (0..=n)
            .map(|j| j <= c && !(forbid_zero && j == 0))
            .collect();
        (x, y)
    }

    fn heads(&self, s: &ObsState) -> Result<HeadOutput> {
        let input = self.scale.normalize(s);
        let cache = self.actor.forward_cached(&input)?;
        let m1 = self.total_blocks as usize + 1;
        let (x_mask, y_mask) = self.masks(s);
        let logits = cache.output();
        let x_probs = if self.mode.learns_blocks() {
            Some(softmax_logits_to_probs(&logits[..m1], &x_mask)?)
        } else {
            None
        };
        let y_probs = if self.mode.learns_units() {
            Some(softmax_logits_to_probs(&logits[m1..], &y_mask)?)
        } else {
            None
        };
        Ok(HeadOutput {
            cache,
            x_probs,
            y_probs,
        })
    }

    fn one_hot(len: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        v
    }

    /// `(p(x|s), p(y|s))`; a frozen head is a point mass on its clamped share.
    pub fn policy(&self, s: &ObsState) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.heads(s)?;
        let m1 = self.total_blocks as usize + 1;
        let n1 = self.total_units as usize + 1;
        let px = match (h.x_probs, self.mode) {
            (Some(p), _) => p,
            (None, HeadMode::FixedBlocks(x)) => {
                Self::one_hot(m1, x.min(s.remaining_blocks) as usize)
            }
            _ => unreachable!(),
        };
        let py = match (h.y_probs, self.mode) {
            (Some(p), _) => p,
            (None, HeadMode::FixedUnits(y)) => Self::one_hot(n1, y.min(s.remaining_units) as usize),
            _ => unreachable!(),
        };
        Ok((px, py))
    }

    /// `ln pi(a|s) = ln p(x|s) + ln p(y|s)`.
    pub fn log_prob(&self, s: &ObsState, a: &JointAction) -> Result<f64> {
        let (px, py) = self.policy(s)?;
        let p = |v: &[f64], i: u32| v.get(i as usize).copied().unwrap_or(0.0);
        Ok(p(&px, a.blocks).ln() + p(&py, a.units).ln())
    }

    pub fn value(&self, s: &ObsState) -> Result<f64> {
        Ok(self.critic.forward(&self.scale.normalize(s))?[0])
    }

    fn pick(probs: &[f64], explore: bool, rng: &mut dyn RngCore) -> usize {
        if explore {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    acc += p;
                    last = i;
                    if u < acc {
                        return i;
                    }
                }
            }
            last
        } else {
            let mut best = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = i;
                }
            }
            best
        }
    }

    pub fn decide_with(
        &mut self,
        s: &ObsState,
        explore: bool,
        rng: &mut dyn RngCore,
    ) -> Result<JointAction> {
        let h = self.heads(s)?;
        self.counters.decisions += 1;
        let blocks = match (&h.x_probs, self.mode) {
            (Some(p), _) => {
                self.counters.head_entries += p.len() as u64;
                Self::pick(p, explore, rng) as u32
            }
            (None, HeadMode::FixedBlocks(x)) => x.min(s.remaining_blocks),
            _ => unreachable!(),
        };
        let units = match (&h.y_probs, self.mode) {
            (Some(p), _) => {
                self.counters.head_entries += p.len() as u64;
                Self::pick(p, explore, rng) as u32
            }
            (None, HeadMode::FixedUnits(y)) => y.min(s.remaining_units),
            _ => unreachable!(),
        };
        Ok(JointAction::new(blocks, units))
    }

    pub fn advantage(&self, t: &Transition) -> Result<f64> {
        let v = self.value(&t.state)?;
        let bootstrap = if self.config.use_discounted_target {
            self.config.gamma * self.value(&t.next_state)?
        } else {
            0.0
        };
        Ok(t.reward + bootstrap - v)
    }

    fn critic_target(&self, t: &Transition) -> Result<f64> {
        let discount = if self.config.use_discounted_target {
            self.config.gamma
        } else {
            1.0
        };
        Ok(t.reward + discount * self.value(&t.next_state)?)
    }

    /// Gradient of `-(1/B) sum [ln pi(a|s) A + coef H]` with `A` held fixed.
    pub fn actor_loss_gradient(&mut self, batch: &[Transition]) -> Result<GradientTape> {
        let advantages = batch
            .iter()
            .map(|t| self.advantage(t))
            .collect::<Result<Vec<_>>>()?;
        self.actor_gradient_with(batch, &advantages)
    }

    /// Actor gradient for externally supplied advantages.
    pub fn actor_gradient_with(
        &mut self,
        batch: &[Transition],
        advantages: &[f64],
    ) -> Result<GradientTape> {
        if batch.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if batch.len() != advantages.len() {
            return Err(Error::Shape {
                expected: batch.len(),
                got: advantages.len(),
            });
        }
        let inv_b = 1.0 / batch.len() as f64;
        let coef = self.config.entropy_coef;
        let m1 = self.total_blocks as usize + 1;
        let mut tape = GradientTape::zeros_like(&self.actor);
        let mut grad = vec![0.0; self.actor.output_size()];
        for (t, adv) in batch.iter().zip(advantages) {
            let h = self.heads(&t.state)?;
            grad.iter_mut().for_each(|g| *g = 0.0);
            if let Some(p) = &h.x_probs {
                head_gradient(
                    p,
                    t.action.blocks as usize,
                    *adv,
                    coef,
                    inv_b,
                    &mut grad[..m1],
                );
            }
            if let Some(p) = &h.y_probs {
                head_gradient(
                    p,
                    t.action.units as usize,
                    *adv,
                    coef,
                    inv_b,
                    &mut grad[m1..],
                );
            }
            self.actor.backward_into(&h.cache, &grad, &mut tape)?;
        }
        self.counters.actor_samples += batch.len() as u64;
        Ok(tape)
    }

    /// Gradient of `(1/B) sum 1/2 (target - V(s))^2` with the target fixed.
    pub fn critic_loss_gradient(&mut self, batch: &[Transition]) -> Result<GradientTape> {
        if batch.is_empty() {
            return Err(Error::EmptyInstance);
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut tape = GradientTape::zeros_like(&self.critic);
        for t in batch {
            let target = self.critic_target(t)?;
            let cache = self
                .critic
                .forward_cached(&self.scale.normalize(&t.state))?;
            let v = cache.output()[0];
            self.critic
                .backward_into(&cache, &[-(target - v) * inv_b], &mut tape)?;
        }
        self.counters.critic_samples += batch.len() as u64;
        Ok(tape)
    }

    pub fn critic_loss(&self, batch: &[Transition]) -> Result<f64> {
        let mut sum = 0.0;
        for t in batch {
            let d = self.critic_target(t)? - self.value(&t.state)?;
            sum += 0.5 * d * d;
        }
        Ok(sum / batch.len() as f64)
    }

    pub fn apply_actor(&mut self, tape: &GradientTape) -> Result<()> {
        adam_step(
            &mut self.actor,
            tape,
            &mut self.actor_opt,
            &self.config.optimizer,
        )
    }

    pub fn apply_critic(&mut self, tape: &GradientTape) -> Result<()> {
        adam_step(
            &mut self.critic,
            tape,
            &mut self.critic_opt,
            &self.config.optimizer,
        )
    }

    /// One actor update followed by one critic update on `batch`.
    pub fn update(&mut self, batch: &[Transition]) -> Result<()> {
        let actor_tape = self.actor_loss_gradient(batch)?;
        let critic_tape = self.critic_loss_gradient(batch)?;
        self.apply_actor(&actor_tape)?;
        self.apply_critic(&critic_tape)
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    pub fn sample_batch(&mut self) -> Vec<Transition> {
        self.memory.sample(self.config.batch_size, &mut self.rng)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_checkpoint_bytes()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Loads and checks the action-space dimensions against `cap`.
    pub fn load_for(path: &Path, cap: &SystemCapacity) -> Result<Self> {
        let agent = Self::load(path)?;
        agent.check_dims(cap)?;
        Ok(agent)
    }

    pub fn check_dims(&self, cap: &SystemCapacity) -> Result<()> {
        if (self.total_blocks, self.total_units) != (cap.total_blocks, cap.total_units) {
            return Err(Error::DimensionMismatch {
                ckpt_blocks: self.total_blocks,
                ckpt_units: self.total_units,
                blocks: cap.total_blocks,
                units: cap.total_units,
            });
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let header = CheckpointHeader {
            config: self.config.clone(),
            mode: self.mode,
            scale: self.scale,
            total_blocks: self.total_blocks,
            total_units: self.total_units,
            counters: self.counters,
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        out.write_all(&self.rng.get_seed())?;
        out.write_all(&self.rng.get_stream().to_le_bytes())?;
        out.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        self.actor.write_to(&mut out)?;
        self.actor_opt.write_to(&mut out)?;
        self.critic.write_to(&mut out)?;
        self.critic_opt.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a fogsim checkpoint".into()));
        }
        let version = crate::nn::read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let len = crate::nn::read_u32(&mut r)? as usize;
        if len > r.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..len])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        r = &r[len..];
        let mut seed = [0u8; 32];
        let mut stream = [0u8; 8];
        let mut word_pos = [0u8; 16];
        r.read_exact(&mut seed)
            .and_then(|_| r.read_exact(&mut stream))
            .and_then(|_| r.read_exact(&mut word_pos))
            .map_err(|_| Error::Checkpoint("truncated rng state".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(u64::from_le_bytes(stream));
        rng.set_word_pos(u128::from_le_bytes(word_pos));

        let actor = DenseNet::read_from(&mut r)?;
        let actor_opt = AdamState::read_for(&actor, &mut r)?;
        let critic = DenseNet::read_from(&mut r)?;
        let critic_opt = AdamState::read_for(&critic, &mut r)?;
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        let m1 = header.total_blocks as usize + 1;
        let n1 = header.total_units as usize + 1;
        if actor.input_size() != STATE_DIM
            || actor.output_size() != m1 + n1
            || critic.input_size() != STATE_DIM
            || critic.output_size() != 1
        {
            return Err(Error::Checkpoint(
                "network shapes disagree with header".into(),
            ));
        }
        header.config.validate()?;
        Ok(Self {
            memory: ExperienceMemory::new(header.config.memory_capacity),
            config: header.config,
            mode: header.mode,
            scale: header.scale,
            total_blocks: header.total_blocks,
            total_units: header.total_units,
            actor,
            critic,
            actor_opt,
            critic_opt,
            rng,
            explore: false,
            learning: false,
            counters: header.counters,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"FOGSIMCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: AgentConfig,
    mode: HeadMode,
    scale: StateScale,
    total_blocks: u32,
    total_units: u32,
    counters: WorkCounters,
}

/// Adds `d/dz` of `-(1/B) [A ln p_a + coef H(p)]` for one softmax head.
fn head_gradient(probs: &[f64], action: usize, adv: f64, coef: f64, inv_b: f64, out: &mut [f64]) {
    if probs.get(action).is_none_or(|p| *p <= 0.0) {
        return;
    }
    let entropy: f64 = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    for (j, (p, g)) in probs.iter().zip(out.iter_mut()).enumerate() {
        if *p <= 0.0 {
            continue;
        }
        let indicator = if j == action { 1.0 } else { 0.0 };
        let d_logp = indicator - p;
        let d_entropy = -p * (p.ln() + entropy);
        *g -= inv_b * (adv * d_logp + coef * d_entropy);
    }
}

impl Allocator for OraAgent {
    fn name(&self) -> &str {
        OraAgent::name(self)
    }

    fn decide(&mut self, state: &ObsState, rng: &mut dyn RngCore) -> JointAction {
        let explore = self.explore;
        self.decide_with(state, explore, rng)
            .expect("normalized state has the network's input shape")
    }

    fn observe(&mut self, transition: &Transition) {
        if self.learning {
            self.memory.push(*transition);
        }
    }
}

/// Runs `epochs` training epochs. `scenario_for(epoch)` supplies the
/// workload of each epoch; the episode's sampling seed is `seed + epoch`.
pub fn train<F>(
    agent: &mut OraAgent,
    mut scenario_for: F,
    epochs: u32,
    engine: EngineConfig,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(u32) -> Result<Scenario>,
{
    let mut history = Vec::with_capacity(epochs as usize);
    let seed = agent.config.seed;
    for epoch in 0..epochs {
        let scenario = scenario_for(epoch)?;
        agent.check_dims(&scenario.capacity)?;
        agent.set_explore(true);
        agent.set_learning(true);
        let report = run_episode_with(&scenario, agent, seed.wrapping_add(epoch as u64), engine)?;
        agent.set_learning(false);
        let batch = agent.sample_batch();
        if !batch.is_empty() {
            agent.update(&batch)?;
        }
        history.push(EpochStats {
            epoch,
            mean_reward: report.mean_reward(),
            mean_delay_s: report.mean_total_s,
            drop_count: report.drop_count,
        });
    }
    agent.set_explore(false);
    Ok(history)
}

pub const HISTORY_HEADER: [&str; 4] = ["epoch", "mean_reward", "mean_delay_s", "drop_count"];

pub fn write_history<W: Write>(history: &[EpochStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.mean_reward.to_string(),
            h.mean_delay_s.to_string(),
            h.drop_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
