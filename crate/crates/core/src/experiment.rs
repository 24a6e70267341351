//! Experiment orchestration: configuration, training, sweeps, the static
//! oracle and scenario replay, plus the CSV schemas they emit.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{train, write_history, AgentConfig, EpochStats, HeadMode, OraAgent, StateScale};
use crate::alloc::{
    brute_force_static, fixed_share, pilot_concurrency, Allocator, GreedyOracle, RandomAllocator,
};
use crate::error::{Error, Result};
use crate::model::{ResourceGrants, SystemCapacity};
use crate::scenario::{CapacityConfig, Scenario, ScenarioConfig};
use crate::sim::{run_episode_with, EngineConfig, EpisodeReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AllocatorKind {
    #[serde(rename = "ora")]
    Ora,
    #[serde(rename = "tx-only")]
    TxOnly,
    #[serde(rename = "comp-only")]
    CompOnly,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "oracle")]
    Oracle,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 5] = [
        AllocatorKind::Ora,
        AllocatorKind::TxOnly,
        AllocatorKind::CompOnly,
        AllocatorKind::Random,
        AllocatorKind::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AllocatorKind::Ora => "ora",
            AllocatorKind::TxOnly => "tx-only",
            AllocatorKind::CompOnly => "comp-only",
            AllocatorKind::Random => "random",
            AllocatorKind::Oracle => "oracle",
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(
            self,
            AllocatorKind::Ora | AllocatorKind::TxOnly | AllocatorKind::CompOnly
        )
    }
}

impl fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AllocatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown allocator {s:?} (expected ora, tx-only, comp-only, random or oracle)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumTasks,
    DataSizeMean,
    IntensityMean,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::NumTasks => "num_tasks",
            SweepVariable::DataSizeMean => "data_size_mean",
            SweepVariable::IntensityMean => "intensity_mean",
        }
    }

    /// Scenario with this variable set to `value` (bits for data size).
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sweep value {value} for {} must be positive",
                self.as_str()
            )));
        }
        let mut cfg = base.clone();
        match self {
            SweepVariable::NumTasks => {
                if value.fract() != 0.0 || value > u32::MAX as f64 {
                    return Err(Error::InvalidConfig(format!(
                        "num_tasks {value} is not an integer"
                    )));
                }
                cfg.num_tasks = value as u32;
            }
            SweepVariable::DataSizeMean => cfg.data_size_mean_bits = value,
            SweepVariable::IntensityMean => cfg.intensity_mean = value,
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            variable: SweepVariable::NumTasks,
            values: vec![300.0, 400.0, 500.0, 600.0, 700.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub capacity: CapacityConfig,
    pub engine: EngineConfig,
    pub agent: AgentConfig,
    /// Allocator used by `train` and `replay`.
    pub allocator: AllocatorKind,
    /// Allocators compared by `sweep`.
    pub allocators: Vec<AllocatorKind>,
    pub sweep: SweepSpec,
    /// Evaluation seeds; each regenerates the scenario.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Train missing learnable allocators during `sweep` instead of failing.
    pub train_on_the_fly: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            capacity: CapacityConfig::default(),
            engine: EngineConfig::default(),
            agent: AgentConfig::default(),
            allocator: AllocatorKind::Ora,
            allocators: vec![
                AllocatorKind::Ora,
                AllocatorKind::TxOnly,
                AllocatorKind::CompOnly,
            ],
            sweep: SweepSpec::default(),
            seeds: vec![100_001, 100_002, 100_003, 100_004, 100_005],
            output_dir: PathBuf::from("out"),
            train_on_the_fly: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::InvalidConfig(format!("config file {} not found", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.capacity.to_capacity()?;
        self.agent.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one evaluation seed is required".into(),
            ));
        }
        if self.allocators.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one allocator".into(),
            ));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one value".into(),
            ));
        }
        for v in &self.sweep.values {
            self.sweep.variable.apply(&self.scenario, *v)?.validate()?;
        }
        Ok(())
    }

    pub fn system_capacity(&self) -> Result<SystemCapacity> {
        self.capacity.to_capacity()
    }

    pub fn checkpoint_path(&self, kind: AllocatorKind) -> PathBuf {
        self.output_dir.join(format!("{}.ckpt", kind.as_str()))
    }

    pub fn history_path(&self, kind: AllocatorKind) -> PathBuf {
        self.output_dir
            .join(format!("{}_history.csv", kind.as_str()))
    }

    pub fn sweep_path(&self) -> PathBuf {
        self.output_dir
            .join(format!("sweep_{}.csv", self.sweep.variable.as_str()))
    }
}

/// Head layout for a learnable allocator. Baselines get their fixed share
/// from a pilot run on the base scenario.
pub fn head_mode_for(kind: AllocatorKind, cfg: &ExperimentConfig) -> Result<HeadMode> {
    let cap = cfg.system_capacity()?;
    let share = |total: u32| -> Result<u32> {
        let pilot = Scenario::generate(&cfg.scenario, cap)?;
        let k = pilot_concurrency(&pilot, cfg.scenario.arrival_rate(), cfg.scenario.seed)?;
        Ok(fixed_share(total, k))
    };
    match kind {
        AllocatorKind::Ora => Ok(HeadMode::Joint),
        AllocatorKind::TxOnly => Ok(HeadMode::FixedUnits(share(cap.total_units)?)),
        AllocatorKind::CompOnly => Ok(HeadMode::FixedBlocks(share(cap.total_blocks)?)),
        other => Err(Error::InvalidConfig(format!(
            "{other} is not a learnable allocator"
        ))),
    }
}

/// Trains `kind` from scratch; epoch `i` uses scenario seed `scenario.seed + i`.
pub fn train_allocator(
    kind: AllocatorKind,
    cfg: &ExperimentConfig,
) -> Result<(OraAgent, Vec<EpochStats>)> {
    let cap = cfg.system_capacity()?;
    let mode = head_mode_for(kind, cfg)?;
    let scale = StateScale::for_workload(&cap, &cfg.scenario);
    let mut agent = OraAgent::new(cfg.agent.clone(), mode, &cap, scale)?;
    let base = cfg.scenario.clone();
    let history = train(
        &mut agent,
        |epoch| {
            let sc = ScenarioConfig {
                seed: base.seed.wrapping_add(epoch as u64),
                ..base.clone()
            };
            Scenario::generate(&sc, cap)
        },
        cfg.agent.epochs,
        cfg.engine,
    )?;
    Ok((agent, history))
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub epochs: Vec<EpochStats>,
}

pub fn cmd_train(cfg: &ExperimentConfig, kind: AllocatorKind) -> Result<TrainOutput> {
    cfg.validate()?;
    let (agent, history) = train_allocator(kind, cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let checkpoint = cfg.checkpoint_path(kind);
    agent.save(&checkpoint)?;
    let history_path = cfg.history_path(kind);
    write_history(&history, std::fs::File::create(&history_path)?)?;
    Ok(TrainOutput {
        checkpoint,
        history: history_path,
        epochs: history,
    })
}

/// Supplies the allocator to evaluate for a given kind and evaluation seed.
pub trait AllocatorPool {
    fn get(&mut self, kind: AllocatorKind, seed: u64) -> Result<&mut dyn Allocator>;
}

/// One allocator per kind, shared across seeds. Learnable allocators come
/// from checkpoints in the output directory, or are trained on demand when
/// `train_on_the_fly` is set.
pub struct CheckpointPool<'a> {
    cfg: &'a ExperimentConfig,
    cap: SystemCapacity,
    loaded: BTreeMap<AllocatorKind, Box<dyn Allocator>>,
}

impl<'a> CheckpointPool<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            cap: cfg.system_capacity()?,
            loaded: BTreeMap::new(),
        })
    }

    fn build(&self, kind: AllocatorKind) -> Result<Box<dyn Allocator>> {
        Ok(match kind {
            AllocatorKind::Random => Box::new(RandomAllocator::new(self.cap)),
            AllocatorKind::Oracle => Box::new(GreedyOracle),
            learnable => {
                let path = self.cfg.checkpoint_path(learnable);
                let mut agent = match OraAgent::load_for(&path, &self.cap) {
                    Err(Error::MissingArtifact(_)) if self.cfg.train_on_the_fly => {
                        let out = cmd_train(self.cfg, learnable)?;
                        OraAgent::load(&out.checkpoint)?
                    }
                    other => other?,
                };
                agent.set_explore(false);
                Box::new(agent)
            }
        })
    }
}

impl AllocatorPool for CheckpointPool<'_> {
    fn get(&mut self, kind: AllocatorKind, _seed: u64) -> Result<&mut dyn Allocator> {
        if !self.loaded.contains_key(&kind) {
            let a = self.build(kind)?;
            self.loaded.insert(kind, a);
        }
        Ok(self.loaded.get_mut(&kind).unwrap().as_mut())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub allocator: AllocatorKind,
    pub seed: u64,
    pub mean_total_s: f64,
    pub mean_transmission_s: f64,
    pub mean_computing_s: f64,
    pub drop_rate: f64,
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub value: f64,
    pub allocator: AllocatorKind,
    pub seeds: usize,
    pub total_s: Stat,
    pub transmission_s: Stat,
    pub computing_s: Stat,
    pub drop_rate: Stat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub const SWEEP_HEADER: [&str; 13] = [
    "kind",
    "variable",
    "value",
    "allocator",
    "seed",
    "mean_total_s",
    "std_total_s",
    "mean_transmission_s",
    "std_transmission_s",
    "mean_computing_s",
    "std_computing_s",
    "drop_rate",
    "std_drop_rate",
];

impl SweepResult {
    pub fn aggregate(&self, value: f64, allocator: AllocatorKind) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.value == value && a.allocator == allocator)
    }

    /// Per-seed rows (`kind = seed`, std columns empty) followed by one
    /// `kind = aggregate` row per (value, allocator) with an empty seed.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        let var = self.variable.as_str();
        for r in &self.rows {
            w.write_record([
                "seed".to_string(),
                var.to_string(),
                r.value.to_string(),
                r.allocator.to_string(),
                r.seed.to_string(),
                r.mean_total_s.to_string(),
                String::new(),
                r.mean_transmission_s.to_string(),
                String::new(),
                r.mean_computing_s.to_string(),
                String::new(),
                r.drop_rate.to_string(),
                String::new(),
            ])?;
        }
        for a in &self.aggregates {
            w.write_record([
                "aggregate".to_string(),
                var.to_string(),
                a.value.to_string(),
                a.allocator.to_string(),
                String::new(),
                a.total_s.mean.to_string(),
                a.total_s.std.to_string(),
                a.transmission_s.mean.to_string(),
                a.transmission_s.std.to_string(),
                a.computing_s.mean.to_string(),
                a.computing_s.std.to_string(),
                a.drop_rate.mean.to_string(),
                a.drop_rate.std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn aggregate_rows(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<((f64, AllocatorKind), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|((v, k), _)| *v == r.value && *k == r.allocator)
        {
            Some((_, g)) => g.push(r),
            None => groups.push(((r.value, r.allocator), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((value, allocator), g)| {
            let col =
                |f: fn(&SweepRow) -> f64| Stat::of(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                value,
                allocator,
                seeds: g.len(),
                total_s: col(|r| r.mean_total_s),
                transmission_s: col(|r| r.mean_transmission_s),
                computing_s: col(|r| r.mean_computing_s),
                drop_rate: col(|r| r.drop_rate),
            }
        })
        .collect()
}

/// Evaluates one allocator on the scenario regenerated with `seed`.
pub fn evaluate(
    allocator: &mut dyn Allocator,
    scenario_cfg: &ScenarioConfig,
    cap: SystemCapacity,
    seed: u64,
    engine: EngineConfig,
) -> Result<EpisodeReport> {
    let sc = ScenarioConfig {
        seed,
        ..scenario_cfg.clone()
    };
    let scenario = Scenario::generate(&sc, cap)?;
    run_episode_with(&scenario, allocator, seed, engine)
}

pub fn run_sweep(
    cfg: &ExperimentConfig,
    allocators: &[AllocatorKind],
    pool: &mut dyn AllocatorPool,
) -> Result<SweepResult> {
    cfg.validate()?;
    let cap = cfg.system_capacity()?;
    let mut rows = Vec::new();
    for &value in &cfg.sweep.values {
        let sc = cfg.sweep.variable.apply(&cfg.scenario, value)?;
        for &kind in allocators {
            for &seed in &cfg.seeds {
                let alloc = pool.get(kind, seed)?;
                let report = evaluate(alloc, &sc, cap, seed, cfg.engine)?;
                rows.push(SweepRow {
                    value,
                    allocator: kind,
                    seed,
                    mean_total_s: report.mean_total_s,
                    mean_transmission_s: report.mean_transmission_s,
                    mean_computing_s: report.mean_computing_s,
                    drop_rate: report.drop_rate(),
                });
            }
        }
    }
    let aggregates = aggregate_rows(&rows);
    Ok(SweepResult {
        variable: cfg.sweep.variable,
        rows,
        aggregates,
    })
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(SweepResult, PathBuf)> {
    cfg.validate()?;
    // fail fast on missing checkpoints before doing any work
    if !cfg.train_on_the_fly {
        for kind in cfg.allocators.iter().filter(|k| k.is_learnable()) {
            let path = cfg.checkpoint_path(*kind);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
        }
    }
    let mut pool = CheckpointPool::new(cfg)?;
    let result = run_sweep(cfg, &cfg.allocators, &mut pool)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.sweep_path();
    result.write_csv(std::fs::File::create(&path)?)?;
    Ok((result, path))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleOutput {
    pub task_ids: Vec<u32>,
    pub grants: Vec<ResourceGrants>,
    pub objective_s: f64,
}

/// Exhaustive optimum for a static instance stored in the scenario format
/// (arrival times are ignored: every task is treated as simultaneous).
pub fn cmd_oracle(instance: &Path) -> Result<OracleOutput> {
    let scenario = Scenario::load(instance)?;
    let (grants, objective_s) = brute_force_static(&scenario.tasks, &scenario.capacity)?;
    Ok(OracleOutput {
        task_ids: scenario.tasks.iter().map(|t| t.id).collect(),
        grants,
        objective_s,
    })
}

/// Runs one stored scenario with one allocator.
pub fn cmd_replay(
    cfg: &ExperimentConfig,
    scenario_path: &Path,
    kind: AllocatorKind,
    checkpoint: Option<&Path>,
    seed: u64,
) -> Result<EpisodeReport> {
    let scenario = Scenario::load(scenario_path)?;
    let cap = scenario.capacity;
    let mut alloc: Box<dyn Allocator> = match kind {
        AllocatorKind::Random => Box::new(RandomAllocator::new(cap)),
        AllocatorKind::Oracle => Box::new(GreedyOracle),
        learnable => {
            let default_path = cfg.checkpoint_path(learnable);
            let path = checkpoint.unwrap_or(&default_path);
            let mut agent = OraAgent::load_for(path, &cap)?;
            agent.set_explore(false);
            Box::new(agent)
        }
    };
    run_episode_with(&scenario, alloc.as_mut(), seed, cfg.engine)
}
