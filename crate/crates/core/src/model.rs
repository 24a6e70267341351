//! Physical and delay model of a single fog-assisted cell.
//!
//! Everything here is a pure function of its inputs. A task uploads
//! `data_size_bits` over `x` radio blocks of width `block_width_hz` and then
//! runs `computation_cycles` on `y` computation units of `unit_cycles_per_s`
//! each. A task whose total delay would exceed the QoS deadline (or that has
//! a zero grant in either dimension) is dropped and charged `drop_penalty_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Uplink budget of one device towards the gateway.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    /// Linear power gain, `<= 1`.
    pub channel_gain: f64,
    pub noise_power_w: f64,
}

impl LinkBudget {
    pub fn new(tx_power_w: f64, channel_gain: f64, noise_power_w: f64) -> Result<Self> {
        let link = Self {
            tx_power_w,
            channel_gain,
            noise_power_w,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tx_power_w > 0.0
            && self.channel_gain > 0.0
            && self.channel_gain <= 1.0
            && self.noise_power_w > 0.0
            && self.tx_power_w.is_finite()
            && self.noise_power_w.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid link budget {self:?}"
            )))
        }
    }

    pub fn snr(&self) -> f64 {
        self.tx_power_w * self.channel_gain / self.noise_power_w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u32,
    pub arrival_time: f64,
    pub data_size_bits: f64,
    /// CPU cycles per bit.
    pub intensity: f64,
    /// Always `intensity * data_size_bits`.
    pub computation_cycles: f64,
    pub link: LinkBudget,
}

impl TaskSpec {
    pub fn new(
        id: u32,
        arrival_time: f64,
        data_size_bits: f64,
        intensity: f64,
        link: LinkBudget,
    ) -> Result<Self> {
        if !(data_size_bits > 0.0 && data_size_bits.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "task {id}: data size must be positive, got {data_size_bits}"
            )));
        }
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "task {id}: intensity must be positive, got {intensity}"
            )));
        }
        link.validate()?;
        Ok(Self {
            id,
            arrival_time,
            data_size_bits,
            intensity,
            computation_cycles: intensity * data_size_bits,
            link,
        })
    }
}

/// Blocks (`x`) and units (`y`) granted to one task.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ResourceGrants {
    pub blocks: u32,
    pub units: u32,
}

impl ResourceGrants {
    pub const ZERO: ResourceGrants = ResourceGrants {
        blocks: 0,
        units: 0,
    };

    pub fn new(blocks: u32, units: u32) -> Self {
        Self { blocks, units }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemCapacity {
    pub block_width_hz: f64,
    pub unit_cycles_per_s: f64,
    pub total_blocks: u32,
    pub total_units: u32,
    pub qos_deadline_s: f64,
    pub drop_penalty_s: f64,
    /// `log2(1 + SNR)` when set, otherwise the bare `log2(SNR)`.
    #[serde(default = "default_true")]
    pub shannon_plus_one: bool,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_DROP_PENALTY_S: f64 = 10.0;

impl SystemCapacity {
    pub fn validate(&self) -> Result<()> {
        if self.total_blocks < 1 || self.total_units < 1 {
            return Err(Error::InvalidCapacity(format!(
                "need at least one block and one unit, got M={} N={}",
                self.total_blocks, self.total_units
            )));
        }
        if !(self.block_width_hz > 0.0 && self.unit_cycles_per_s > 0.0) {
            return Err(Error::InvalidCapacity(
                "block width and unit speed must be positive".into(),
            ));
        }
        if !(self.qos_deadline_s > 0.0) || self.drop_penalty_s < self.qos_deadline_s {
            return Err(Error::InvalidCapacity(format!(
                "need 0 < deadline ({}) <= drop penalty ({})",
                self.qos_deadline_s, self.drop_penalty_s
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    /// Upload time for the granted blocks; infinite for a zero grant.
    pub transmission_s: f64,
    /// Execution time for the granted units; infinite for a zero grant.
    pub computing_s: f64,
    /// `transmission_s + computing_s`, or the drop penalty when dropped.
    pub total_s: f64,
    pub dropped: bool,
}

/// Shannon–Hartley spectral efficiency `log2(1 + P h / sigma^2)` in bit/s/Hz.
pub fn spectral_efficiency(link: &LinkBudget) -> f64 {
    (1.0 + link.snr()).log2()
}

/// Spectral efficiency in either the Shannon form or the bare `log2(SNR)`
/// form. The latter is negative below 0 dB SNR.
pub fn spectral_efficiency_with(link: &LinkBudget, plus_one: bool) -> f64 {
    if plus_one {
        spectral_efficiency(link)
    } else {
        link.snr().log2()
    }
}

pub fn transmission_delay(task: &TaskSpec, blocks: u32, cap: &SystemCapacity) -> Result<f64> {
    if blocks == 0 {
        return Err(Error::InfeasibleAllocation("zero resource blocks"));
    }
    let eta = spectral_efficiency_with(&task.link, cap.shannon_plus_one);
    if !(eta > 0.0) {
        return Err(Error::InfeasibleAllocation(
            "non-positive spectral efficiency",
        ));
    }
    Ok(task.data_size_bits / (blocks as f64 * cap.block_width_hz * eta))
}

pub fn computing_delay(task: &TaskSpec, units: u32, cap: &SystemCapacity) -> Result<f64> {
    if units == 0 {
        return Err(Error::InfeasibleAllocation("zero computation units"));
    }
    Ok(task.computation_cycles / (units as f64 * cap.unit_cycles_per_s))
}

pub fn task_delay(task: &TaskSpec, grants: ResourceGrants, cap: &SystemCapacity) -> DelayBreakdown {
    let transmission_s = transmission_delay(task, grants.blocks, cap).unwrap_or(f64::INFINITY);
    let computing_s = computing_delay(task, grants.units, cap).unwrap_or(f64::INFINITY);
    let served = transmission_s + computing_s;
    if served <= cap.qos_deadline_s {
        DelayBreakdown {
            transmission_s,
            computing_s,
            total_s: served,
            dropped: false,
        }
    } else {
        DelayBreakdown {
            transmission_s,
            computing_s,
            total_s: cap.drop_penalty_s,
            dropped: true,
        }
    }
}

pub fn qos_feasible(task: &TaskSpec, grants: ResourceGrants, cap: &SystemCapacity) -> bool {
    !task_delay(task, grants, cap).dropped
}

/// Mean per-task delay of an assignment, dropped tasks priced at the penalty.
pub fn objective_value(
    tasks: &[TaskSpec],
    grants: &[ResourceGrants],
    cap: &SystemCapacity,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if tasks.len() != grants.len() {
        return Err(Error::Shape {
            expected: tasks.len(),
            got: grants.len(),
        });
    }
    let sum: f64 = tasks
        .iter()
        .zip(grants)
        .map(|(t, g)| task_delay(t, *g, cap).total_s)
        .sum();
    Ok(sum / tasks.len() as f64)
}
