//! Workload generation and the line-oriented scenario file format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    db_to_linear, dbm_to_watts, linear_to_db, LinkBudget, SystemCapacity, TaskSpec,
    DEFAULT_DROP_PENALTY_S,
};

/// Devices closer than this to the gateway are placed at this distance.
pub const MIN_DISTANCE_KM: f64 = 0.01;
pub const MIN_DATA_SIZE_BITS: f64 = 1e4;
pub const MIN_INTENSITY: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Side of the square coverage area.
    pub area_km: f64,
    pub num_locations: u32,
    pub num_tasks: u32,
    pub horizon_s: f64,
    pub data_size_mean_bits: f64,
    pub data_size_std_bits: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    pub tx_power_w: f64,
    pub noise_dbm: f64,
    pub pathloss_a: f64,
    pub pathloss_b: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            area_km: 1.0,
            num_locations: 50,
            num_tasks: 500,
            horizon_s: 50.0,
            data_size_mean_bits: 1e6,
            data_size_std_bits: 3e5,
            intensity_mean: 10.0,
            intensity_std: 3.0,
            tx_power_w: 0.2,
            noise_dbm: -104.0,
            pathloss_a: 128.1,
            pathloss_b: 37.6,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("scenario: {msg}")));
        if self.num_tasks < 1 {
            return bad("num_tasks must be >= 1");
        }
        if self.num_locations < 1 {
            return bad("num_locations must be >= 1");
        }
        if !(self.horizon_s > 0.0) {
            return bad("horizon_s must be > 0");
        }
        if !(self.area_km > 0.0) {
            return bad("area_km must be > 0");
        }
        if !(self.data_size_mean_bits > 0.0 && self.intensity_mean > 0.0) {
            return bad("means must be > 0");
        }
        if !(self.data_size_std_bits >= 0.0 && self.intensity_std >= 0.0) {
            return bad("standard deviations must be >= 0");
        }
        if !(self.tx_power_w > 0.0) {
            return bad("tx_power_w must be > 0");
        }
        Ok(())
    }

    /// Mean computation size `E[mu] * E[l]` (independent draws).
    pub fn mean_computation_cycles(&self) -> f64 {
        self.intensity_mean * self.data_size_mean_bits
    }

    pub fn arrival_rate(&self) -> f64 {
        self.num_tasks as f64 / self.horizon_s
    }
}

/// Inputs from which the cell's discrete capacity is derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub bandwidth_hz: f64,
    pub block_hz: f64,
    pub fog_cycles_per_s: f64,
    pub unit_cycles_per_s: f64,
    pub qos_deadline_s: f64,
    pub drop_penalty_s: f64,
    pub shannon_plus_one: bool,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5e6,
            block_hz: 1.8e5,
            fog_cycles_per_s: 3e8,
            unit_cycles_per_s: 1e7,
            qos_deadline_s: 1.0,
            drop_penalty_s: DEFAULT_DROP_PENALTY_S,
            shannon_plus_one: true,
        }
    }
}

impl CapacityConfig {
    pub fn to_capacity(&self) -> Result<SystemCapacity> {
        let mut cap = capacity_from_table(
            self.bandwidth_hz,
            self.block_hz,
            self.fog_cycles_per_s,
            self.unit_cycles_per_s,
            self.qos_deadline_s,
        )?;
        cap.drop_penalty_s = self.drop_penalty_s;
        cap.shannon_plus_one = self.shannon_plus_one;
        cap.validate()?;
        Ok(cap)
    }
}

pub fn capacity_from_table(
    bandwidth_hz: f64,
    block_hz: f64,
    fog_cycles: f64,
    unit_cycles: f64,
    qos_s: f64,
) -> Result<SystemCapacity> {
    if [bandwidth_hz, block_hz, fog_cycles, unit_cycles, qos_s]
        .iter()
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidCapacity(
            "all table inputs must be positive".into(),
        ));
    }
    let blocks = (bandwidth_hz / block_hz).floor();
    let units = (fog_cycles / unit_cycles).floor();
    if blocks < 1.0 || units < 1.0 {
        return Err(Error::InvalidCapacity(format!(
            "derived M={blocks}, N={units}; both must be >= 1"
        )));
    }
    if blocks > u32::MAX as f64 || units > u32::MAX as f64 {
        return Err(Error::InvalidCapacity("capacity out of range".into()));
    }
    Ok(SystemCapacity {
        block_width_hz: block_hz,
        unit_cycles_per_s: unit_cycles,
        total_blocks: blocks as u32,
        total_units: units as u32,
        qos_deadline_s: qos_s,
        drop_penalty_s: DEFAULT_DROP_PENALTY_S.max(qos_s),
        shannon_plus_one: true,
    })
}

/// Log-distance path loss `a + b log10(d)` in dB.
pub fn path_loss_db_with(distance_km: f64, a: f64, b: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::InvalidDistance(distance_km));
    }
    Ok(a + b * distance_km.log10())
}

/// `128.1 + 37.6 log10(d)`, `d` in km.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    path_loss_db_with(distance_km, 128.1, 37.6)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub tasks: Vec<TaskSpec>,
    pub capacity: SystemCapacity,
}

impl Scenario {
    /// Sorts by arrival time (ties by id) and validates.
    pub fn new(mut tasks: Vec<TaskSpec>, capacity: SystemCapacity) -> Result<Self> {
        capacity.validate()?;
        tasks.sort_by(|a, b| {
            a.arrival_time
                .total_cmp(&b.arrival_time)
                .then(a.id.cmp(&b.id))
        });
        Ok(Self { tasks, capacity })
    }

    pub fn generate(config: &ScenarioConfig, capacity: SystemCapacity) -> Result<Self> {
        generate(config, capacity)
    }

    pub fn to_text(&self) -> String {
        let cap = &self.capacity;
        let mut out = String::new();
        out.push_str("# fogsim scenario v1\n");
        let _ = writeln!(out, "# block_width_hz={}", cap.block_width_hz);
        let _ = writeln!(out, "# unit_cycles_per_s={}", cap.unit_cycles_per_s);
        let _ = writeln!(out, "# total_blocks={}", cap.total_blocks);
        let _ = writeln!(out, "# total_units={}", cap.total_units);
        let _ = writeln!(out, "# qos_deadline_s={}", cap.qos_deadline_s);
        let _ = writeln!(out, "# drop_penalty_s={}", cap.drop_penalty_s);
        let _ = writeln!(out, "# shannon_plus_one={}", cap.shannon_plus_one);
        if let Some(t) = self.tasks.first() {
            let _ = writeln!(out, "# tx_power_w={}", t.link.tx_power_w);
            let _ = writeln!(out, "# noise_power_w={}", t.link.noise_power_w);
        }
        out.push_str("id,arrival_s,l_bits,mu,gain_db\n");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.id,
                t.arrival_time,
                t.data_size_bits,
                t.intensity,
                linear_to_db(t.link.channel_gain)
            );
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        Self::read_from(std::io::BufReader::new(f))
    }

    fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_columns = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !seen_columns {
                if line != "id,arrival_s,l_bits,mu,gain_db" {
                    return Err(Error::Parse(format!(
                        "line {}: unexpected header {line:?}",
                        lineno + 1
                    )));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {s:?}: {e}", lineno + 1)))
            };
            let id = fields[0]
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("line {}: id: {e}", lineno + 1)))?;
            rows.push((
                id,
                num(fields[1])?,
                num(fields[2])?,
                num(fields[3])?,
                num(fields[4])?,
            ));
        }

        let get = |key: &str| -> Result<&String> {
            header
                .get(key)
                .ok_or_else(|| Error::Parse(format!("missing header field {key}")))
        };
        let getf = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let getu = |key: &str| -> Result<u32> {
            get(key)?
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let capacity = SystemCapacity {
            block_width_hz: getf("block_width_hz")?,
            unit_cycles_per_s: getf("unit_cycles_per_s")?,
            total_blocks: getu("total_blocks")?,
            total_units: getu("total_units")?,
            qos_deadline_s: getf("qos_deadline_s")?,
            drop_penalty_s: getf("drop_penalty_s")?,
            shannon_plus_one: match header.get("shannon_plus_one").map(String::as_str) {
                None | Some("true") => true,
                Some("false") => false,
                Some(other) => return Err(Error::Parse(format!("shannon_plus_one: {other:?}"))),
            },
        };
        if rows.is_empty() {
            return Err(Error::EmptyInstance);
        }
        let tx_power_w = getf("tx_power_w")?;
        let noise_power_w = getf("noise_power_w")?;
        let tasks = rows
            .into_iter()
            .map(|(id, arrival, l, mu, gain_db)| {
                let link = LinkBudget::new(tx_power_w, db_to_linear(gain_db), noise_power_w)?;
                TaskSpec::new(id, arrival, l, mu, link)
            })
            .collect::<Result<Vec<_>>>()?;
        Scenario::new(tasks, capacity)
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, dist: &Normal<f64>, floor: f64) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v >= floor {
            return v;
        }
    }
}

pub fn generate(config: &ScenarioConfig, capacity: SystemCapacity) -> Result<Scenario> {
    config.validate()?;
    capacity.validate()?;
    if config.data_size_mean_bits < MIN_DATA_SIZE_BITS && config.data_size_std_bits == 0.0 {
        return Err(Error::InvalidConfig(
            "data size mean below truncation floor".into(),
        ));
    }
    if config.intensity_mean < MIN_INTENSITY && config.intensity_std == 0.0 {
        return Err(Error::InvalidConfig(
            "intensity mean below truncation floor".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let side = config.area_km;
    let center = side / 2.0;
    let gains: Vec<f64> = (0..config.num_locations)
        .map(|_| {
            let x: f64 = rng.gen_range(0.0..side);
            let y: f64 = rng.gen_range(0.0..side);
            let d = (x - center).hypot(y - center).max(MIN_DISTANCE_KM);
            let pl = path_loss_db_with(d, config.pathloss_a, config.pathloss_b)?;
            Ok(db_to_linear(-pl).min(1.0))
        })
        .collect::<Result<_>>()?;

    let data = Normal::new(config.data_size_mean_bits, config.data_size_std_bits)
        .map_err(|e| Error::InvalidConfig(format!("data size distribution: {e}")))?;
    let intensity = Normal::new(config.intensity_mean, config.intensity_std)
        .map_err(|e| Error::InvalidConfig(format!("intensity distribution: {e}")))?;
    let noise_w = dbm_to_watts(config.noise_dbm);

    let mut tasks = Vec::with_capacity(config.num_tasks as usize);
    for id in 0..config.num_tasks {
        let loc = rng.gen_range(0..gains.len());
        let arrival = rng.gen_range(0.0..=config.horizon_s);
        let l = truncated_normal(&mut rng, &data, MIN_DATA_SIZE_BITS);
        let mu = truncated_normal(&mut rng, &intensity, MIN_INTENSITY);
        let link = LinkBudget::new(config.tx_power_w, gains[loc], noise_w)?;
        tasks.push(TaskSpec::new(id, arrival, l, mu, link)?);
    }
    Scenario::new(tasks, capacity)
}
