//! Scenario files.
//!
//! A scenario is a TOML document with one table per module:
//!
//! ```toml
//! [scenario]
//! nodes = 9
//! duration_s = 1000.0
//! protocol = "elqr"
//!
//! [routing]
//! alpha_j = 85.0
//! ```
//!
//! Every key has a default, unknown keys are rejected, and [`ScenarioConfig::validate`]
//! checks cross-field consistency before a run starts. Overrides use
//! `key=value` where `key` is either `section.key` or a bare key that is
//! unique across sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyBudget, EnergyError, DEFAULT_ALPHA_J};
use crate::link_estimation::EstimatorParams;
pub use crate::routing::Protocol;
use crate::routing::RoutingParams;
use crate::types::{Etx, NodeId, SimTime};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` is ambiguous, qualify it as one of: {candidates}")]
    AmbiguousKey { key: String, candidates: String },
    #[error("override `{0}` is not of the form key=value")]
    MalformedOverride(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub nodes: u16,
    pub area_w: f64,
    pub area_h: f64,
    pub seed: u64,
    /// Seeds for multi-seed commands; empty means just `seed`.
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub traffic_period_s: f64,
    pub snapshot_interval_s: f64,
    pub protocol: Protocol,
    pub output_dir: String,
    /// The sink draws from mains power and never dies.
    pub mains_powered_sink: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            nodes: 9,
            area_w: 50.0,
            area_h: 50.0,
            seed: 1,
            seeds: Vec::new(),
            duration_s: 1000.0,
            traffic_period_s: 1.0,
            snapshot_interval_s: 10.0,
            protocol: Protocol::Elqr,
            output_dir: "out".to_string(),
            mains_powered_sink: true,
        }
    }
}

/// Optional explicit placement. When `positions` is empty nodes are placed
/// on the jittered grid; when `gain_db` is non-empty it replaces the channel
/// model's static gains entirely (`gain_db[i][j]` is the gain from i to j).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub positions: Vec<[f64; 2]>,
    pub gain_db: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub tx_power_dbm: f64,
    /// Path loss at the reference distance `d0_m`.
    pub pl0_db: f64,
    pub d0_m: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub fading_sigma_db: f64,
    pub noise_floor_dbm: f64,
    pub prr_slope: f64,
    pub snr_mid_db: f64,
    /// Minimum instantaneous SNR for a frame to carry the white bit.
    pub white_bit_snr_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            tx_power_dbm: 0.0,
            pl0_db: 40.0,
            d0_m: 1.0,
            path_loss_exponent: 3.0,
            shadowing_sigma_db: 3.0,
            fading_sigma_db: 2.0,
            noise_floor_dbm: -92.0,
            prr_slope: 0.8,
            snr_mid_db: 6.0,
            white_bit_snr_db: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacSection {
    pub airtime_ms: f64,
    pub max_retries: u32,
    pub queue_capacity: usize,
}

impl Default for MacSection {
    fn default() -> Self {
        MacSection {
            airtime_ms: 4.0,
            max_retries: 5,
            queue_capacity: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub window: u8,
    pub lambda_permille: u16,
    pub mu_permille: u16,
    pub unicast_fold: u16,
    pub etx_max: u16,
    pub initial_etx: u16,
    pub table_size: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let p = EstimatorParams::default();
        EstimatorSection {
            window: p.window,
            lambda_permille: p.lambda_permille,
            mu_permille: p.mu_permille,
            unicast_fold: p.unicast_fold,
            etx_max: p.etx_max.0,
            initial_etx: p.initial_etx.0,
            table_size: p.table_size,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityOverride {
    pub node: u16,
    pub joules: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub voltage_v: f64,
    pub cpu_active_ma: f64,
    pub cpu_sleep_ma: f64,
    pub radio_tx_ma: f64,
    pub radio_rx_ma: f64,
    pub radio_idle_ma: f64,
    pub capacity_j: f64,
    pub dead_threshold_j: f64,
    pub capacity_overrides: Vec<CapacityOverride>,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            voltage_v: 3.0,
            cpu_active_ma: 8.0,
            cpu_sleep_ma: 0.008,
            radio_tx_ma: 17.0,
            radio_rx_ma: 15.5,
            radio_idle_ma: 0.02,
            capacity_j: 23_760.0,
            dead_threshold_j: 0.0,
            capacity_overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingSection {
    pub alpha_j: f64,
    pub beta0: u32,
    pub beta_max: u32,
    pub epoch_rounds: u32,
    pub beacon_interval_s: f64,
    pub hysteresis_deci: u32,
    pub staleness_periods: u32,
    pub route_seq_period: u32,
}

impl Default for RoutingSection {
    fn default() -> Self {
        RoutingSection {
            alpha_j: DEFAULT_ALPHA_J,
            beta0: 50,
            beta_max: 500,
            epoch_rounds: 100,
            beacon_interval_s: 2.0,
            hysteresis_deci: 15,
            staleness_periods: 3,
            route_seq_period: 10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub topology: TopologySection,
    pub channel: ChannelSection,
    pub mac: MacSection,
    pub estimator: EstimatorSection,
    pub energy: EnergySection,
    pub routing: RoutingSection,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with_overrides::<&str>(path, &[])
    }

    /// Reads `path`, applies `key=value` overrides in order and validates.
    pub fn load_with_overrides<S: AsRef<str>>(
        path: &Path,
        overrides: &[S],
    ) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides::<&str>(text, &[])
    }

    pub fn parse_with_overrides<S: AsRef<str>>(
        text: &str,
        overrides: &[S],
    ) -> Result<Self, ConfigError> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut doc, item.as_ref())?;
        }
        let config: ScenarioConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies one override to an already parsed configuration.
    pub fn with_override(&self, item: &str) -> Result<Self, ConfigError> {
        let mut doc = self.to_table();
        apply_override(&mut doc, item)?;
        let config: ScenarioConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.nodes == 0 {
            return Err(invalid("nodes", "a scenario needs at least one node"));
        }
        for (key, v) in [("area_w", s.area_w), ("area_h", s.area_h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        if !(s.duration_s >= 0.0 && s.duration_s.is_finite()) {
            return Err(invalid(
                "duration_s",
                format!("must be non-negative, got {}", s.duration_s),
            ));
        }
        for (key, v) in [
            ("traffic_period_s", s.traffic_period_s),
            ("snapshot_interval_s", s.snapshot_interval_s),
            ("beacon_interval_s", self.routing.beacon_interval_s),
            ("airtime_ms", self.mac.airtime_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        let n = usize::from(s.nodes);
        let t = &self.topology;
        if !t.positions.is_empty() {
            if t.positions.len() != n {
                return Err(invalid(
                    "positions",
                    format!("expected {n} positions, got {}", t.positions.len()),
                ));
            }
            if let Some(p) = t
                .positions
                .iter()
                .find(|[x, y]| !(0.0..=s.area_w).contains(x) || !(0.0..=s.area_h).contains(y))
            {
                return Err(invalid(
                    "positions",
                    format!("({}, {}) lies outside the area", p[0], p[1]),
                ));
            }
        }
        if !t.gain_db.is_empty()
            && (t.gain_db.len() != n || t.gain_db.iter().any(|row| row.len() != n))
        {
            return Err(invalid("gain_db", format!("expected a {n}x{n} matrix")));
        }

        let c = &self.channel;
        if !(c.d0_m > 0.0) {
            return Err(invalid("d0_m", "reference distance must be positive"));
        }
        for (key, v) in [
            ("shadowing_sigma_db", c.shadowing_sigma_db),
            ("fading_sigma_db", c.fading_sigma_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be non-negative, got {v}")));
            }
        }
        if !(c.prr_slope > 0.0) {
            return Err(invalid("prr_slope", "must be positive"));
        }

        if self.mac.queue_capacity == 0 {
            return Err(invalid("queue_capacity", "must be at least 1"));
        }

        let e = &self.estimator;
        if e.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        for (key, v) in [
            ("lambda_permille", e.lambda_permille),
            ("mu_permille", e.mu_permille),
        ] {
            if v > 1000 {
                return Err(invalid(key, format!("must be at most 1000, got {v}")));
            }
        }
        if e.unicast_fold == 0 {
            return Err(invalid("unicast_fold", "must be at least 1"));
        }
        if e.etx_max < Etx::ONE.0 {
            return Err(invalid("etx_max", "must be at least 10 (one transmission)"));
        }
        if !(Etx::ONE.0..=e.etx_max).contains(&e.initial_etx) {
            return Err(invalid(
                "initial_etx",
                format!("must lie in [10, {}]", e.etx_max),
            ));
        }
        if e.table_size == 0 {
            return Err(invalid("table_size", "must be at least 1"));
        }

        self.energy_budget()?;
        let en = &self.energy;
        if !(en.capacity_j > 0.0 && en.capacity_j.is_finite()) {
            return Err(invalid("capacity_j", "must be positive"));
        }
        if !(en.dead_threshold_j >= 0.0) {
            return Err(invalid("dead_threshold_j", "must be non-negative"));
        }
        for o in &en.capacity_overrides {
            if o.node >= s.nodes {
                return Err(invalid(
                    "capacity_overrides",
                    format!("node {} does not exist", o.node),
                ));
            }
            if !(o.joules > 0.0 && o.joules.is_finite()) {
                return Err(invalid(
                    "capacity_overrides",
                    format!("node {} needs a positive capacity", o.node),
                ));
            }
        }

        let r = &self.routing;
        if !(r.alpha_j >= 0.0 && r.alpha_j.is_finite()) {
            return Err(invalid("alpha_j", "must be non-negative"));
        }
        if r.beta0 > r.beta_max {
            return Err(invalid(
                "beta0",
                format!("exceeds beta_max ({} > {})", r.beta0, r.beta_max),
            ));
        }
        for (key, v) in [
            ("epoch_rounds", r.epoch_rounds),
            ("staleness_periods", r.staleness_periods),
            ("route_seq_period", r.route_seq_period),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Seeds for multi-seed commands.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.scenario.seeds.is_empty() {
            vec![self.scenario.seed]
        } else {
            self.scenario.seeds.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.scenario.seed = seed;
        c
    }

    pub fn with_protocol(&self, protocol: Protocol) -> Self {
        let mut c = self.clone();
        c.scenario.protocol = protocol;
        c
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.scenario.duration_s)
    }

    pub fn estimator_params(&self) -> EstimatorParams {
        let e = &self.estimator;
        EstimatorParams {
            window: e.window,
            lambda_permille: e.lambda_permille,
            mu_permille: e.mu_permille,
            unicast_fold: e.unicast_fold,
            etx_max: Etx(e.etx_max),
            initial_etx: Etx(e.initial_etx),
            table_size: e.table_size,
        }
    }

    pub fn routing_params(&self) -> RoutingParams {
        let r = &self.routing;
        RoutingParams {
            protocol: self.scenario.protocol,
            alpha_j: r.alpha_j,
            beta0: r.beta0,
            beta_max: r.beta_max,
            epoch_rounds: r.epoch_rounds,
            beacon_interval: SimTime::from_secs_f64(r.beacon_interval_s),
            hysteresis_deci: r.hysteresis_deci,
            staleness_periods: r.staleness_periods,
            route_seq_period: r.route_seq_period,
        }
    }

    pub fn energy_budget(&self) -> Result<EnergyBudget, EnergyError> {
        let e = &self.energy;
        EnergyBudget::new(
            e.voltage_v,
            e.cpu_active_ma,
            e.cpu_sleep_ma,
            e.radio_tx_ma,
            e.radio_rx_ma,
            e.radio_idle_ma,
        )
    }

    /// Battery capacity of `node`, honoring per-node overrides (last one wins).
    pub fn capacity_of(&self, node: NodeId) -> f64 {
        self.energy
            .capacity_overrides
            .iter()
            .rev()
            .find(|o| o.node == node.0)
            .map_or(self.energy.capacity_j, |o| o.joules)
    }
}

/// Resolves `key` to `(section, field)` against the default document.
fn resolve_key(key: &str) -> Result<(String, String), ConfigError> {
    let defaults = ScenarioConfig::default().to_table();
    if let Some((section, field)) = key.split_once('.') {
        let known = defaults
            .get(section)
            .and_then(|v| v.as_table())
            .is_some_and(|t| t.contains_key(field));
        return if known {
            Ok((section.to_string(), field.to_string()))
        } else {
            Err(ConfigError::UnknownKey(key.to_string()))
        };
    }
    let owners: Vec<&String> = defaults
        .iter()
        .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
        .map(|(name, _)| name)
        .collect();
    match owners.as_slice() {
        [] => Err(ConfigError::UnknownKey(key.to_string())),
        [one] => Ok(((*one).clone(), key.to_string())),
        many => Err(ConfigError::AmbiguousKey {
            key: key.to_string(),
            candidates: many
                .iter()
                .map(|s| format!("{s}.{key}"))
                .collect::<Vec<_>>()
                .join(", "),
        }),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, value) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::MalformedOverride(item.to_string()))?;
    let (section, field) = resolve_key(key.trim())?;
    let table = doc
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| ConfigError::Parse(format!("`{section}` must be a table")))?;
    table.insert(field, parse_value(value));
    Ok(())
}
