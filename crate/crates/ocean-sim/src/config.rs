//! Scenario configuration: flat TOML keys covering radio, mobility, traffic,
//! rating, economy, and behavior knobs, with strict unknown-key rejection and
//! field-naming validation errors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorKind;
use crate::chips::{ChipParams, ChipScheme};
use crate::model::secs_to_micros;
use crate::ranker::RankerParams;
use crate::routing::RoutingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Defenseless,
    Ocean,
    Sechand,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Defenseless => "defenseless",
            Mode::Ocean => "ocean",
            Mode::Sechand => "sechand",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Economy {
    Off,
    Optimistic,
    Pessimistic,
}

#[derive(Debug, thiserror::Error)]
#[error("config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // topology and radio
    pub num_nodes: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub radio_range_m: f64,
    pub raw_bandwidth_bps: f64,
    pub header_bytes: u32,
    pub link_loss_prob: f64,

    // mobility (pause_time_s = inf pins every node in place)
    pub max_speed_mps: f64,
    pub min_speed_mps: f64,
    pub pause_time_s: f64,

    // traffic
    pub concurrent_connections: usize,
    pub packets_per_connection: u32,
    pub source_rate_pps: f64,
    pub min_connection_hops: u32,
    pub payload_bytes: u32,

    // run
    pub sim_duration_s: f64,
    pub seed: u64,
    pub mode: Mode,

    // rating
    pub rating_neutral: i32,
    pub rating_positive_step: i32,
    pub rating_negative_step: i32,
    pub faulty_threshold: i32,
    pub faulty_timeout_s: f64,
    pub rating_floor_factor: i32,
    pub watch_timeout_ms: f64,

    // economy
    pub economy: Economy,
    pub chip_car_per_s: f64,
    pub chip_initial_balance: f64,
    pub chip_spend_threshold: f64,
    pub chip_ceiling: f64,

    // behavior
    pub misleading_nodes: usize,
    pub selfish_nodes: usize,
    pub rushing_nodes: usize,
    pub misleading_runs_ocean: bool,
    pub misleading_rush: bool,
    pub route_padding: u8,
    pub bogus_hop: bool,

    // routing plumbing
    pub jitter_max_ms: f64,
    pub retransmit_attempts: u32,
    pub route_cache_lifetime_s: f64,
    pub hop_limit: u8,
    pub send_buffer_timeout_s: f64,

    // deterministic overrides for hand-built topologies
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<BehaviorKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traffic_pairs: Option<Vec<[u16; 2]>>,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            num_nodes: 40,
            area_width_m: 1500.0,
            area_height_m: 300.0,
            radio_range_m: 250.0,
            raw_bandwidth_bps: 2_000_000.0,
            header_bytes: 40,
            link_loss_prob: 0.0,
            max_speed_mps: 20.0,
            min_speed_mps: 1.0,
            pause_time_s: 0.0,
            concurrent_connections: 10,
            packets_per_connection: 8,
            source_rate_pps: 4.0,
            min_connection_hops: 2,
            payload_bytes: 64,
            sim_duration_s: 100.0,
            seed: 1,
            mode: Mode::Ocean,
            rating_neutral: 0,
            rating_positive_step: 1,
            rating_negative_step: -2,
            faulty_threshold: -40,
            faulty_timeout_s: 30.0,
            rating_floor_factor: 5,
            watch_timeout_ms: 1.0,
            economy: Economy::Off,
            chip_car_per_s: 0.0,
            chip_initial_balance: 0.0,
            chip_spend_threshold: 0.0,
            chip_ceiling: 100.0,
            misleading_nodes: 0,
            selfish_nodes: 0,
            rushing_nodes: 0,
            misleading_runs_ocean: true,
            misleading_rush: false,
            route_padding: 0,
            bogus_hop: false,
            jitter_max_ms: 10.0,
            retransmit_attempts: 3,
            route_cache_lifetime_s: 30.0,
            hop_limit: 16,
            send_buffer_timeout_s: 5.0,
            positions: None,
            profiles: None,
            traffic_pairs: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(s).map_err(|e| err("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_nodes == 0 || self.num_nodes > u16::MAX as usize {
            return Err(err("num_nodes", "must be in 1..=65535"));
        }
        if !(self.area_width_m > 0.0) || !(self.area_height_m > 0.0) {
            return Err(err("area_width_m/area_height_m", "must be positive"));
        }
        if !(self.radio_range_m > 0.0) {
            return Err(err("radio_range_m", "must be positive"));
        }
        if !(self.raw_bandwidth_bps > 0.0) {
            return Err(err("raw_bandwidth_bps", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.link_loss_prob) {
            return Err(err("link_loss_prob", "must be in [0, 1]"));
        }
        if !(self.min_speed_mps > 0.0) || self.max_speed_mps < self.min_speed_mps {
            return Err(err(
                "min_speed_mps/max_speed_mps",
                "need 0 < min_speed_mps <= max_speed_mps",
            ));
        }
        if self.pause_time_s.is_nan() || self.pause_time_s < 0.0 {
            return Err(err("pause_time_s", "must be >= 0 (inf pins nodes in place)"));
        }
        if !(self.source_rate_pps > 0.0) {
            return Err(err("source_rate_pps", "must be positive"));
        }
        if self.packets_per_connection == 0 {
            return Err(err("packets_per_connection", "must be >= 1"));
        }
        if !(self.sim_duration_s > 0.0) || !self.sim_duration_s.is_finite() {
            return Err(err("sim_duration_s", "must be positive and finite"));
        }
        if self.faulty_threshold >= self.rating_neutral {
            return Err(err("faulty_threshold", "must be below rating_neutral"));
        }
        if self.rating_negative_step >= 0 {
            return Err(err("rating_negative_step", "must be negative"));
        }
        if self.rating_positive_step <= 0 {
            return Err(err("rating_positive_step", "must be positive"));
        }
        if self.rating_floor_factor < 1 {
            return Err(err("rating_floor_factor", "must be >= 1"));
        }
        if !(self.faulty_timeout_s > 0.0) || !self.faulty_timeout_s.is_finite() {
            return Err(err("faulty_timeout_s", "must be positive and finite"));
        }
        if !(self.watch_timeout_ms > 0.0) {
            return Err(err("watch_timeout_ms", "must be positive"));
        }
        if self.chip_car_per_s < 0.0 {
            return Err(err("chip_car_per_s", "must be >= 0"));
        }
        if self.chip_ceiling < self.chip_initial_balance {
            return Err(err("chip_ceiling", "must be >= chip_initial_balance"));
        }
        let behaving = self.misleading_nodes + self.selfish_nodes + self.rushing_nodes;
        if behaving > self.num_nodes {
            return Err(err(
                "misleading_nodes/selfish_nodes/rushing_nodes",
                "behavior counts exceed num_nodes",
            ));
        }
        if self.hop_limit == 0 {
            return Err(err("hop_limit", "must be >= 1"));
        }
        if self.retransmit_attempts == 0 {
            return Err(err("retransmit_attempts", "must be >= 1"));
        }
        if let Some(p) = &self.positions {
            if p.len() != self.num_nodes {
                return Err(err("positions", "length must equal num_nodes"));
            }
            for (i, [x, y]) in p.iter().enumerate() {
                if !(0.0..=self.area_width_m).contains(x) || !(0.0..=self.area_height_m).contains(y)
                {
                    return Err(err("positions", format!("entry {i} outside the area")));
                }
            }
        }
        if let Some(p) = &self.profiles {
            if p.len() != self.num_nodes {
                return Err(err("profiles", "length must equal num_nodes"));
            }
        }
        if let Some(pairs) = &self.traffic_pairs {
            for (i, [s, d]) in pairs.iter().enumerate() {
                if *s as usize >= self.num_nodes || *d as usize >= self.num_nodes {
                    return Err(err("traffic_pairs", format!("entry {i} names an unknown node")));
                }
                if s == d {
                    return Err(err("traffic_pairs", format!("entry {i} is a self-loop")));
                }
            }
        }
        Ok(())
    }

    /// Overwrite one field by its TOML key; the round trip through the TOML
    /// table keeps every scalar field addressable without a hand-written
    /// match, and re-runs validation.
    pub fn with_field(&self, key: &str, value: toml::Value) -> Result<ScenarioConfig, ConfigError> {
        let mut table =
            toml::Table::try_from(self).map_err(|e| err(key, e.to_string()))?;
        if !table.contains_key(key) {
            return Err(err(key, "unknown config field"));
        }
        table.insert(key.to_string(), value);
        let cfg: ScenarioConfig = table.try_into().map_err(|e| err(key, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_static(&self) -> bool {
        self.pause_time_s.is_infinite()
    }

    pub fn watch_timeout_us(&self) -> u64 {
        (self.watch_timeout_ms * 1_000.0).round() as u64
    }

    pub fn ranker_params(&self) -> RankerParams {
        RankerParams {
            neutral: self.rating_neutral,
            positive_step: self.rating_positive_step,
            negative_step: self.rating_negative_step,
            faulty_threshold: self.faulty_threshold,
            faulty_timeout_us: secs_to_micros(self.faulty_timeout_s),
            floor_factor: self.rating_floor_factor,
        }
    }

    pub fn chip_params(&self) -> ChipParams {
        ChipParams {
            scheme: match self.economy {
                Economy::Pessimistic => ChipScheme::Pessimistic,
                _ => ChipScheme::Optimistic,
            },
            car_per_s: self.chip_car_per_s,
            spend_threshold: self.chip_spend_threshold,
            initial_balance: self.chip_initial_balance,
            ceiling: self.chip_ceiling,
        }
    }

    pub fn routing_params(&self) -> RoutingParams {
        RoutingParams {
            jitter_max_us: (self.jitter_max_ms * 1_000.0).round() as u64,
            retransmit_attempts: self.retransmit_attempts,
            cache_lifetime_us: secs_to_micros(self.route_cache_lifetime_s),
            hop_limit: self.hop_limit,
            send_buffer_timeout_us: secs_to_micros(self.send_buffer_timeout_s),
            rreq_retry_initial_us: 500_000,
            rreq_retry_max_us: 8_000_000,
        }
    }

    /// Behavior kind per node: the explicit per-node list when given,
    /// otherwise counts assigned from the low node ids upward (the engine
    /// shuffles ids into random positions, so which ids misbehave is not a
    /// spatial bias).
    pub fn behavior_kinds(&self) -> Vec<BehaviorKind> {
        if let Some(p) = &self.profiles {
            return p.clone();
        }
        let mut kinds = vec![BehaviorKind::Cooperating; self.num_nodes];
        let mut i = 0;
        for _ in 0..self.misleading_nodes {
            kinds[i] = BehaviorKind::Misleading;
            i += 1;
        }
        for _ in 0..self.selfish_nodes {
            kinds[i] = BehaviorKind::Selfish;
            i += 1;
        }
        for _ in 0..self.rushing_nodes {
            kinds[i] = BehaviorKind::Rushing;
            i += 1;
        }
        kinds
    }
}

/// Check a sweep key list for duplicates; used by the harness.
pub fn distinct_keys(keys: &[&str]) -> bool {
    let mut seen = BTreeSet::new();
    keys.iter().all(|k| seen.insert(*k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_from_an_empty_config() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.num_nodes, 40);
        assert_eq!(cfg.area_width_m, 1500.0);
        assert_eq!(cfg.area_height_m, 300.0);
        assert_eq!(cfg.radio_range_m, 250.0);
        assert_eq!(cfg.max_speed_mps, 20.0);
        assert_eq!(cfg.raw_bandwidth_bps, 2_000_000.0);
        assert_eq!(cfg.packets_per_connection, 8);
        assert_eq!(cfg.min_connection_hops, 2);
        assert_eq!(cfg.source_rate_pps, 4.0);
        assert_eq!(cfg.payload_bytes, 64);
        assert_eq!(cfg.link_loss_prob, 0.0);
        assert_eq!(cfg.faulty_threshold, -40);
        assert_eq!(cfg.faulty_timeout_s, 30.0);
        assert_eq!(cfg.mode, Mode::Ocean);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ScenarioConfig::from_toml_str("radio_rnage_m = 250.0").unwrap_err();
        assert!(e.to_string().contains("radio_rnage_m"), "{e}");
    }

    #[test]
    fn validation_names_the_offending_field() {
        let e = ScenarioConfig::from_toml_str("link_loss_prob = 1.5").unwrap_err();
        assert!(e.to_string().contains("link_loss_prob"), "{e}");

        let e = ScenarioConfig::from_toml_str("num_nodes = 4\nmisleading_nodes = 5").unwrap_err();
        assert!(e.to_string().contains("misleading_nodes"), "{e}");
    }

    #[test]
    fn infinite_pause_time_parses_and_means_static() {
        let cfg = ScenarioConfig::from_toml_str("pause_time_s = inf").unwrap();
        assert!(cfg.is_static());
        assert!(!ScenarioConfig::default().is_static());
    }

    #[test]
    fn mode_and_economy_parse_as_lowercase_strings() {
        let cfg =
            ScenarioConfig::from_toml_str("mode = \"sechand\"\neconomy = \"pessimistic\"").unwrap();
        assert_eq!(cfg.mode, Mode::Sechand);
        assert_eq!(cfg.economy, Economy::Pessimistic);
    }

    #[test]
    fn with_field_addresses_every_scalar_key() {
        let base = ScenarioConfig::default();
        let cfg = base.with_field("faulty_threshold", toml::Value::Integer(-10)).unwrap();
        assert_eq!(cfg.faulty_threshold, -10);
        let cfg = base
            .with_field("mode", toml::Value::String("defenseless".into()))
            .unwrap();
        assert_eq!(cfg.mode, Mode::Defenseless);
        let cfg = base.with_field("pause_time_s", toml::Value::Float(60.0)).unwrap();
        assert_eq!(cfg.pause_time_s, 60.0);
        assert!(base.with_field("no_such_key", toml::Value::Integer(1)).is_err());
        // Validation still runs on the patched config.
        assert!(base.with_field("faulty_threshold", toml::Value::Integer(5)).is_err());
    }

    #[test]
    fn micro_topology_overrides_validate_lengths() {
        let text = r#"
num_nodes = 3
positions = [[0.0, 0.0], [200.0, 100.0], [400.0, 0.0]]
profiles = ["cooperating", "misleading", "cooperating"]
traffic_pairs = [[0, 2]]
pause_time_s = inf
area_width_m = 800.0
"#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.behavior_kinds()[1], BehaviorKind::Misleading);

        let bad = text.replace("[[0, 2]]", "[[0, 3]]");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn behavior_counts_fill_from_the_front() {
        let cfg = ScenarioConfig::from_toml_str(
            "num_nodes = 6\nmisleading_nodes = 2\nselfish_nodes = 1\nrushing_nodes = 1",
        )
        .unwrap();
        let kinds = cfg.behavior_kinds();
        assert_eq!(
            kinds,
            vec![
                BehaviorKind::Misleading,
                BehaviorKind::Misleading,
                BehaviorKind::Selfish,
                BehaviorKind::Rushing,
                BehaviorKind::Cooperating,
                BehaviorKind::Cooperating,
            ]
        );
    }
}
