//! Experiment and suite descriptions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{MissionConfig, PlannerKind, SlamMode};
use crate::guidance::Controller;
use crate::sensors::{NoiseConfig, SensorConfig};
use crate::track::TrackSpec;
use crate::vehicle::VehicleParams;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config {0:?}: seed list is empty")]
    NoSeeds(String),
    #[error("config {0:?}: {1}")]
    Invalid(String, String),
    #[error("duplicate config id {0:?}")]
    DuplicateId(String),
    #[error("invalid suite json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub id: String,
    /// Track generator settings; the seed is replaced by each run seed.
    pub track: TrackSpec,
    pub noise: NoiseConfig,
    pub sensors: SensorConfig,
    pub vehicle: VehicleParams,
    pub slam_mode: SlamMode,
    pub planner: PlannerKind,
    pub controller: Controller,
    /// Fast laps after the discovery lap.
    pub laps: u32,
    pub seeds: Vec<u64>,
    /// Remaining mission settings; the fields above take precedence.
    pub mission: MissionConfig,
    /// Simulated-time cap per run, seconds.
    pub max_time: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "default".into(),
            track: TrackSpec::default(),
            noise: NoiseConfig::default(),
            sensors: SensorConfig::default(),
            vehicle: VehicleParams::default(),
            slam_mode: SlamMode::Grid,
            planner: PlannerKind::HybridAStar,
            controller: Controller::PurePursuit,
            laps: 1,
            seeds: vec![0, 1, 2, 3],
            mission: MissionConfig::default(),
            max_time: 150.0,
        }
    }
}

impl ExperimentConfig {
    pub fn named(id: &str, slam_mode: SlamMode, planner: PlannerKind, controller: Controller) -> Self {
        Self { id: id.into(), slam_mode, planner, controller, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(self.id.clone(), m.into()));
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds(self.id.clone()));
        }
        if self.laps == 0 {
            return bad("laps must be at least 1");
        }
        if !(self.max_time > 0.0) {
            return bad("max_time must be positive");
        }
        if !(self.mission.replan_period > 0.0) || !(self.mission.discovery_replan_period > 0.0) {
            return bad("replan periods must be positive");
        }
        if !(self.mission.lap_fraction > 0.0 && self.mission.lap_fraction < 1.0) {
            return bad("lap_fraction must lie in (0, 1)");
        }
        if !(self.mission.discovery_speed > 0.0) {
            return bad("discovery_speed must be positive");
        }
        Ok(())
    }

    pub fn mission_config(&self) -> MissionConfig {
        MissionConfig {
            slam_mode: self.slam_mode,
            planner: self.planner,
            controller: self.controller,
            fast_laps: self.laps,
            guidance: crate::guidance::GuidanceConfig {
                wheelbase: self.vehicle.wheelbase,
                max_steer: self.vehicle.max_steer,
                ..self.mission.guidance
            },
            ..self.mission.clone()
        }
    }

    pub fn track_spec(&self, seed: u64) -> TrackSpec {
        TrackSpec { seed, ..self.track }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub configs: Vec<ExperimentConfig>,
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let s: Suite = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.configs {
            c.validate()?;
            if !seen.insert(c.id.as_str()) {
                return Err(ConfigError::DuplicateId(c.id.clone()));
            }
        }
        Ok(())
    }
}

/// SLAM layering (hybrid A*, pure pursuit) followed by the planner x
/// controller grid on grid SLAM.
pub fn default_suite(seeds: &[u64]) -> Suite {
    use Controller::*;
    use PlannerKind::*;
    use SlamMode::*;
    let list = [
        ("raw-astar-pp", LandmarkRaw, HybridAStar, PurePursuit),
        ("fused-astar-pp", LandmarkFused, HybridAStar, PurePursuit),
        ("grid-astar-pp", Grid, HybridAStar, PurePursuit),
        ("grid-astar-rpp", Grid, HybridAStar, Regulated),
        ("grid-mid-pp", Grid, Midline, PurePursuit),
        ("grid-mid-rpp", Grid, Midline, Regulated),
    ];
    Suite {
        configs: list
            .iter()
            .map(|&(id, s, p, c)| ExperimentConfig { seeds: seeds.to_vec(), ..ExperimentConfig::named(id, s, p, c) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_round_trip_and_validation() {
        let s = default_suite(&[0, 1]);
        assert_eq!(Suite::from_json(&s.to_json()).unwrap(), s);
        let mut bad = s.clone();
        bad.configs[1].seeds.clear();
        assert_eq!(bad.validate(), Err(ConfigError::NoSeeds("fused-astar-pp".into())));
        let mut dup = s.clone();
        dup.configs[1].id = dup.configs[0].id.clone();
        assert!(matches!(dup.validate(), Err(ConfigError::DuplicateId(_))));
        let partial = Suite::from_json(r#"{"configs":[{"id":"a","slam_mode":"LandmarkRaw","seeds":[5]}]}"#).unwrap();
        assert_eq!(partial.configs[0].planner, PlannerKind::HybridAStar);
        assert_eq!(partial.configs[0].mission_config().slam_mode, SlamMode::LandmarkRaw);
        assert!(Suite::from_json(r#"{"configs":[{"slam_mode":"Lidar"}]}"#).is_err());
    }
}
