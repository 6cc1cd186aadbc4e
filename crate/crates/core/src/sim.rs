//! Closed-loop simulation clock: plant, sensors and the ground-truth log.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::sensors::{sample_sensors, tick_time, NoiseConfig, SensorConfig, SensorFrame, SensorRng, SIM_DT};
use crate::track::{Track, TrackError};
use crate::vehicle::{step_vehicle, ControlCommand, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl TrajectorySample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn of(t: f64, s: &VehicleState) -> Self {
        Self { t, x: s.pose.x, y: s.pose.y, theta: s.pose.theta, v: s.v, omega: s.omega }
    }
}

pub fn trajectory_to_csv(samples: &[TrajectorySample]) -> String {
    let mut out = String::from("t,x,y,theta,v,omega\n");
    for s in samples {
        let _ = writeln!(out, "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6}", s.t, s.x, s.y, s.theta, s.v, s.omega);
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<Vec<TrajectorySample>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[derive(Debug, Clone)]
pub struct Simulator {
    track: Track,
    state: VehicleState,
    params: VehicleParams,
    noise: NoiseConfig,
    sensors: SensorConfig,
    rng: SensorRng,
    tick: u64,
    log: Vec<TrajectorySample>,
}

impl Simulator {
    /// Vehicle starts at rest on the staging pose behind the start line.
    pub fn new(track: Track, params: VehicleParams, noise: NoiseConfig, sensors: SensorConfig, seed: u64) -> Self {
        let state = VehicleState::at_rest(track.staging_pose());
        Self::with_state(track, state, params, noise, sensors, seed)
    }

    pub fn with_state(
        track: Track,
        state: VehicleState,
        params: VehicleParams,
        noise: NoiseConfig,
        sensors: SensorConfig,
        seed: u64,
    ) -> Self {
        let log = vec![TrajectorySample::of(0.0, &state)];
        Self { track, state, params, noise, sensors, rng: SensorRng::new(seed), tick: 0, log }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        tick_time(self.tick)
    }

    pub fn truth(&self) -> &VehicleState {
        &self.state
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn log(&self) -> &[TrajectorySample] {
        &self.log
    }

    pub fn into_log(self) -> Vec<TrajectorySample> {
        self.log
    }

    /// Sensor frame for the current tick. Call once per tick.
    pub fn sense(&mut self) -> SensorFrame {
        sample_sensors(&self.state, &self.track.cones, self.tick, &self.noise, &self.sensors, &mut self.rng)
    }

    /// Apply `cmd` for one simulation tick.
    pub fn advance(&mut self, cmd: &ControlCommand) {
        self.state = step_vehicle(&self.state, cmd, SIM_DT, &self.params);
        self.tick += 1;
        self.log.push(TrajectorySample::of(self.time(), &self.state));
    }

    /// Knock a cone out of place; later frames see it at the new position.
    pub fn displace_cone(&mut self, index: usize, delta: Vec2) -> Result<(), TrackError> {
        self.track = self.track.displace_cone(index, delta)?;
        Ok(())
    }
}
