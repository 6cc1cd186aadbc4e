//! Multi-rate noisy sensor models.
//!
//! Every channel owns its own random stream and consumes a fixed number of
//! draws per scheduled sample, whatever the vehicle sees. Two runs on the same
//! seed therefore share noise realizations even when their trajectories differ.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cone::{Cone, ConeColor};
use crate::geometry::{normalize_angle, Vec2};
use crate::vehicle::VehicleState;

pub const SIM_RATE_HZ: u64 = 100;
pub const SIM_DT: f64 = 1.0 / SIM_RATE_HZ as f64;
pub const GNSS_DIVISOR: u64 = 20;
pub const PERCEPTION_DIVISOR: u64 = 10;
pub const VO_RATE_HZ: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub gnss_sigma: f64,
    pub imu_heading_sigma: f64,
    pub yaw_rate_sigma: f64,
    pub accel_sigma: f64,
    pub wheel_speed_sigma: f64,
    pub steer_sigma: f64,
    pub lidar_range_sigma: f64,
    pub detection_range_sigma: f64,
    pub bearing_sigma: f64,
    pub p_color: f64,
    pub vo_yaw_rate_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gnss_sigma: 0.25,
            imu_heading_sigma: 0.01,
            yaw_rate_sigma: 0.01,
            accel_sigma: 0.1,
            wheel_speed_sigma: 0.05,
            steer_sigma: 0.0,
            lidar_range_sigma: 0.02,
            detection_range_sigma: 0.05,
            bearing_sigma: 0.01,
            p_color: 0.02,
            vo_yaw_rate_sigma: 0.02,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            gnss_sigma: 0.0,
            imu_heading_sigma: 0.0,
            yaw_rate_sigma: 0.0,
            accel_sigma: 0.0,
            wheel_speed_sigma: 0.0,
            steer_sigma: 0.0,
            lidar_range_sigma: 0.0,
            detection_range_sigma: 0.0,
            bearing_sigma: 0.0,
            p_color: 0.0,
            vo_yaw_rate_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub lidar_max_range: f64,
    pub lidar_increment: f64,
    pub cone_radius: f64,
    pub detector_range: f64,
    pub vo_enabled: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar_max_range: 20.0,
            lidar_increment: PI / 360.0,
            cone_radius: 0.1,
            detector_range: 10.0,
            vo_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub theta: f64,
    pub omega: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeDetection {
    pub range: f64,
    pub bearing: f64,
    pub color: ConeColor,
}

impl ConeDetection {
    /// Detection position in the sensor frame.
    pub fn local_position(&self) -> Vec2 {
        Vec2::from_polar(self.range, self.bearing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}

impl LaserScan {
    pub fn angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }

    pub fn is_return(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range
    }

    /// Endpoints of all real returns in the sensor frame.
    pub fn points(&self) -> Vec<Vec2> {
        (0..self.ranges.len()).filter(|&i| self.is_return(i)).map(|i| Vec2::from_polar(self.ranges[i], self.angle(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t: f64,
    pub tick: u64,
    pub gnss: Option<Vec2>,
    pub imu: Option<ImuReading>,
    pub wheel_speed: Option<f64>,
    pub steer_angle: Option<f64>,
    pub scan: Option<LaserScan>,
    pub cone_detections: Option<Vec<ConeDetection>>,
    pub vo_yaw_rate: Option<f64>,
}

impl SensorFrame {
    pub fn is_empty(&self) -> bool {
        self.gnss.is_none()
            && self.imu.is_none()
            && self.wheel_speed.is_none()
            && self.steer_angle.is_none()
            && self.scan.is_none()
            && self.cone_detections.is_none()
            && self.vo_yaw_rate.is_none()
    }
}

/// Which channels are due at a simulation tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub gnss: bool,
    pub perception: bool,
    pub vo: bool,
}

pub fn schedule(tick: u64) -> Schedule {
    let vo = tick == 0 || (VO_RATE_HZ * tick) / SIM_RATE_HZ != (VO_RATE_HZ * (tick - 1)) / SIM_RATE_HZ;
    Schedule { gnss: tick % GNSS_DIVISOR == 0, perception: tick % PERCEPTION_DIVISOR == 0, vo }
}

pub fn tick_time(tick: u64) -> f64 {
    tick as f64 / SIM_RATE_HZ as f64
}

/// Independent per-channel random streams.
#[derive(Debug, Clone)]
pub struct SensorRng {
    gnss: ChaCha8Rng,
    imu: ChaCha8Rng,
    odom: ChaCha8Rng,
    lidar: ChaCha8Rng,
    detector: ChaCha8Rng,
    vo: ChaCha8Rng,
}

impl SensorRng {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(100 + s);
            r
        };
        Self { gnss: stream(0), imu: stream(1), odom: stream(2), lidar: stream(3), detector: stream(4), vo: stream(5) }
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    n * sigma
}

/// Sample every channel due at `tick` from the true state.
pub fn sample_sensors(
    truth: &VehicleState,
    cones: &[Cone],
    tick: u64,
    noise: &NoiseConfig,
    cfg: &SensorConfig,
    rng: &mut SensorRng,
) -> SensorFrame {
    let due = schedule(tick);
    let mut frame = SensorFrame { t: tick_time(tick), tick, ..Default::default() };
    let pose = truth.pose;

    let ng = gauss(&mut rng.imu, noise.imu_heading_sigma);
    let omega_n = gauss(&mut rng.imu, noise.yaw_rate_sigma);
    let accel_n = gauss(&mut rng.imu, noise.accel_sigma);
    frame.imu = Some(ImuReading {
        theta: normalize_angle(pose.theta + ng),
        omega: truth.omega + omega_n,
        a: truth.a + accel_n,
    });
    frame.wheel_speed = Some(truth.v + gauss(&mut rng.odom, noise.wheel_speed_sigma));
    frame.steer_angle = Some(truth.steer + gauss(&mut rng.odom, noise.steer_sigma));

    if due.gnss {
        let nx = gauss(&mut rng.gnss, noise.gnss_sigma);
        let ny = gauss(&mut rng.gnss, noise.gnss_sigma);
        frame.gnss = Some(Vec2::new(pose.x + nx, pose.y + ny));
    }
    if due.vo && cfg.vo_enabled {
        frame.vo_yaw_rate = Some(truth.omega + gauss(&mut rng.vo, noise.vo_yaw_rate_sigma));
    }
    if due.perception {
        frame.scan = Some(render_scan(truth, cones, noise, cfg, &mut rng.lidar));
        frame.cone_detections = Some(detect_cones(truth, cones, noise, cfg, &mut rng.detector));
    }
    frame
}

fn detect_cones(
    truth: &VehicleState,
    cones: &[Cone],
    noise: &NoiseConfig,
    cfg: &SensorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<ConeDetection> {
    let mut out = Vec::new();
    for cone in cones {
        // fixed draw count per cone keeps the stream aligned across runs
        let nr = gauss(rng, noise.detection_range_sigma);
        let nb = gauss(rng, noise.bearing_sigma);
        let u: f64 = rng.random();
        let local = truth.pose.inverse_transform_point(cone.position());
        let range = local.norm();
        let bearing = local.angle();
        if range > cfg.detector_range || bearing.abs() > FRAC_PI_2 {
            continue;
        }
        let color = if u < noise.p_color {
            let others: Vec<ConeColor> = ConeColor::ALL.into_iter().filter(|c| *c != cone.color).collect();
            if u < 0.5 * noise.p_color {
                others[0]
            } else {
                others[1]
            }
        } else {
            cone.color
        };
        out.push(ConeDetection { range: (range + nr).max(0.0), bearing: normalize_angle(bearing + nb), color });
    }
    out
}

/// Distance along a unit ray from `o` to the first hit on a circle, if any.
pub fn ray_circle(o: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = o - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > 0.0 {
        return Some(t0);
    }
    let t1 = -b + sq;
    (t1 > 0.0).then_some(t1)
}

pub fn scan_ray_count(cfg: &SensorConfig) -> usize {
    (PI / cfg.lidar_increment).round() as usize + 1
}

/// Ray-cast a 180° scan against cylindrical cones.
pub fn render_scan(
    truth: &VehicleState,
    cones: &[Cone],
    noise: &NoiseConfig,
    cfg: &SensorConfig,
    rng: &mut ChaCha8Rng,
) -> LaserScan {
    let pose = truth.pose;
    let o = pose.position();
    let reach = cfg.lidar_max_range + cfg.cone_radius;
    let candidates: Vec<Vec2> = cones
        .iter()
        .map(Cone::position)
        .filter(|&c| {
            let local = pose.inverse_transform_point(c);
            local.x > -cfg.cone_radius && local.norm() < reach
        })
        .collect();
    let n = scan_ray_count(cfg);
    let increment = PI / (n - 1) as f64;
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let noise_draw = gauss(rng, noise.lidar_range_sigma);
        let dir = Vec2::from_polar(1.0, pose.theta - FRAC_PI_2 + i as f64 * increment);
        let hit = candidates
            .iter()
            .filter_map(|&c| ray_circle(o, dir, c, cfg.cone_radius))
            .fold(f64::INFINITY, f64::min);
        let r = if hit < cfg.lidar_max_range {
            (hit + noise_draw).clamp(1e-3, cfg.lidar_max_range - 1e-6)
        } else {
            cfg.lidar_max_range
        };
        ranges.push(r);
    }
    LaserScan {
        angle_min: -FRAC_PI_2,
        angle_max: FRAC_PI_2,
        angle_increment: increment,
        max_range: cfg.lidar_max_range,
        ranges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use approx::assert_abs_diff_eq;

    fn zero_frame(truth: &VehicleState, cones: &[Cone], tick: u64) -> SensorFrame {
        sample_sensors(truth, cones, tick, &NoiseConfig::zero(), &SensorConfig::default(), &mut SensorRng::new(1))
    }

    #[test]
    fn cone_dead_ahead_noise_free() {
        let truth = VehicleState::at_rest(Pose2D::new(1.0, 2.0, 0.3));
        let cone = Cone::at(truth.pose.transform_point(Vec2::new(5.0, 0.0)), ConeColor::Yellow);
        let f = zero_frame(&truth, &[cone], 0);
        let det = f.cone_detections.unwrap();
        assert_eq!(det.len(), 1);
        assert_abs_diff_eq!(det[0].range, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(det[0].bearing, 0.0, epsilon = 1e-12);
        assert_eq!(det[0].color, ConeColor::Yellow);
        // the scan hits the near face of the cylinder
        let scan = f.scan.unwrap();
        assert_abs_diff_eq!(scan.ranges[180], 4.9, epsilon = 1e-9);
    }

    #[test]
    fn channel_schedule() {
        let truth = VehicleState::default();
        let f = zero_frame(&truth, &[], 10);
        assert_abs_diff_eq!(f.t, 0.10);
        assert!(f.imu.is_some() && f.wheel_speed.is_some());
        assert!(f.gnss.is_none());
        assert!(zero_frame(&truth, &[], 20).gnss.is_some());
        let vo_ticks = (0..100).filter(|&k| schedule(k).vo).count();
        assert_eq!(vo_ticks, 15);
        let gnss_ticks = (0..100).filter(|&k| schedule(k).gnss).count();
        assert_eq!(gnss_ticks, 5);
    }

    #[test]
    fn outside_fov_absent() {
        let truth = VehicleState::default();
        let cone = Cone::at(Vec2::from_polar(5.0, 120f64.to_radians()), ConeColor::Blue);
        let f = zero_frame(&truth, &[cone], 0);
        assert!(f.cone_detections.unwrap().is_empty());
        let scan = f.scan.unwrap();
        assert!(scan.ranges.iter().all(|&r| r == scan.max_range));
    }

    #[test]
    fn zero_noise_matches_truth() {
        let truth = VehicleState { pose: Pose2D::new(3.0, 4.0, -1.0), v: 5.0, omega: 0.3, a: 0.2, steer: 0.1 };
        let f = zero_frame(&truth, &[], 0);
        assert_eq!(f.gnss.unwrap(), Vec2::new(3.0, 4.0));
        let imu = f.imu.unwrap();
        assert_eq!((imu.theta, imu.omega, imu.a), (-1.0, 0.3, 0.2));
        assert_eq!(f.wheel_speed, Some(5.0));
        assert_eq!(f.steer_angle, Some(0.1));
    }

    #[test]
    fn occluded_cone_not_reported_by_lidar() {
        let truth = VehicleState::default();
        let cones = [Cone::new(4.0, 0.0, ConeColor::Blue), Cone::new(8.0, 0.0, ConeColor::Blue)];
        let scan = zero_frame(&truth, &cones, 0).scan.unwrap();
        for (i, &r) in scan.ranges.iter().enumerate() {
            if r < scan.max_range {
                assert!(r < 4.2, "ray {i} saw the hidden cone at {r}");
            }
        }
    }

    #[test]
    fn shared_noise_across_trajectories() {
        let cones = [Cone::new(4.0, 0.0, ConeColor::Blue)];
        let noise = NoiseConfig::default();
        let cfg = SensorConfig::default();
        let mut a = SensorRng::new(9);
        let mut b = SensorRng::new(9);
        let ta = VehicleState::default();
        let tb = VehicleState::at_rest(Pose2D::new(50.0, 0.0, 1.0));
        for k in 0..30 {
            let fa = sample_sensors(&ta, &cones, k, &noise, &cfg, &mut a);
            let fb = sample_sensors(&tb, &cones, k, &noise, &cfg, &mut b);
            assert_abs_diff_eq!(fa.wheel_speed.unwrap(), fb.wheel_speed.unwrap());
            if let (Some(ga), Some(gb)) = (fa.gnss, fb.gnss) {
                assert_abs_diff_eq!((ga - ta.pose.position()).x, (gb - tb.pose.position()).x, epsilon = 1e-12);
            }
        }
    }
}
