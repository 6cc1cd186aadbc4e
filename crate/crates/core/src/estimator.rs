//! Multi-rate EKF over `[x, y, theta, v, omega, a]`.
//!
//! Constant turn-rate / constant acceleration motion model. GNSS, IMU, wheel
//! speed, steering-derived yaw rate and visual yaw rate are applied as
//! sequential block updates, in that order, with Mahalanobis gating.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose2D};
use crate::sensors::SensorFrame;

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec6 = SVector<f64, 6>;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const ITHETA: usize = 2;
pub const IV: usize = 3;
pub const IOMEGA: usize = 4;
pub const IA: usize = 5;

/// Longest single prediction step; longer gaps are split.
pub const MAX_PREDICT_DT: f64 = 0.1;
const TIME_EPS: f64 = 1e-9;
const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Channels {
    pub gnss: bool,
    pub imu: bool,
    pub wheel: bool,
    pub steer: bool,
    pub vo: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Self { gnss: true, imu: true, wheel: true, steer: true, vo: true }
    }
}

impl Channels {
    pub fn gnss_only() -> Self {
        Self { gnss: true, imu: false, wheel: false, steer: false, vo: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub channels: Channels,
    /// Process noise spectral density per state, per second.
    pub q_diag: [f64; 6],
    /// Innovation Mahalanobis distance above which an update is skipped.
    pub gate: f64,
    pub output_rate_hz: f64,
    pub wheelbase: f64,
    pub gnss_sigma: f64,
    pub imu_heading_sigma: f64,
    pub yaw_rate_sigma: f64,
    pub accel_sigma: f64,
    pub wheel_speed_sigma: f64,
    pub steer_sigma: f64,
    pub vo_yaw_rate_sigma: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            channels: Channels::default(),
            q_diag: [0.01, 0.01, 0.005, 0.1, 10.0, 0.5],
            gate: 5.0,
            output_rate_hz: 50.0,
            wheelbase: 1.55,
            gnss_sigma: 0.25,
            imu_heading_sigma: 0.01,
            yaw_rate_sigma: 0.01,
            accel_sigma: 0.1,
            wheel_speed_sigma: 0.05,
            steer_sigma: 0.005,
            vo_yaw_rate_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionState {
    pub mean: Vec6,
    pub cov: Mat6,
}

impl FusionState {
    pub fn new(mean: Vec6, cov: Mat6) -> Self {
        Self { mean, cov }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.mean[IX], self.mean[IY], self.mean[ITHETA])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementKind {
    GnssXY,
    ImuThetaOmegaA,
    WheelV,
    SteerOmega,
    VoOmega,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 5] = [
        MeasurementKind::GnssXY,
        MeasurementKind::ImuThetaOmegaA,
        MeasurementKind::WheelV,
        MeasurementKind::SteerOmega,
        MeasurementKind::VoOmega,
    ];

    /// State indices observed, in measurement order.
    pub fn observed(self) -> &'static [usize] {
        match self {
            MeasurementKind::GnssXY => &[IX, IY],
            MeasurementKind::ImuThetaOmegaA => &[ITHETA, IOMEGA, IA],
            MeasurementKind::WheelV => &[IV],
            MeasurementKind::SteerOmega | MeasurementKind::VoOmega => &[IOMEGA],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub z: DVector<f64>,
    pub r: DMatrix<f64>,
    pub t: f64,
}

impl Measurement {
    fn diag(kind: MeasurementKind, z: &[f64], sigmas: &[f64], t: f64) -> Self {
        let var: Vec<f64> = sigmas.iter().map(|s| s.max(SIGMA_FLOOR).powi(2)).collect();
        Self { kind, z: DVector::from_column_slice(z), r: DMatrix::from_diagonal(&DVector::from_vec(var)), t }
    }

    pub fn gnss(x: f64, y: f64, sigma: f64, t: f64) -> Self {
        Self::diag(MeasurementKind::GnssXY, &[x, y], &[sigma, sigma], t)
    }

    pub fn imu(theta: f64, omega: f64, a: f64, sigmas: [f64; 3], t: f64) -> Self {
        Self::diag(MeasurementKind::ImuThetaOmegaA, &[theta, omega, a], &sigmas, t)
    }

    pub fn wheel(v: f64, sigma: f64, t: f64) -> Self {
        Self::diag(MeasurementKind::WheelV, &[v], &[sigma], t)
    }

    /// Yaw rate implied by wheel speed and steering angle, `v tan(delta) / L`,
    /// with first-order propagated variance.
    pub fn steer_omega(v: f64, delta: f64, sigma_v: f64, sigma_delta: f64, wheelbase: f64, t: f64) -> Self {
        let omega = v * delta.tan() / wheelbase;
        let dv = delta.tan() / wheelbase;
        let dd = v / (wheelbase * delta.cos().powi(2));
        let var = (dv * sigma_v).powi(2) + (dd * sigma_delta).powi(2) + SIGMA_FLOOR * SIGMA_FLOOR;
        Self {
            kind: MeasurementKind::SteerOmega,
            z: DVector::from_element(1, omega),
            r: DMatrix::from_element(1, 1, var),
            t,
        }
    }

    pub fn vo(omega: f64, sigma: f64, t: f64) -> Self {
        Self::diag(MeasurementKind::VoOmega, &[omega], &[sigma], t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    Gated,
}

/// Noise-free state transition.
pub fn motion_model(m: &Vec6, dt: f64) -> Vec6 {
    let (th, v, w, a) = (m[ITHETA], m[IV], m[IOMEGA], m[IA]);
    Vec6::new(m[IX] + v * th.cos() * dt, m[IY] + v * th.sin() * dt, normalize_angle(th + w * dt), v + a * dt, w, a)
}

/// Analytic Jacobian of [`motion_model`].
pub fn motion_jacobian(m: &Vec6, dt: f64) -> Mat6 {
    let (th, v) = (m[ITHETA], m[IV]);
    let mut f = Mat6::identity();
    f[(IX, ITHETA)] = -v * th.sin() * dt;
    f[(IX, IV)] = th.cos() * dt;
    f[(IY, ITHETA)] = v * th.cos() * dt;
    f[(IY, IV)] = th.sin() * dt;
    f[(ITHETA, IOMEGA)] = dt;
    f[(IV, IA)] = dt;
    f
}

pub fn ekf_predict(s: &FusionState, dt: f64, q_diag: &[f64; 6]) -> FusionState {
    assert!(dt > 0.0 && dt <= MAX_PREDICT_DT + TIME_EPS, "ekf_predict: dt {dt} outside (0, {MAX_PREDICT_DT}]");
    let f = motion_jacobian(&s.mean, dt);
    let q = Mat6::from_diagonal(&Vec6::from_column_slice(q_diag)) * dt;
    let cov = f * s.cov * f.transpose() + q;
    FusionState { mean: motion_model(&s.mean, dt), cov: symmetrize6(&cov) }
}

fn symmetrize6(p: &Mat6) -> Mat6 {
    (p + p.transpose()) * 0.5
}

/// Gated EKF update; the state is returned unchanged when gated.
pub fn ekf_update(s: &FusionState, m: &Measurement, gate: f64) -> (FusionState, UpdateOutcome) {
    let idx = m.kind.observed();
    let dim = idx.len();
    assert_eq!(m.z.len(), dim, "measurement dimension mismatch for {:?}", m.kind);
    let mut h = DMatrix::<f64>::zeros(dim, 6);
    let mut y = DVector::<f64>::zeros(dim);
    for (row, &i) in idx.iter().enumerate() {
        h[(row, i)] = 1.0;
        y[row] = m.z[row] - s.mean[i];
        if i == ITHETA {
            y[row] = normalize_angle(y[row]);
        }
    }
    let p = DMatrix::from_column_slice(6, 6, s.cov.as_slice());
    let pht = &p * h.transpose();
    let innov = &h * &pht + &m.r;
    let Some(s_inv) = innov.clone().try_inverse() else {
        return (*s, UpdateOutcome::Gated);
    };
    let d2 = (y.transpose() * &s_inv * &y)[(0, 0)];
    if !(d2.sqrt() <= gate) {
        return (*s, UpdateOutcome::Gated);
    }
    let k = &pht * &s_inv;
    let dx = &k * &y;
    let mut mean = s.mean;
    for i in 0..6 {
        mean[i] += dx[i];
    }
    mean[ITHETA] = normalize_angle(mean[ITHETA]);
    // Joseph form keeps the covariance symmetric positive semi-definite
    let ikh = DMatrix::<f64>::identity(6, 6) - &k * &h;
    let joseph = &ikh * &p * ikh.transpose() + &k * &m.r * k.transpose();
    let cov = Mat6::from_column_slice(joseph.as_slice());
    (FusionState { mean, cov: symmetrize6(&cov) }, UpdateOutcome::Applied)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryEstimate {
    pub t: f64,
    pub pose: Pose2D,
    pub v: f64,
    pub omega: f64,
    pub cov_xx: f64,
    pub cov_yy: f64,
    pub cov_tt: f64,
}

impl OdometryEstimate {
    fn of(t: f64, s: &FusionState) -> Self {
        Self {
            t,
            pose: s.pose(),
            v: s.mean[IV],
            omega: s.mean[IOMEGA],
            cov_xx: s.cov[(IX, IX)],
            cov_yy: s.cov[(IY, IY)],
            cov_tt: s.cov[(ITHETA, ITHETA)],
        }
    }
}

pub fn odometry_to_csv(est: &[OdometryEstimate]) -> String {
    let mut out = String::from("t,x,y,theta,v,omega,cov_xx,cov_yy,cov_tt\n");
    for e in est {
        let _ = writeln!(
            out,
            "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.8},{:.8},{:.8}",
            e.t, e.pose.x, e.pose.y, e.pose.theta, e.v, e.omega, e.cov_xx, e.cov_yy, e.cov_tt
        );
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("frame at t={t} is not after the previous frame at t={last}")]
    OutOfOrder { t: f64, last: f64 },
}

/// Streaming filter producing odometry on a fixed output grid.
#[derive(Debug, Clone)]
pub struct FusionFilter {
    cfg: FilterConfig,
    state: Option<FusionState>,
    t: f64,
    last_frame_t: Option<f64>,
    next_output: u64,
    heading_hint: f64,
    gated: [u64; 5],
}

impl FusionFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        Self { cfg, state: None, t: 0.0, last_frame_t: None, next_output: 0, heading_hint: 0.0, gated: [0; 5] }
    }

    /// Start from a known state instead of the first GNSS fix.
    pub fn with_initial(cfg: FilterConfig, state: FusionState, t: f64) -> Self {
        let mut f = Self::new(cfg);
        f.state = Some(state);
        f.t = t;
        f.next_output = f.grid_index_at_or_after(t);
        f
    }

    /// Heading used at initialization when the IMU channel is disabled.
    pub fn set_heading_hint(&mut self, theta: f64) {
        self.heading_hint = theta;
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&FusionState> {
        self.state.as_ref()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn gated_count(&self, kind: MeasurementKind) -> u64 {
        self.gated[kind as usize]
    }

    fn grid_time(&self, k: u64) -> f64 {
        k as f64 / self.cfg.output_rate_hz
    }

    fn grid_index_at_or_after(&self, t: f64) -> u64 {
        (t * self.cfg.output_rate_hz - TIME_EPS).ceil().max(0.0) as u64
    }

    fn predict_to(state: &FusionState, from: f64, to: f64, q: &[f64; 6]) -> FusionState {
        let mut s = *state;
        let span = to - from;
        if span <= TIME_EPS {
            return s;
        }
        let steps = (span / MAX_PREDICT_DT).ceil() as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            s = ekf_predict(&s, h, q);
        }
        s
    }

    fn initialize(&mut self, frame: &SensorFrame) -> bool {
        let Some(g) = frame.gnss.filter(|_| self.cfg.channels.gnss) else {
            return false;
        };
        let theta = match frame.imu {
            Some(imu) if self.cfg.channels.imu => imu.theta,
            _ => self.heading_hint,
        };
        let v = frame.wheel_speed.filter(|_| self.cfg.channels.wheel).unwrap_or(0.0);
        let gv = self.cfg.gnss_sigma.max(SIGMA_FLOOR).powi(2);
        let th_var = if self.cfg.channels.imu { 0.01 } else { 0.25 };
        let cov = Mat6::from_diagonal(&Vec6::new(gv, gv, th_var, 1.0, 1.0, 1.0));
        self.state = Some(FusionState::new(Vec6::new(g.x, g.y, theta, v, 0.0, 0.0), cov));
        self.t = frame.t;
        self.next_output = self.grid_index_at_or_after(frame.t);
        true
    }

    fn apply(&mut self, m: Measurement) {
        let s = self.state.expect("initialized");
        let (next, outcome) = ekf_update(&s, &m, self.cfg.gate);
        if outcome == UpdateOutcome::Gated {
            self.gated[m.kind as usize] += 1;
            log::debug!("gated {:?} at t={:.2}", m.kind, m.t);
        }
        self.state = Some(next);
    }

    /// Consume one frame, returning any odometry outputs now due.
    pub fn process(&mut self, frame: &SensorFrame) -> Result<Vec<OdometryEstimate>, EstimatorError> {
        if let Some(last) = self.last_frame_t {
            if frame.t <= last + TIME_EPS {
                return Err(EstimatorError::OutOfOrder { t: frame.t, last });
            }
        }
        self.last_frame_t = Some(frame.t);
        let mut out = Vec::new();
        if self.state.is_none() && !self.initialize(frame) {
            return Ok(out);
        }
        let q = self.cfg.q_diag;
        let state = self.state.expect("initialized");
        // grid points strictly before this frame are filled by prediction copies
        while self.grid_time(self.next_output) < frame.t - TIME_EPS {
            let tg = self.grid_time(self.next_output);
            out.push(OdometryEstimate::of(tg, &Self::predict_to(&state, self.t, tg, &q)));
            self.next_output += 1;
        }
        self.state = Some(Self::predict_to(&state, self.t, frame.t, &q));
        self.t = frame.t;

        let c = self.cfg;
        let ch = c.channels;
        if let (true, Some(g)) = (ch.gnss, frame.gnss) {
            self.apply(Measurement::gnss(g.x, g.y, c.gnss_sigma, frame.t));
        }
        if let (true, Some(imu)) = (ch.imu, frame.imu) {
            self.apply(Measurement::imu(imu.theta, imu.omega, imu.a, [c.imu_heading_sigma, c.yaw_rate_sigma, c.accel_sigma], frame.t));
        }
        if let (true, Some(v)) = (ch.wheel, frame.wheel_speed) {
            self.apply(Measurement::wheel(v, c.wheel_speed_sigma, frame.t));
        }
        if let (true, Some(delta)) = (ch.steer, frame.steer_angle) {
            let (v, sv) = match frame.wheel_speed {
                Some(v) if ch.wheel => (v, c.wheel_speed_sigma),
                _ => {
                    let s = self.state.expect("initialized");
                    (s.mean[IV], s.cov[(IV, IV)].sqrt())
                }
            };
            self.apply(Measurement::steer_omega(v, delta, sv, c.steer_sigma, c.wheelbase, frame.t));
        }
        if let (true, Some(w)) = (ch.vo, frame.vo_yaw_rate) {
            self.apply(Measurement::vo(w, c.vo_yaw_rate_sigma, frame.t));
        }

        if (self.grid_time(self.next_output) - frame.t).abs() <= TIME_EPS {
            out.push(OdometryEstimate::of(self.grid_time(self.next_output), &self.state.expect("initialized")));
            self.next_output += 1;
        }
        Ok(out)
    }
}

/// Run a filter over a whole frame stream.
pub fn fuse_stream(filter: &mut FusionFilter, frames: &[SensorFrame]) -> Result<Vec<OdometryEstimate>, EstimatorError> {
    let mut out = Vec::new();
    for f in frames {
        out.extend(filter.process(f)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::sensors::{sample_sensors, NoiseConfig, SensorConfig, SensorRng, SIM_DT};
    use crate::vehicle::{step_vehicle, ControlCommand, VehicleParams, VehicleState};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q() -> [f64; 6] {
        FilterConfig::default().q_diag
    }

    #[test]
    fn stationary_prediction() {
        let s = FusionState::new(Vec6::new(1.0, 2.0, 0.3, 0.0, 0.0, 0.0), Mat6::identity() * 0.1);
        let p = ekf_predict(&s, 0.02, &q());
        assert_eq!(p.mean, s.mean);
        assert!(p.cov.trace() > s.cov.trace());
    }

    #[test]
    fn straight_prediction() {
        let s = FusionState::new(Vec6::new(0.0, 0.0, 0.0, 8.0, 0.0, 0.0), Mat6::identity());
        let p = ekf_predict(&s, 0.02, &q());
        assert_abs_diff_eq!(p.mean[IX], 0.16, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = Vec6::from_fn(|i, _| match i {
                ITHETA => rng.random_range(-3.0..3.0),
                _ => rng.random_range(-5.0..5.0),
            });
            let dt = rng.random_range(0.005..0.1);
            let f = motion_jacobian(&m, dt);
            for j in 0..6 {
                let h = 1e-6;
                let mut a = m;
                let mut b = m;
                a[j] += h;
                b[j] -= h;
                let (fa, fb) = (motion_model(&a, dt), motion_model(&b, dt));
                for i in 0..6 {
                    let mut diff = fa[i] - fb[i];
                    if i == ITHETA {
                        diff = normalize_angle(diff);
                    }
                    let fd = diff / (2.0 * h);
                    let err = (fd - f[(i, j)]).abs() / f[(i, j)].abs().max(1.0);
                    assert!(err < 1e-4, "F[{i},{j}] {} vs {fd}", f[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let s = FusionState::new(Vec6::new(1.0, 2.0, 0.3, 4.0, 0.1, 0.0), Mat6::identity() * 0.5);
        let (u, o) = ekf_update(&s, &Measurement::gnss(1.0, 2.0, 0.25, 0.0), 5.0);
        assert_eq!(o, UpdateOutcome::Applied);
        assert_abs_diff_eq!((u.mean - s.mean).norm(), 0.0, epsilon = 1e-12);
        assert!(u.cov.trace() < s.cov.trace());
    }

    #[test]
    fn scalar_kalman_closed_form() {
        let mut cov = Mat6::identity();
        cov[(IV, IV)] = 1.0;
        let s = FusionState::new(Vec6::zeros(), cov);
        let (u, _) = ekf_update(&s, &Measurement::wheel(1.0, 1.0, 0.0), 5.0);
        // prior N(0,1), z=1 with R=1: K=1/2
        assert_abs_diff_eq!(u.mean[IV], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(u.cov[(IV, IV)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uninformative_gnss() {
        let s = FusionState::new(Vec6::zeros(), Mat6::identity());
        let (u, _) = ekf_update(&s, &Measurement::gnss(1.0, 1.0, 1e6, 0.0), 5.0);
        assert!((u.mean[IX]).abs() < 1e-6 && (u.mean[IY]).abs() < 1e-6);
    }

    #[test]
    fn gate_rejects_outliers() {
        let s = FusionState::new(Vec6::zeros(), Mat6::identity() * 0.01);
        let (u, o) = ekf_update(&s, &Measurement::gnss(10.0, 0.0, 0.25, 0.0), 5.0);
        assert_eq!(o, UpdateOutcome::Gated);
        assert_eq!(u, s);
    }

    #[test]
    fn steer_omega_value() {
        let m = Measurement::steer_omega(5.0, 0.2, 0.05, 0.005, 1.55, 0.0);
        assert_abs_diff_eq!(m.z[0], 5.0 * 0.2f64.tan() / 1.55, epsilon = 1e-12);
        assert!(m.r[(0, 0)] > 0.0);
    }

    fn is_psd(p: &Mat6) -> bool {
        let sym = (p - p.transpose()).abs().max() < 1e-9;
        let eig = p.symmetric_eigen().eigenvalues.min();
        sym && eig > -1e-9
    }

    #[test]
    fn covariance_stays_psd_over_randomized_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = FusionState::new(Vec6::zeros(), Mat6::identity());
        for step in 0..10_000 {
            s = ekf_predict(&s, rng.random_range(0.001..0.1), &q());
            assert!(is_psd(&s.cov), "predict step {step}");
            let m = match rng.random_range(0..5) {
                0 => Measurement::gnss(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.25, 0.0),
                1 => Measurement::imu(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), 0.0, [0.01, 0.01, 0.1], 0.0),
                2 => Measurement::wheel(rng.random_range(0.0..10.0), 0.05, 0.0),
                3 => Measurement::steer_omega(rng.random_range(0.0..10.0), rng.random_range(-0.4..0.4), 0.05, 0.005, 1.55, 0.0),
                _ => Measurement::vo(rng.random_range(-1.0..1.0), 0.02, 0.0),
            };
            let tr = s.cov.trace();
            let (u, o) = ekf_update(&s, &m, 1e9);
            assert_eq!(o, UpdateOutcome::Applied);
            assert!(u.cov.trace() <= tr + 1e-12);
            s = u;
            assert!(is_psd(&s.cov), "update step {step}");
        }
    }

    fn straight_frames(noise: NoiseConfig, seconds: f64) -> (Vec<SensorFrame>, Vec<VehicleState>) {
        let params = VehicleParams::default();
        let mut rng = SensorRng::new(2);
        let mut state = VehicleState { v: 8.0, ..Default::default() };
        let cmd = ControlCommand { steer: 0.0, target_speed: 8.0 };
        let mut frames = Vec::new();
        let mut truths = Vec::new();
        for k in 0..(seconds * 100.0) as u64 {
            frames.push(sample_sensors(&state, &[], k, &noise, &SensorConfig::default(), &mut rng));
            truths.push(state);
            state = step_vehicle(&state, &cmd, SIM_DT, &params);
        }
        (frames, truths)
    }

    #[test]
    fn noise_free_straight_run() {
        let (frames, truths) = straight_frames(NoiseConfig::zero(), 5.0);
        let mut f = FusionFilter::new(FilterConfig::default());
        let out = fuse_stream(&mut f, &frames).unwrap();
        assert_eq!(out.len(), 250);
        let mse: f64 = out
            .iter()
            .map(|e| {
                let k = (e.t * 100.0).round() as usize;
                let p = truths[k].pose.position();
                e.pose.position().distance(p).powi(2)
            })
            .sum::<f64>()
            / out.len() as f64;
        assert!(mse.sqrt() < 1e-3, "rmse {}", mse.sqrt());
    }

    #[test]
    fn gnss_only_still_outputs_50hz() {
        let (frames, _) = straight_frames(NoiseConfig::default(), 2.0);
        let gnss: Vec<SensorFrame> = frames.into_iter().filter(|f| f.gnss.is_some()).collect();
        let mut f = FusionFilter::new(FilterConfig { channels: Channels::gnss_only(), ..Default::default() });
        let out = fuse_stream(&mut f, &gnss).unwrap();
        // last gnss at t=1.8
        assert_eq!(out.len(), 91);
        for w in out.windows(2) {
            assert_abs_diff_eq!(w[1].t - w[0].t, 0.02, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_and_out_of_order_streams() {
        let mut f = FusionFilter::new(FilterConfig::default());
        assert!(fuse_stream(&mut f, &[]).unwrap().is_empty());
        let a = SensorFrame { t: 0.1, gnss: Some(Vec2::ZERO), ..Default::default() };
        let b = SensorFrame { t: 0.05, gnss: Some(Vec2::ZERO), ..Default::default() };
        let err = fuse_stream(&mut f, &[a, b]).unwrap_err();
        assert_eq!(err, EstimatorError::OutOfOrder { t: 0.05, last: 0.1 });
    }
}
