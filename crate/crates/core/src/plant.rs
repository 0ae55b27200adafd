//! Reaction wheels, magnetorquers and sensors.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{magnetic_torque, Vec3};
use crate::environment::EpisodeScenario;

/// Maximum commandable magnetorquer dipole per axis, A·m².
pub const MT_MAX_DIPOLE: f64 = 0.35;

const RPM_TO_RAD_S: f64 = 2.0 * PI / 60.0;

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * RPM_TO_RAD_S
}

pub fn rad_s_to_rpm(w: f64) -> f64 {
    w / RPM_TO_RAD_S
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid wheel model: {0}")]
    InvalidWheel(String),
    #[error("invalid sensor noise parameters: {0}")]
    InvalidNoise(String),
}

/// Reaction-wheel model including the observed in-orbit anomalies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwModel {
    /// kg·m²
    pub wheel_inertia: f64,
    /// rpm
    pub max_speed: f64,
    /// Nm
    pub min_torque: f64,
    /// Nm
    pub max_torque: f64,
    /// Half-width of the low-speed region with unreliable sensing and response, rpm.
    pub deadband: f64,
    /// Upper bound of the power-on dead time, s.
    pub dead_time_max: f64,
    /// rpm
    pub jump_magnitude: f64,
    pub jump_probability_per_step: f64,
    /// Rate (1/s) at which command-ignore windows start inside the deadband.
    pub unresponsive_rate: f64,
    /// Window length range, s.
    pub unresponsive_duration: [f64; 2],
}

impl Default for RwModel {
    fn default() -> Self {
        Self {
            wheel_inertia: 5.68e-5,
            max_speed: 16_400.0,
            min_torque: 1.5e-5,
            max_torque: 2e-3,
            deadband: 350.0,
            dead_time_max: 20.0,
            jump_magnitude: 185.0,
            jump_probability_per_step: 0.02,
            unresponsive_rate: 0.05,
            unresponsive_duration: [1.0, 10.0],
        }
    }
}

impl RwModel {
    /// Nominal wheel without dead time, jumps or unresponsive windows.
    pub fn ideal() -> Self {
        Self {
            dead_time_max: 0.0,
            jump_probability_per_step: 0.0,
            unresponsive_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidWheel(m.to_string()));
        if !(self.wheel_inertia > 0.0) {
            return bad("wheel_inertia must be positive");
        }
        if !(0.0 < self.min_torque && self.min_torque < self.max_torque) {
            return bad("need 0 < min_torque < max_torque");
        }
        if !(self.max_speed > 0.0) || !(self.deadband >= 0.0) || !(self.dead_time_max >= 0.0) {
            return bad("max_speed must be positive; deadband and dead_time_max nonnegative");
        }
        if !(0.0..=1.0).contains(&self.jump_probability_per_step) {
            return bad("jump_probability_per_step must be in [0, 1]");
        }
        if !(self.unresponsive_rate >= 0.0) || !(self.jump_magnitude >= 0.0) {
            return bad("unresponsive_rate and jump_magnitude must be nonnegative");
        }
        let [lo, hi] = self.unresponsive_duration;
        if !(0.0 <= lo && lo <= hi) {
            return bad("unresponsive_duration must be an ordered nonnegative interval");
        }
        Ok(())
    }

    /// Wheel acceleration (rpm/s) produced by a rotor torque (Nm).
    pub fn nm_to_rpm_per_s(&self, tau: f64) -> f64 {
        rad_s_to_rpm(tau / self.wheel_inertia)
    }

    pub fn rpm_per_s_to_nm(&self, accel: f64) -> f64 {
        rpm_to_rad_s(accel) * self.wheel_inertia
    }

    /// Total wheel angular momentum in the body frame, N·m·s.
    pub fn momentum(&self, speeds_rpm: Vec3) -> Vec3 {
        speeds_rpm.map(|s| rpm_to_rad_s(s) * self.wheel_inertia)
    }

    /// Draws a power-on dead time per wheel.
    pub fn draw_dead_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let mut d = || {
            let u: f64 = rng.random();
            u * self.dead_time_max
        };
        Vec3::new(d(), d(), d())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorState {
    /// rpm
    pub rw_true_speed: Vec3,
    /// rpm, as reported by the wheel electronics
    pub rw_measured_speed: Vec3,
    /// Commands are ignored while t < this, s.
    pub rw_dead_until: Vec3,
    /// End of the current command-ignore window, s.
    pub rw_unresponsive_until: Vec3,
    /// A·m²
    pub mt_dipole_cmd: Vec3,
}

impl ActuatorState {
    pub fn at_rest(speeds_rpm: Vec3, dead_until: Vec3) -> Self {
        Self {
            rw_true_speed: speeds_rpm,
            rw_measured_speed: speeds_rpm,
            rw_dead_until: dead_until,
            ..Default::default()
        }
    }
}

fn deliver_axis<R: Rng + ?Sized>(
    model: &RwModel,
    speed: f64,
    dead_until: f64,
    unresponsive_until: &mut f64,
    cmd: f64,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> f64 {
    // Both draws happen every call so the random stream does not depend on the command.
    let u_start: f64 = rng.random();
    let u_len: f64 = rng.random();
    if t < dead_until || t < *unresponsive_until {
        return 0.0;
    }
    if speed.abs() < model.deadband && u_start < model.unresponsive_rate * dt {
        let [lo, hi] = model.unresponsive_duration;
        *unresponsive_until = t + lo + (hi - lo) * u_len;
        return 0.0;
    }
    if cmd.abs() < model.min_torque {
        return 0.0;
    }
    let tau = cmd.clamp(-model.max_torque, model.max_torque);
    let next = speed + model.nm_to_rpm_per_s(tau) * dt;
    if next.abs() <= model.max_speed {
        return tau;
    }
    let limit = model.max_speed.copysign(tau);
    let room = limit - speed;
    if room * tau <= 0.0 {
        return 0.0;
    }
    model.rpm_per_s_to_nm(room / dt)
}

/// Applies a rotor torque command for `dt` seconds starting at time `t`.
///
/// Returns the new state and the delivered rotor torque. The body receives the
/// opposite torque.
pub fn apply_rw_command<R: Rng + ?Sized>(
    state: &ActuatorState,
    model: &RwModel,
    torque_cmd: Vec3,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> (ActuatorState, Vec3) {
    let mut next = *state;
    let mut delivered = [0.0; 3];
    let mut unresp = state.rw_unresponsive_until.to_array();
    for k in 0..3 {
        delivered[k] = deliver_axis(
            model,
            state.rw_true_speed[k],
            state.rw_dead_until[k],
            &mut unresp[k],
            torque_cmd[k],
            t,
            dt,
            rng,
        );
    }
    let delivered = Vec3::from_array(delivered);
    next.rw_unresponsive_until = Vec3::from_array(unresp);
    next.rw_true_speed = state.rw_true_speed + delivered.map(|tau| model.nm_to_rpm_per_s(tau) * dt);
    next.rw_true_speed = next
        .rw_true_speed
        .map(|s| s.clamp(-model.max_speed, model.max_speed));
    (next, delivered)
}

/// Wheel speed as reported by telemetry; the true speed is never altered.
pub fn measure_rw_speed<R: Rng + ?Sized>(state: &ActuatorState, model: &RwModel, rng: &mut R) -> Vec3 {
    state.rw_true_speed.map(|s| {
        let u_fire: f64 = rng.random();
        let up: bool = rng.random();
        if s.abs() <= model.deadband && u_fire < model.jump_probability_per_step {
            s + if up { model.jump_magnitude } else { -model.jump_magnitude }
        } else {
            s
        }
    })
}

pub fn clip_dipole(cmd: Vec3) -> Vec3 {
    cmd.map(|m| m.clamp(-MT_MAX_DIPOLE, MT_MAX_DIPOLE))
}

/// Magnetorquer torque for a dipole command, clipped to the coil limit.
pub fn apply_mt_command(dipole_cmd: Vec3, b_body: Vec3) -> Vec3 {
    magnetic_torque(clip_dipole(dipole_cmd), b_body)
}

/// Torque from the uncompensated part of the residual dipole.
pub fn residual_dipole_torque(scenario: &EpisodeScenario, b_body: Vec3) -> Vec3 {
    magnetic_torque(scenario.residual_mu.hadamard(scenario.comp_error), b_body)
}

/// Gaussian bias and white-noise levels of gyro and magnetometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoiseParams {
    /// rad/s
    pub gyro_sigma_b: Vec3,
    /// rad/s
    pub gyro_sigma_n: Vec3,
    /// µT
    pub mag_sigma_b: Vec3,
    /// µT
    pub mag_sigma_n: Vec3,
    pub scale: f64,
}

impl SensorNoiseParams {
    pub const FLIGHT_SCALE: f64 = 1.2;

    /// Thermal-vacuum measurements; the effective values after scaling are
    /// the ones used in simulation.
    pub fn flight() -> Self {
        let s = Self::FLIGHT_SCALE;
        Self {
            gyro_sigma_b: Vec3::new(2.008e-2, 1.419e-2, 9.774e-2) / s,
            gyro_sigma_n: Vec3::new(1.381e-2, 1.121e-2, 1.056e-2) / s,
            mag_sigma_b: Vec3::new(5.477e-2, 8.479e-2, 7.578e-2) / s,
            mag_sigma_n: Vec3::new(8.655e-3, 9.074e-3, 1.134e-2) / s,
            scale: s,
        }
    }

    pub fn zero() -> Self {
        Self {
            gyro_sigma_b: Vec3::ZERO,
            gyro_sigma_n: Vec3::ZERO,
            mag_sigma_b: Vec3::ZERO,
            mag_sigma_n: Vec3::ZERO,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let all = [self.gyro_sigma_b, self.gyro_sigma_n, self.mag_sigma_b, self.mag_sigma_n];
        if all.iter().any(|v| !v.is_finite() || v.iter().any(|s| s < 0.0)) {
            return Err(PlantError::InvalidNoise("all sigmas must be finite and nonnegative".into()));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(PlantError::InvalidNoise("scale must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn effective_gyro_b(&self) -> Vec3 {
        self.gyro_sigma_b * self.scale
    }

    pub fn effective_gyro_n(&self) -> Vec3 {
        self.gyro_sigma_n * self.scale
    }

    pub fn effective_mag_b(&self) -> Vec3 {
        self.mag_sigma_b * self.scale
    }

    pub fn effective_mag_n(&self) -> Vec3 {
        self.mag_sigma_n * self.scale
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: Vec3) -> Vec3 {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    Vec3::new(sigma.x * g(), sigma.y * g(), sigma.z * g())
}

/// Per-episode sensor biases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorBias {
    /// rad/s
    pub gyro: Vec3,
    /// µT
    pub mag: Vec3,
}

impl SensorBias {
    pub fn sample<R: Rng + ?Sized>(params: &SensorNoiseParams, rng: &mut R) -> Self {
        Self {
            gyro: gaussian3(rng, params.effective_gyro_b()),
            mag: gaussian3(rng, params.effective_mag_b()),
        }
    }
}

/// One gyro (rad/s) and magnetometer (µT) sample.
pub fn sense<R: Rng + ?Sized>(
    omega_true: Vec3,
    b_true_body: Vec3,
    bias: &SensorBias,
    params: &SensorNoiseParams,
    rng: &mut R,
) -> (Vec3, Vec3) {
    let gyro = omega_true + bias.gyro + gaussian3(rng, params.effective_gyro_n());
    let mag = b_true_body * 1e6 + bias.mag + gaussian3(rng, params.effective_mag_n());
    (gyro, mag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_scenario, RandomizationSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn torque_rpm_conversion() {
        let m = RwModel::default();
        assert!((m.nm_to_rpm_per_s(2e-3) - 336.24).abs() < 0.01);
        assert!((m.rpm_per_s_to_nm(m.nm_to_rpm_per_s(1.234e-3)) - 1.234e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_command_is_noop() {
        let m = RwModel::default();
        let s = ActuatorState::at_rest(Vec3::new(10.0, -20.0, 3000.0), Vec3::ZERO);
        let (n, d) = apply_rw_command(&s, &m, Vec3::ZERO, 100.0, 0.1, &mut rng());
        assert_eq!(d, Vec3::ZERO);
        assert_eq!(n.rw_true_speed, s.rw_true_speed);
    }

    #[test]
    fn below_min_torque_delivers_nothing() {
        let m = RwModel::ideal();
        let s = ActuatorState::at_rest(Vec3::splat(1000.0), Vec3::ZERO);
        let (_, d) = apply_rw_command(&s, &m, Vec3::new(1e-5, -1.49e-5, 1.5e-5), 0.0, 0.1, &mut rng());
        assert_eq!(d, Vec3::new(0.0, 0.0, 1.5e-5));
    }

    #[test]
    fn dead_time_then_ramp() {
        let m = RwModel::ideal();
        let mut s = ActuatorState::at_rest(Vec3::ZERO, Vec3::new(12.0, 0.0, 0.0));
        let mut r = rng();
        let dt = 0.1;
        for k in 0..200 {
            let t = k as f64 * dt;
            let (n, d) = apply_rw_command(&s, &m, Vec3::new(2e-3, 0.0, 0.0), t, dt, &mut r);
            if t < 12.0 - 1e-9 {
                assert_eq!(d.x, 0.0);
                assert_eq!(n.rw_true_speed.x, 0.0);
            } else {
                assert_eq!(d.x, 2e-3);
            }
            s = n;
        }
        // 8 s of ramp at ≈336.2 rpm/s
        assert!((s.rw_true_speed.x - 8.0 * 336.24).abs() < 0.1);
    }

    #[test]
    fn saturation_delivers_partial_then_zero() {
        let m = RwModel::ideal();
        let s = ActuatorState::at_rest(Vec3::new(16_390.0, 0.0, 0.0), Vec3::ZERO);
        let (n, d) = apply_rw_command(&s, &m, Vec3::new(2e-3, 0.0, 0.0), 0.0, 0.1, &mut rng());
        assert!(d.x > 0.0 && d.x < 2e-3);
        assert!((n.rw_true_speed.x - 16_400.0).abs() < 1e-9);
        let (n2, d2) = apply_rw_command(&n, &m, Vec3::new(2e-3, 0.0, 0.0), 0.1, 0.1, &mut rng());
        assert_eq!(d2.x, 0.0);
        assert_eq!(n2.rw_true_speed.x, n.rw_true_speed.x);
        // braking is still allowed
        let (_, d3) = apply_rw_command(&n, &m, Vec3::new(-2e-3, 0.0, 0.0), 0.1, 0.1, &mut rng());
        assert_eq!(d3.x, -2e-3);
    }

    #[test]
    fn momentum_bookkeeping() {
        let m = RwModel::default();
        let mut r = rng();
        let mut s = ActuatorState::at_rest(Vec3::new(100.0, -200.0, 0.0), Vec3::ZERO);
        for k in 0..500 {
            let cmd = Vec3::new((k as f64).sin(), (k as f64 * 0.3).cos(), 0.5) * 2e-3;
            let (n, d) = apply_rw_command(&s, &m, cmd, 30.0 + k as f64 * 0.1, 0.1, &mut r);
            let dh = m.momentum(n.rw_true_speed) - m.momentum(s.rw_true_speed);
            assert!((dh - d * 0.1).norm() < 1e-12);
            s = n;
        }
    }

    #[test]
    fn unresponsive_windows_only_inside_deadband() {
        let m = RwModel {
            unresponsive_rate: 10.0,
            dead_time_max: 0.0,
            ..RwModel::default()
        };
        let mut r = rng();
        let inside = ActuatorState::at_rest(Vec3::splat(100.0), Vec3::ZERO);
        let (n, d) = apply_rw_command(&inside, &m, Vec3::splat(1e-3), 0.0, 0.1, &mut r);
        assert_eq!(d, Vec3::ZERO);
        assert!(n.rw_unresponsive_until.iter().all(|u| (1.0..=10.0).contains(&u)));
        let outside = ActuatorState::at_rest(Vec3::splat(1000.0), Vec3::ZERO);
        let (_, d) = apply_rw_command(&outside, &m, Vec3::splat(1e-3), 0.0, 0.1, &mut r);
        assert_eq!(d, Vec3::splat(1e-3));
    }

    #[test]
    fn measured_speed_jumps() {
        let mut r = rng();
        let outside = ActuatorState::at_rest(Vec3::new(1000.0, -1000.0, 400.0), Vec3::ZERO);
        let always = RwModel {
            jump_probability_per_step: 1.0,
            ..RwModel::default()
        };
        for _ in 0..100 {
            assert_eq!(measure_rw_speed(&outside, &always, &mut r), outside.rw_true_speed);
        }
        let inside = ActuatorState::at_rest(Vec3::splat(100.0), Vec3::ZERO);
        let (mut up, mut down) = (false, false);
        for _ in 0..100 {
            let meas = measure_rw_speed(&inside, &always, &mut r);
            for v in meas.iter() {
                assert!(v == 285.0 || v == -85.0);
                up |= v == 285.0;
                down |= v == -85.0;
            }
        }
        assert!(up && down);
        assert_eq!(inside.rw_true_speed, Vec3::splat(100.0));
        let never = RwModel {
            jump_probability_per_step: 0.0,
            ..RwModel::default()
        };
        for _ in 0..100 {
            assert_eq!(measure_rw_speed(&inside, &never, &mut r), inside.rw_true_speed);
        }
    }

    #[test]
    fn mt_examples() {
        let b = Vec3::new(1e-5, 2e-5, -3e-5);
        assert_eq!(
            apply_mt_command(Vec3::new(0.5, 0.0, 0.0), b),
            apply_mt_command(Vec3::new(0.35, 0.0, 0.0), b)
        );
        assert_eq!(clip_dipole(Vec3::new(0.5, -0.9, 0.1)), Vec3::new(0.35, -0.35, 0.1));
        assert_eq!(apply_mt_command(b * 1e4, b).norm(), 0.0);
        let t = apply_mt_command(Vec3::new(0.0, 0.35, 0.0), Vec3::new(3e-5, 0.0, 0.0));
        assert!((t - Vec3::new(0.0, 0.0, -1.05e-5)).norm() < 1e-20);
        let x = Vec3::new(0.7, -0.2, -1.1);
        assert_eq!(apply_mt_command(clip_dipole(x), b), apply_mt_command(x, b));
    }

    #[test]
    fn residual_dipole_examples() {
        let mut s = sample_scenario(&RandomizationSpec::nominal(), 0);
        let b = Vec3::new(2e-5, -1e-5, 3e-5);
        assert_eq!(residual_dipole_torque(&s, b), Vec3::ZERO);
        s.comp_error = Vec3::splat(0.25);
        let expected = (s.residual_mu * 0.25).cross(b);
        assert!((residual_dipole_torque(&s, b) - expected).norm() < 1e-22);
    }

    #[test]
    fn flight_noise_matches_published_table() {
        let p = SensorNoiseParams::flight();
        assert!((p.effective_gyro_n() - Vec3::new(1.381e-2, 1.121e-2, 1.056e-2)).norm() < 1e-15);
        assert!((p.effective_mag_b() - Vec3::new(5.477e-2, 8.479e-2, 7.578e-2)).norm() < 1e-15);
    }

    #[test]
    fn sensing_without_noise_is_exact() {
        let p = SensorNoiseParams::zero();
        let mut r = rng();
        let bias = SensorBias::sample(&p, &mut r);
        let w = Vec3::new(0.1, -0.2, 0.3);
        let b = Vec3::new(2e-5, 1e-5, -4e-5);
        let (g, m) = sense(w, b, &bias, &p, &mut r);
        assert_eq!(g, w);
        assert_eq!(m, b * 1e6);
    }

    #[test]
    fn sensing_statistics() {
        let p = SensorNoiseParams::flight();
        let mut r = rng();
        let bias = SensorBias {
            gyro: Vec3::new(0.01, -0.02, 0.03),
            mag: Vec3::ZERO,
        };
        let n = 100_000;
        let mut sum = Vec3::ZERO;
        let mut sq = Vec3::ZERO;
        for _ in 0..n {
            let (g, _) = sense(Vec3::ZERO, Vec3::ZERO, &bias, &p, &mut r);
            sum += g;
            let res = g - bias.gyro;
            sq += res.hadamard(res);
        }
        let mean = sum / n as f64;
        let sn = p.effective_gyro_n();
        for k in 0..3 {
            assert!((mean[k] - bias.gyro[k]).abs() < 4.0 * sn[k] / (n as f64).sqrt());
        }
        let std_z = (sq.z / n as f64).sqrt();
        assert!((std_z / 1.056e-2 - 1.0).abs() < 0.03);
    }
}
