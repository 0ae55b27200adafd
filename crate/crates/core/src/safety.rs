//! Safety cage: command limits and a rule monitor that idles the controller.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{Quaternion, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid safety limits: {0}")]
pub struct LimitsError(String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyLimits {
    /// rpm
    pub max_rw_speed: Vec3,
    /// rpm/s
    pub max_rw_accel: Vec3,
    /// deg/s
    pub max_body_rate: Vec3,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self {
            max_rw_speed: Vec3::new(1500.0, 1500.0, 700.0),
            max_rw_accel: Vec3::splat(100.0),
            max_body_rate: Vec3::splat(20.0),
        }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<(), LimitsError> {
        for (name, v) in [
            ("max_rw_speed", self.max_rw_speed),
            ("max_rw_accel", self.max_rw_accel),
            ("max_body_rate", self.max_body_rate),
        ] {
            if !v.is_finite() || v.iter().any(|c| c <= 0.0) {
                return Err(LimitsError(format!("{name} must be positive, got {v:?}")));
            }
        }
        Ok(())
    }
}

fn clip_axis(a: f64, speed: f64, max_speed: f64, max_accel: f64, dt: f64) -> f64 {
    let a = a.clamp(-max_accel, max_accel);
    if a > 0.0 {
        a.min(((max_speed - speed) / dt).max(0.0))
    } else if a < 0.0 {
        a.max(((-max_speed - speed) / dt).min(0.0))
    } else {
        a
    }
}

/// Clips a wheel acceleration command (rpm/s) held for `dt` seconds.
///
/// Each axis is limited to the acceleration bound and reduced so that the
/// wheel lands exactly on the speed bound instead of crossing it. A command
/// is never reversed.
pub fn clip_command_dt(accel_cmd: Vec3, rw_speeds: Vec3, limits: &SafetyLimits, dt: f64) -> Vec3 {
    Vec3::new(
        clip_axis(accel_cmd.x, rw_speeds.x, limits.max_rw_speed.x, limits.max_rw_accel.x, dt),
        clip_axis(accel_cmd.y, rw_speeds.y, limits.max_rw_speed.y, limits.max_rw_accel.y, dt),
        clip_axis(accel_cmd.z, rw_speeds.z, limits.max_rw_speed.z, limits.max_rw_accel.z, dt),
    )
}

/// [`clip_command_dt`] over one 1 s control period.
pub fn clip_command(accel_cmd: Vec3, rw_speeds: Vec3, limits: &SafetyLimits) -> Vec3 {
    clip_command_dt(accel_cmd, rw_speeds, limits, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CageRule {
    BodyRate,
    RwSpeed,
    MtRate,
    BlindSpot,
}

impl CageRule {
    pub fn id(self) -> &'static str {
        match self {
            CageRule::BodyRate => "body-rate",
            CageRule::RwSpeed => "rw-speed",
            CageRule::MtRate => "mt-rate",
            CageRule::BlindSpot => "blind-spot",
        }
    }
}

impl fmt::Display for CageRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CageStatus {
    Nominal,
    Tripped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CageVerdict {
    pub status: CageStatus,
    pub rule: Option<CageRule>,
    /// Axis index of the violating channel.
    pub axis: Option<usize>,
    /// s
    pub timestamp: Option<f64>,
}

impl Default for CageVerdict {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl CageVerdict {
    pub const NOMINAL: CageVerdict = CageVerdict {
        status: CageStatus::Nominal,
        rule: None,
        axis: None,
        timestamp: None,
    };

    pub fn is_tripped(&self) -> bool {
        self.status == CageStatus::Tripped
    }

    fn trip(rule: CageRule, axis: usize, t: f64) -> Self {
        Self {
            status: CageStatus::Tripped,
            rule: Some(rule),
            axis: Some(axis),
            timestamp: Some(t),
        }
    }
}

/// Telemetry the monitor looks at each control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorInput {
    /// s
    pub t: f64,
    /// deg/s
    pub body_rate: Vec3,
    /// rpm
    pub rw_speed: Vec3,
    pub attitude: Quaternion,
    /// A·m²
    pub mt_dipole: Vec3,
}

/// Rate limit that applies while the magnetorquers are active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtRateRule {
    /// deg/s
    pub max_rate: f64,
    /// A·m²; dipole magnitudes at or below this count as inactive.
    pub active_threshold: f64,
}

/// Forbids pointing a body axis within a cone around an inertial direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindSpotRule {
    pub body_axis: Vec3,
    pub inertial_direction: Vec3,
    /// deg
    pub half_angle: f64,
}

/// Rule slots beyond the rate and wheel-speed limits. Both are off unless configured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionalRules {
    pub mt_rate: Option<MtRateRule>,
    pub blind_spot: Option<BlindSpotRule>,
}

/// Evaluates the rules for one step. A tripped verdict is returned unchanged.
pub fn monitor_step_with(
    input: &MonitorInput,
    limits: &SafetyLimits,
    rules: &OptionalRules,
    verdict: CageVerdict,
) -> CageVerdict {
    if verdict.is_tripped() {
        return verdict;
    }
    for k in 0..3 {
        if input.body_rate[k].abs() > limits.max_body_rate[k] {
            return CageVerdict::trip(CageRule::BodyRate, k, input.t);
        }
    }
    for k in 0..3 {
        if input.rw_speed[k].abs() > limits.max_rw_speed[k] {
            return CageVerdict::trip(CageRule::RwSpeed, k, input.t);
        }
    }
    if let Some(rule) = rules.mt_rate {
        if input.mt_dipole.max_abs() > rule.active_threshold {
            for k in 0..3 {
                if input.body_rate[k].abs() > rule.max_rate {
                    return CageVerdict::trip(CageRule::MtRate, k, input.t);
                }
            }
        }
    }
    if let Some(rule) = rules.blind_spot {
        let axis = input.attitude.to_inertial(rule.body_axis.normalized_or_zero());
        let cos = axis.dot(rule.inertial_direction.normalized_or_zero());
        if cos > rule.half_angle.to_radians().cos() {
            return CageVerdict::trip(CageRule::BlindSpot, 0, input.t);
        }
    }
    CageVerdict::NOMINAL
}

pub fn monitor_step(input: &MonitorInput, limits: &SafetyLimits, verdict: CageVerdict) -> CageVerdict {
    monitor_step_with(input, limits, &OptionalRules::default(), verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CageConfig {
    pub limits: SafetyLimits,
    /// Seconds between a trip and wheel power-off.
    pub idle_delay: f64,
    /// Monitor true rather than measured telemetry.
    pub monitor_truth: bool,
    pub rules: OptionalRules,
}

impl Default for CageConfig {
    fn default() -> Self {
        Self {
            limits: SafetyLimits::default(),
            idle_delay: 60.0,
            monitor_truth: false,
            rules: OptionalRules::default(),
        }
    }
}

/// Stateful cage for one episode.
#[derive(Debug, Clone)]
pub struct SafetyCage {
    pub config: CageConfig,
    verdict: CageVerdict,
}

impl SafetyCage {
    pub fn new(config: CageConfig) -> Self {
        Self {
            config,
            verdict: CageVerdict::NOMINAL,
        }
    }

    pub fn verdict(&self) -> CageVerdict {
        self.verdict
    }

    /// Runs the monitor and returns the updated verdict.
    pub fn observe(&mut self, input: &MonitorInput) -> CageVerdict {
        self.verdict = monitor_step_with(input, &self.config.limits, &self.config.rules, self.verdict);
        self.verdict
    }

    /// Clipped wheel acceleration; zero once tripped.
    pub fn filter(&self, accel_cmd: Vec3, rw_speeds: Vec3, dt: f64) -> Vec3 {
        if self.verdict.is_tripped() {
            Vec3::ZERO
        } else {
            clip_command_dt(accel_cmd, rw_speeds, &self.config.limits, dt)
        }
    }

    /// False once the idle delay after a trip has passed.
    pub fn wheels_powered(&self, t: f64) -> bool {
        match self.verdict.timestamp {
            Some(t0) if self.verdict.is_tripped() => t < t0 + self.config.idle_delay,
            _ => true,
        }
    }

    /// Operator reset.
    pub fn reset(&mut self) {
        self.verdict = CageVerdict::NOMINAL;
    }
}
