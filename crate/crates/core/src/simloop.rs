//! Episode engine: 1 Hz sensing and control over 10 Hz rigid-body dynamics.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{integrate_kinematics, MathError, Quaternion, RigidBodyState, Vec3};
use crate::control::{
    decode_network_file, scale_mt_action, ConstantController, ControlError, ControlInput, Controller, DecodeError,
    PdController, PdGains, PolicyController, PolicyNets, SubnetworkState,
};
use crate::environment::{propagate_position, sample_scenario, DipoleField, EnvError, EpisodeScenario, RandomizationSpec};
use crate::obsreward::{reward, RewardConfig, RewardKind, RewardTracker, Snapshot};
use crate::plant::{
    apply_mt_command, apply_rw_command, clip_dipole, measure_rw_speed, residual_dipole_torque, sense, ActuatorState,
    RwModel,
};
use crate::safety::{CageConfig, CageVerdict, MonitorInput, SafetyCage};
use crate::telemetry::{
    default_epoch, steady_state_stats, steady_state_window, AnalysisParams, ManeuverRecord, TelemetryRow,
    TelemetrySeries,
};

/// Longest allowed experiment, s.
pub const EXPERIMENT_CAP: f64 = 900.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("policy file {path}: {source}")]
    Decode { path: String, source: DecodeError },
    #[error("policy file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("controller: {0}")]
    Control(#[from] ControlError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("math: {0}")]
    Math(#[from] MathError),
}

/// Where a policy network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    File(PathBuf),
    #[serde(skip)]
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    Pd {
        #[serde(default)]
        gains: PdGains,
    },
    Policy {
        source: PolicySource,
        #[serde(default)]
        states: SubnetworkState,
        #[serde(default)]
        num_skip: usize,
    },
    /// Fixed normalized wheel action every step.
    Constant { rw_action: Vec3 },
    Off,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec::Pd { gains: PdGains::default() }
    }
}

impl ControllerSpec {
    /// Builds the controller; policy files are read and decoded here.
    pub fn build(&self, rw_model: &RwModel) -> Result<Box<dyn Controller>, SimError> {
        Ok(match self {
            ControllerSpec::Pd { gains } => {
                gains.validate()?;
                Box::new(PdController::new(*gains, rw_model))
            }
            ControllerSpec::Policy { source, states, num_skip } => {
                let (path, bytes) = match source {
                    PolicySource::File(p) => (
                        p.display().to_string(),
                        std::fs::read(p).map_err(|e| SimError::Io {
                            path: p.display().to_string(),
                            source: e,
                        })?,
                    ),
                    PolicySource::Bytes(b) => ("<memory>".to_string(), b.clone()),
                };
                let nets = decode_network_file(&bytes).map_err(|e| SimError::Decode { path, source: e })?;
                Box::new(PolicyController::new(
                    PolicyNets::from_networks(nets)?,
                    *states,
                    *num_skip,
                    rw_model,
                ))
            }
            ControllerSpec::Constant { rw_action } => Box::new(ConstantController::new(*rw_action, rw_model)),
            ControllerSpec::Off => Box::new(ConstantController::new(Vec3::ZERO, rw_model)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scenario: EpisodeScenario,
    pub controller: ControllerSpec,
    pub rw_model: RwModel,
    pub cage: CageConfig,
    pub reward: RewardKind,
    pub reward_config: RewardConfig,
    /// s
    pub duration: f64,
    pub control_hz: u32,
    pub dynamics_hz: u32,
    /// s
    pub duration_cap: f64,
    pub goal: Quaternion,
    /// rpm
    pub rw_target: Vec3,
    pub record_truth: bool,
    pub analysis: AnalysisParams,
}

impl EpisodeConfig {
    pub fn new(scenario: EpisodeScenario, controller: ControllerSpec) -> Self {
        Self {
            scenario,
            controller,
            rw_model: RwModel::default(),
            cage: CageConfig::default(),
            reward: RewardKind::Flight,
            reward_config: RewardConfig::default(),
            duration: EXPERIMENT_CAP,
            control_hz: 1,
            dynamics_hz: 10,
            duration_cap: EXPERIMENT_CAP,
            goal: Quaternion::IDENTITY,
            rw_target: Vec3::ZERO,
            record_truth: false,
            analysis: AnalysisParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.control_hz == 0 || self.dynamics_hz == 0 || self.dynamics_hz % self.control_hz != 0 {
            return Err(SimError::Config("dynamics_hz must be a positive multiple of control_hz".into()));
        }
        if !(self.duration > 0.0 && self.duration <= self.duration_cap) {
            return Err(SimError::Config(format!(
                "duration {} s outside (0, {}] s",
                self.duration, self.duration_cap
            )));
        }
        let steps = self.duration * self.control_hz as f64;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(SimError::Config("duration must be a whole number of control steps".into()));
        }
        if !self.goal.is_unit(1e-6) {
            return Err(SimError::Config("goal quaternion must be unit".into()));
        }
        self.rw_model.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.cage.limits.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.reward_config.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.scenario
            .sensor_noise
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.scenario.elements.validate()?;
        Ok(())
    }
}

/// Ground-truth state at a control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub q: Quaternion,
    /// rad/s
    pub omega: Vec3,
    /// rpm
    pub rw_speed: Vec3,
    /// Total angular momentum in the inertial frame, N·m·s.
    pub h_inertial: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub telemetry: TelemetrySeries,
    pub rewards: Vec<f64>,
    /// Trip events, at most one per episode.
    pub verdicts: Vec<CageVerdict>,
    pub records: Vec<ManeuverRecord>,
    pub truth: Vec<TruthRow>,
}

impl EpisodeResult {
    pub fn tripped(&self) -> bool {
        self.verdicts.iter().any(CageVerdict::is_tripped)
    }

    /// Reward trace as `step,t,reward` CSV.
    pub fn reward_csv(&self) -> String {
        let mut s = String::from("step,t,reward\n");
        for (i, (r, row)) in self.rewards.iter().zip(&self.telemetry.rows).enumerate() {
            s.push_str(&format!("{i},{},{r}\n", row.t));
        }
        s
    }
}

/// One entry of a maneuver sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maneuver {
    /// Attitude loaded into the estimator at the command time.
    pub set_attitude: Quaternion,
    pub goal: Quaternion,
    /// Time until the next command, s.
    pub delay: f64,
}

/// Seven repeats of the (−0.5, −0.5, −0.5, −0.5) → identity maneuver, 120 s apart.
pub fn repeated_pd_sequence() -> Vec<Maneuver> {
    vec![
        Maneuver {
            set_attitude: Quaternion::new(-0.5, -0.5, -0.5, -0.5),
            goal: Quaternion::IDENTITY,
            delay: 120.0,
        };
        7
    ]
}

/// Maneuvers 2 to 6 of the December 15 list preceded by a start from
/// `first`, 150 s apart, all commanding identity.
pub fn listed_sequence(first: Quaternion) -> Vec<Maneuver> {
    [
        first,
        Quaternion::new(0.354, 0.612, -0.354, -0.612),
        Quaternion::new(0.008, -0.087, -0.087, 0.992),
        Quaternion::new(-0.5, -0.5, -0.5, -0.5),
        Quaternion::new(-0.16, 0.066, -0.377, -0.91),
        Quaternion::new(0.0, -0.009, -0.009, 1.0),
    ]
    .into_iter()
    .map(|q| Maneuver {
        set_attitude: q.normalized(),
        goal: Quaternion::IDENTITY,
        delay: 150.0,
    })
    .collect()
}

struct Command {
    step: u64,
    set_attitude: Option<Quaternion>,
    goal: Quaternion,
}

pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeResult, SimError> {
    cfg.validate()?;
    let controller = cfg.controller.build(&cfg.rw_model)?;
    simulate(cfg, controller, &[Command {
        step: 0,
        set_attitude: None,
        goal: cfg.goal,
    }])
}

/// Runs with a caller-supplied controller; the configured one is ignored.
pub fn run_episode_with(cfg: &EpisodeConfig, controller: Box<dyn Controller>) -> Result<EpisodeResult, SimError> {
    cfg.validate()?;
    simulate(cfg, controller, &[Command {
        step: 0,
        set_attitude: None,
        goal: cfg.goal,
    }])
}

/// Runs the maneuvers back to back in one episode whose duration is the sum
/// of the delays. Each command reloads the estimator attitude; the physical
/// state carries over.
pub fn run_maneuver_sequence(cfg: &EpisodeConfig, maneuvers: &[Maneuver]) -> Result<EpisodeResult, SimError> {
    if maneuvers.is_empty() {
        return Err(SimError::InvalidArgument("empty maneuver list".into()));
    }
    let total: f64 = maneuvers.iter().map(|m| m.delay).sum();
    if maneuvers.iter().any(|m| !(m.delay > 0.0)) {
        return Err(SimError::InvalidArgument("maneuver delays must be positive".into()));
    }
    if total > cfg.duration_cap + 1e-9 {
        return Err(SimError::InvalidArgument(format!(
            "{} maneuvers need {total} s, cap is {} s",
            maneuvers.len(),
            cfg.duration_cap
        )));
    }
    let mut c = cfg.clone();
    c.duration = total;
    c.validate()?;
    let hz = c.control_hz as f64;
    let mut t = 0.0;
    let mut cmds = Vec::new();
    for m in maneuvers {
        if !m.set_attitude.is_unit(1e-3) || !m.goal.is_unit(1e-3) {
            return Err(SimError::InvalidArgument("maneuver quaternions must be unit".into()));
        }
        cmds.push(Command {
            step: (t * hz).round() as u64,
            set_attitude: Some(m.set_attitude.normalized()),
            goal: m.goal.normalized(),
        });
        t += m.delay;
    }
    let controller = c.controller.build(&c.rw_model)?;
    simulate(&c, controller, &cmds)
}

fn simulate(cfg: &EpisodeConfig, mut controller: Box<dyn Controller>, cmds: &[Command]) -> Result<EpisodeResult, SimError> {
    let sc = &cfg.scenario;
    let model = &cfg.rw_model;
    let inertia = sc.inertia;
    let field = DipoleField::default();
    let dt = 1.0 / cfg.control_hz as f64;
    let substeps = (cfg.dynamics_hz / cfg.control_hz) as usize;
    let h = dt / substeps as f64;
    let steps = (cfg.duration * cfg.control_hz as f64).round() as u64;
    let b_inertial = |t: f64| field.field(propagate_position(&sc.elements, t), t);

    let mut rng = ChaCha8Rng::seed_from_u64(sc.rng_seed);
    let dead = model.draw_dead_time(&mut rng);
    let mut act = ActuatorState::at_rest(sc.initial_rw_speeds, dead);
    let mut body = RigidBodyState {
        q: sc.initial_q.normalized(),
        omega: sc.initial_omega.map(f64::to_radians),
        h_wheels: model.momentum(act.rw_true_speed),
    };
    let mut cage = SafetyCage::new(cfg.cage);
    let mut tracker = RewardTracker::new();

    let mut q_est = body.q;
    let mut goal = cfg.goal;
    let mut gyro_prev: Option<Vec3> = None;
    let mut prev_snap: Option<Snapshot> = None;
    let mut last_rw_action = Vec3::ZERO;

    let mut series = TelemetrySeries::new(default_epoch());
    series.rows.reserve(steps as usize + 1);
    let mut rewards = Vec::with_capacity(steps as usize + 1);
    let mut truth = Vec::new();
    let mut trip: Option<CageVerdict> = None;
    let mut cmd_idx = 0;
    let mut goals = Vec::new();

    for k in 0..=steps {
        let t = k as f64 * dt;
        let b_body_true = body.q.to_body(b_inertial(t)?);
        let (gyro, mag) = sense(body.omega, b_body_true, &sc.sensor_bias, &sc.sensor_noise, &mut rng);
        let rw_meas = measure_rw_speed(&act, model, &mut rng);
        act.rw_measured_speed = rw_meas;
        if let Some(g0) = gyro_prev {
            q_est = integrate_kinematics(q_est, (g0 + gyro) * 0.5, dt);
        }
        gyro_prev = Some(gyro);
        while cmd_idx < cmds.len() && cmds[cmd_idx].step == k {
            if let Some(q) = cmds[cmd_idx].set_attitude {
                q_est = q;
                prev_snap = None;
                tracker = RewardTracker::new();
            }
            goal = cmds[cmd_idx].goal;
            goals.push((t, goal));
            cmd_idx += 1;
        }

        let monitored = if cfg.cage.monitor_truth {
            MonitorInput {
                t,
                body_rate: body.omega.map(f64::to_degrees),
                rw_speed: act.rw_true_speed,
                attitude: body.q,
                mt_dipole: act.mt_dipole_cmd,
            }
        } else {
            MonitorInput {
                t,
                body_rate: gyro.map(f64::to_degrees),
                rw_speed: rw_meas,
                attitude: q_est,
                mt_dipole: act.mt_dipole_cmd,
            }
        };
        let verdict = cage.observe(&monitored);
        if verdict.is_tripped() && trip.is_none() {
            trip = Some(verdict);
        }

        let snap = Snapshot::new(k, q_est, goal, gyro, rw_meas, cfg.rw_target, mag)?;
        let out = controller.act(&ControlInput {
            current: &snap,
            previous: prev_snap.as_ref(),
            last_rw_action,
        })?;
        let ctx = tracker.context(&snap, out.rw_action, out.mt_action);
        rewards.push(reward(cfg.reward, &ctx, &cfg.reward_config));
        last_rw_action = out.rw_action;
        prev_snap = Some(snap);

        let tripped = cage.verdict().is_tripped();
        let wheel_accel = cage.filter(-out.rw_request, rw_meas, dt);
        let dipole = if tripped {
            Vec3::ZERO
        } else {
            clip_dipole(scale_mt_action(out.mt_action))
        };
        act.mt_dipole_cmd = dipole;

        series.rows.push(TelemetryRow {
            t,
            q: q_est,
            rate: gyro.map(f64::to_degrees),
            rw_speed: rw_meas,
            rw_cmd: wheel_accel,
            mt_cmd: Some(dipole),
            mag: Some(mag),
            maneuver: Some(cmd_idx as u32),
        });
        if cfg.record_truth {
            truth.push(TruthRow {
                t,
                q: body.q,
                omega: body.omega,
                rw_speed: act.rw_true_speed,
                h_inertial: body.inertial_momentum(&inertia),
            });
        }
        if k == steps {
            break;
        }

        let torque_cmd = if cage.wheels_powered(t) {
            wheel_accel.map(|a| model.rpm_per_s_to_nm(a))
        } else {
            Vec3::ZERO
        };
        for s in 0..substeps {
            let ts = t + s as f64 * h;
            let b_body = body.q.to_body(b_inertial(ts)?);
            let tau_ext = residual_dipole_torque(sc, b_body) + apply_mt_command(dipole, b_body);
            let (next, delivered) = apply_rw_command(&act, model, torque_cmd, ts, h, &mut rng);
            act = next;
            body = crate::attmath::rk4_step(&body, &inertia, delivered, tau_ext, h);
            body.h_wheels = model.momentum(act.rw_true_speed);
        }
    }

    let mut records = Vec::with_capacity(goals.len());
    for (i, &(t_cmd, g)) in goals.iter().enumerate() {
        let until = goals.get(i + 1).map_or(f64::INFINITY, |x| x.0);
        let p = &cfg.analysis;
        let window = steady_state_window(&series, g, p.threshold_deg, p.hold_s, t_cmd, until);
        let stats = window.and_then(|w| steady_state_stats(&series, g, w, p.std_kind).ok());
        records.push(ManeuverRecord {
            index: i + 1,
            command_time: t_cmd,
            goal: g,
            steady_state_start: window.map(|w| w.start),
            settling: window.map(|w| w.start - t_cmd),
            stats,
            verdicts: trip
                .iter()
                .filter(|v| v.timestamp.is_some_and(|ts| ts >= t_cmd && ts < until))
                .copied()
                .collect(),
        });
    }

    Ok(EpisodeResult {
        telemetry: series,
        rewards,
        verdicts: trip.into_iter().collect(),
        records,
        truth,
    })
}

/// Runs configs in parallel; results come back in input order.
pub fn run_batch(cfgs: &[EpisodeConfig]) -> Vec<Result<EpisodeResult, SimError>> {
    cfgs.par_iter().map(run_episode).collect()
}

/// One config per seed, scenario drawn from `spec`.
pub fn configs_for_seeds(base: &EpisodeConfig, spec: &RandomizationSpec, seeds: &[u64]) -> Vec<EpisodeConfig> {
    seeds
        .iter()
        .map(|&s| {
            let mut c = base.clone();
            c.scenario = sample_scenario(spec, s);
            c
        })
        .collect()
}
