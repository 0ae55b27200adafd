//! TOML run configuration.
//!
//! ```toml
//! [scenario]
//! preset = "nominal"            # nominal | base | flight
//! inertia = [0.0428, 0.0422, 0.00985]
//! initial_attitude = [-0.5, -0.5, -0.5, -0.5]
//!
//! [controller]
//! kind = "pd"
//!
//! [run]
//! duration = 300
//! sequence = "single"           # single | repeated_pd | listed | custom
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{InertiaDiag, Quaternion, Vec3};
use crate::environment::{sample_scenario, EpisodeScenario, RandomizationSpec};
use crate::obsreward::{RewardConfig, RewardKind};
use crate::plant::{RwModel, SensorNoiseParams};
use crate::safety::CageConfig;
use crate::simloop::{
    listed_sequence, repeated_pd_sequence, ControllerSpec, EpisodeConfig, Maneuver, PolicySource, SimError,
    EXPERIMENT_CAP,
};
use crate::telemetry::AnalysisParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Nominal,
    Base,
    Flight,
}

impl Preset {
    pub fn spec(self) -> RandomizationSpec {
        match self {
            Preset::Nominal => RandomizationSpec::nominal(),
            Preset::Base => RandomizationSpec::base(),
            Preset::Flight => RandomizationSpec::flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub preset: Preset,
    /// kg·m²
    pub inertia: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    pub initial_attitude: Option<[f64; 4]>,
    /// deg/s
    pub initial_rates: Option<[f64; 3]>,
    /// rpm
    pub initial_rw_speeds: Option<[f64; 3]>,
    /// A·m²
    pub residual_dipole: Option<[f64; 3]>,
    pub comp_error: Option<[f64; 3]>,
    /// Overrides the preset's sensor noise on or off.
    pub sensor_noise: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    #[default]
    Single,
    RepeatedPd,
    Listed,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverEntry {
    pub set_attitude: [f64; 4],
    #[serde(default = "identity4")]
    pub goal: [f64; 4],
    pub delay: f64,
}

fn identity4() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub duration: f64,
    pub control_hz: u32,
    pub dynamics_hz: u32,
    pub goal: [f64; 4],
    pub rw_target: [f64; 3],
    pub sequence: SequenceKind,
    pub maneuvers: Vec<ManeuverEntry>,
    pub record_truth: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            duration: EXPERIMENT_CAP,
            control_hz: 1,
            dynamics_hz: 10,
            goal: identity4(),
            rw_target: [0.0; 3],
            sequence: SequenceKind::Single,
            maneuvers: Vec::new(),
            record_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwSection {
    /// False selects the ideal wheel without dead time, jumps or dropouts.
    pub anomalies: bool,
    #[serde(flatten)]
    pub model: RwModel,
}

impl Default for RwSection {
    fn default() -> Self {
        Self {
            anomalies: true,
            model: RwModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub kind: RewardKind,
    #[serde(flatten)]
    pub config: RewardConfig,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            kind: RewardKind::Flight,
            config: RewardConfig::default(),
        }
    }
}

/// PPO settings of one subnetwork. Recorded and validated only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyperparams {
    pub total_timesteps: u64,
    pub n_steps: u64,
    pub gamma: f64,
    pub batch_size: u64,
    pub clip_range: f64,
    pub target_kl: f64,
    pub learning_rate: f64,
    /// Exploration noise resampling, in rollouts.
    pub sde_sample_freq: u64,
    pub log_std_init: f64,
    pub episode_length: u64,
    pub num_skip: u64,
}

impl Hyperparams {
    pub fn rw() -> Self {
        Self {
            total_timesteps: 500_000_000,
            n_steps: 2_000,
            gamma: 0.95,
            batch_size: 64,
            clip_range: 0.2,
            target_kl: 0.2,
            learning_rate: 1e-4,
            sde_sample_freq: 1,
            log_std_init: -2.0,
            episode_length: 50,
            num_skip: 0,
        }
    }

    pub fn mt() -> Self {
        Self {
            total_timesteps: 500_000_000,
            n_steps: 40_000,
            gamma: 0.97,
            batch_size: 64,
            clip_range: 0.2,
            target_kl: 0.2,
            learning_rate: 5e-5,
            sde_sample_freq: 1,
            log_std_init: 0.0,
            episode_length: 5_000,
            num_skip: 9,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let f = |name: &str| format!("{prefix}.{name}");
        if self.total_timesteps == 0 {
            return Err(invalid(&f("total_timesteps"), "must be positive"));
        }
        if self.n_steps == 0 {
            return Err(invalid(&f("n_steps"), "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(&f("gamma"), "must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.batch_size > self.n_steps {
            return Err(invalid(&f("batch_size"), "must be in 1..=n_steps"));
        }
        if !(self.clip_range > 0.0 && self.clip_range.is_finite()) {
            return Err(invalid(&f("clip_range"), "must be positive"));
        }
        if !(self.target_kl > 0.0 && self.target_kl.is_finite()) {
            return Err(invalid(&f("target_kl"), "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(invalid(&f("learning_rate"), "must lie in (0, 1)"));
        }
        if !self.log_std_init.is_finite() {
            return Err(invalid(&f("log_std_init"), "must be finite"));
        }
        if self.episode_length == 0 {
            return Err(invalid(&f("episode_length"), "must be positive"));
        }
        if self.num_skip >= self.episode_length {
            return Err(invalid(&f("num_skip"), "must be below episode_length"));
        }
        Ok(())
    }
}

macro_rules! patch {
    ($($f:ident: $t:ty),*) => {
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct HyperPatch { $($f: Option<$t>),* }

        impl HyperPatch {
            fn apply(self, mut h: Hyperparams) -> Hyperparams {
                $(if let Some(v) = self.$f { h.$f = v; })*
                h
            }
        }
    };
}

patch!(
    total_timesteps: u64, n_steps: u64, gamma: f64, batch_size: u64, clip_range: f64, target_kl: f64,
    learning_rate: f64, sde_sample_freq: u64, log_std_init: f64, episode_length: u64, num_skip: u64
);

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainingPatch {
    #[serde(default)]
    rw: HyperPatch,
    #[serde(default)]
    mt: HyperPatch,
}

impl From<TrainingPatch> for TrainingSection {
    fn from(p: TrainingPatch) -> Self {
        Self {
            rw: p.rw.apply(Hyperparams::rw()),
            mt: p.mt.apply(Hyperparams::mt()),
        }
    }
}

/// Unset fields keep the per-subnetwork defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TrainingPatch")]
pub struct TrainingSection {
    pub rw: Hyperparams,
    pub mt: Hyperparams,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            rw: Hyperparams::rw(),
            mt: Hyperparams::mt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub rw: RwSection,
    #[serde(default)]
    pub cage: CageConfig,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default)]
    pub training: TrainingSection,
}

fn quat(a: [f64; 4], field: &str) -> Result<Quaternion, ConfigError> {
    let q = Quaternion::from_array(a);
    if !q.is_unit(1e-3) {
        return Err(invalid(field, format!("norm {:.6} is not 1", q.norm())));
    }
    Ok(q.normalized())
}

/// `line L, column C: message`, on one line.
fn parse_message(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().split_whitespace().collect::<Vec<_>>().join(" ");
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {msg}")
        }
        None => msg,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(parse_message(text, &e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative policy path is taken relative to the file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let ControllerSpec::Policy {
            source: PolicySource::File(p),
            ..
        } = &mut cfg.controller
        {
            if p.is_relative() {
                *p = path.parent().map_or_else(|| p.clone(), |d| d.join(&*p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let [a, b, c] = self.scenario.inertia;
        InertiaDiag::new(a, b, c).map_err(|e| invalid("scenario.inertia", e.to_string()))?;
        if let Some(q) = self.scenario.initial_attitude {
            quat(q, "scenario.initial_attitude")?;
        }
        quat(self.run.goal, "run.goal")?;
        for (i, m) in self.run.maneuvers.iter().enumerate() {
            quat(m.set_attitude, &format!("run.maneuvers[{i}].set_attitude"))?;
            quat(m.goal, &format!("run.maneuvers[{i}].goal"))?;
        }
        if self.run.sequence == SequenceKind::Custom && self.run.maneuvers.is_empty() {
            return Err(invalid("run.maneuvers", "custom sequence needs at least one maneuver"));
        }
        self.training.rw.validate("training.rw")?;
        self.training.mt.validate("training.mt")?;
        self.episode_config(self.scenario.seed)?.validate()?;
        Ok(())
    }

    pub fn randomization(&self) -> Result<RandomizationSpec, ConfigError> {
        let mut spec = self.scenario.preset.spec();
        let [a, b, c] = self.scenario.inertia;
        spec.nominal_inertia = InertiaDiag::new(a, b, c).map_err(|e| invalid("scenario.inertia", e.to_string()))?;
        match self.scenario.sensor_noise {
            Some(true) => spec.sensor_noise = SensorNoiseParams::flight(),
            Some(false) => spec.sensor_noise = SensorNoiseParams::zero(),
            None => {}
        }
        Ok(spec)
    }

    pub fn scenario_for(&self, seed: u64) -> Result<EpisodeScenario, ConfigError> {
        let s = &self.scenario;
        let mut sc = sample_scenario(&self.randomization()?, seed);
        if let Some(q) = s.initial_attitude {
            sc.initial_q = quat(q, "scenario.initial_attitude")?;
        }
        if let Some(w) = s.initial_rates {
            sc.initial_omega = Vec3::from_array(w);
        }
        if let Some(w) = s.initial_rw_speeds {
            sc.initial_rw_speeds = Vec3::from_array(w);
        }
        if let Some(m) = s.residual_dipole {
            sc.residual_mu = Vec3::from_array(m);
        }
        if let Some(e) = s.comp_error {
            sc.comp_error = Vec3::from_array(e);
        }
        Ok(sc)
    }

    pub fn episode_config(&self, seed: u64) -> Result<EpisodeConfig, ConfigError> {
        let mut c = EpisodeConfig::new(self.scenario_for(seed)?, self.controller.clone());
        c.rw_model = if self.rw.anomalies {
            self.rw.model.clone()
        } else {
            RwModel {
                wheel_inertia: self.rw.model.wheel_inertia,
                max_speed: self.rw.model.max_speed,
                min_torque: self.rw.model.min_torque,
                max_torque: self.rw.model.max_torque,
                ..RwModel::ideal()
            }
        };
        c.cage = self.cage;
        c.reward = self.reward.kind;
        c.reward_config = self.reward.config.clone();
        c.control_hz = self.run.control_hz;
        c.dynamics_hz = self.run.dynamics_hz;
        c.goal = quat(self.run.goal, "run.goal")?;
        c.rw_target = Vec3::from_array(self.run.rw_target);
        c.record_truth = self.run.record_truth;
        c.analysis = self.analysis;
        c.duration = match self.sequence()? {
            Some(seq) => seq.iter().map(|m| m.delay).sum::<f64>().min(c.duration_cap),
            None => self.run.duration,
        };
        Ok(c)
    }

    /// Maneuver list, or `None` for a single episode.
    pub fn sequence(&self) -> Result<Option<Vec<Maneuver>>, ConfigError> {
        Ok(match self.run.sequence {
            SequenceKind::Single => None,
            SequenceKind::RepeatedPd => Some(repeated_pd_sequence()),
            SequenceKind::Listed => Some(listed_sequence(match self.scenario.initial_attitude {
                Some(q) => quat(q, "scenario.initial_attitude")?,
                None => Quaternion::new(0.906, -0.0976, 0.0253, -0.410).normalized(),
            })),
            SequenceKind::Custom => Some(
                self.run
                    .maneuvers
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        Ok(Maneuver {
                            set_attitude: quat(m.set_attitude, &format!("run.maneuvers[{i}].set_attitude"))?,
                            goal: quat(m.goal, &format!("run.maneuvers[{i}].goal"))?,
                            delay: m.delay,
                        })
                    })
                    .collect::<Result<_, ConfigError>>()?,
            ),
        })
    }

    pub fn policy_path(&self) -> Option<PathBuf> {
        match &self.controller {
            ControllerSpec::Policy {
                source: PolicySource::File(p),
                ..
            } => Some(p.clone()),
            _ => None,
        }
    }
}
