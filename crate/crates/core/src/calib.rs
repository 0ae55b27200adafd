//! Residual dipole and gyro bias estimation from free-motion telemetry, and
//! sensor noise extraction from segmented logs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{InertiaDiag, Quaternion, Vec3};
use crate::environment::{propagate_position, DipoleField, OrbitElements};
use crate::plant::SensorNoiseParams;
use crate::telemetry::{default_epoch, TelemetryRow, TelemetrySeries};

#[derive(Debug, Error, PartialEq)]
pub enum CalibError {
    #[error("log needs at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("sample {0}: timestamps must increase uniformly")]
    NonUniform(usize),
    #[error("sample {0}: non-finite value")]
    NonFinite(usize),
    #[error("channel lengths differ")]
    LengthMismatch,
    #[error("telemetry has no magnetometer column")]
    NoMagnetometer,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Uniformly sampled gyro and magnetometer log without actuator activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLog {
    dt: f64,
    t0: f64,
    /// rad/s
    omega: Vec<Vec3>,
    /// T
    b_body: Vec<Vec3>,
}

impl RateLog {
    pub fn new(t: &[f64], omega: Vec<Vec3>, b_body: Vec<Vec3>) -> Result<Self, CalibError> {
        if t.len() != omega.len() || t.len() != b_body.len() {
            return Err(CalibError::LengthMismatch);
        }
        if t.len() < 3 {
            return Err(CalibError::TooShort { needed: 3, got: t.len() });
        }
        let first = t[1] - t[0];
        for i in 1..t.len() {
            let step = t[i] - t[i - 1];
            if !(step > 0.0) || (step - first).abs() > 1e-6 * first.max(1.0) {
                return Err(CalibError::NonUniform(i));
            }
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        for (i, (w, b)) in omega.iter().zip(&b_body).enumerate() {
            if !w.is_finite() || !b.is_finite() || !t[i].is_finite() {
                return Err(CalibError::NonFinite(i));
            }
        }
        Ok(Self {
            dt,
            t0: t[0],
            omega,
            b_body,
        })
    }

    /// Uses the rate (deg/s) and magnetometer (µT) columns.
    pub fn from_series(series: &TelemetrySeries) -> Result<Self, CalibError> {
        let t: Vec<f64> = series.rows.iter().map(|r| r.t).collect();
        let omega = series.rows.iter().map(|r| r.rate.map(f64::to_radians)).collect();
        let b = series
            .rows
            .iter()
            .map(|r| r.mag.map(|m| m * 1e-6).ok_or(CalibError::NoMagnetometer))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(&t, omega, b)
    }

    /// Telemetry rows carrying only rates and field; attitude is identity.
    pub fn to_series(&self) -> TelemetrySeries {
        let rows = self
            .omega
            .iter()
            .zip(&self.b_body)
            .enumerate()
            .map(|(i, (w, b))| TelemetryRow {
                t: self.t0 + i as f64 * self.dt,
                q: Quaternion::IDENTITY,
                rate: w.map(f64::to_degrees),
                rw_speed: Vec3::ZERO,
                rw_cmd: Vec3::ZERO,
                mt_cmd: None,
                mag: Some(*b * 1e6),
                maneuver: None,
            })
            .collect();
        TelemetrySeries {
            epoch: default_epoch(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn omega(&self) -> &[Vec3] {
        &self.omega
    }

    pub fn b_body(&self) -> &[Vec3] {
        &self.b_body
    }

    /// Same log expressed in another body frame, `v' = rot.to_body(v)`.
    pub fn rotated(&self, rot: Quaternion) -> Self {
        Self {
            dt: self.dt,
            t0: self.t0,
            omega: self.omega.iter().map(|&w| rot.to_body(w)).collect(),
            b_body: self.b_body.iter().map(|&b| rot.to_body(b)).collect(),
        }
    }
}

/// Central-difference stencil for ω̇.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Second order, one-sided second-order ends.
    ThreePoint,
    /// Fourth order, falls back to three points next to the ends.
    #[default]
    FivePoint,
}

/// Central differences, one-sided second-order stencils at the ends.
pub fn differentiate(x: &[Vec3], dt: f64) -> Vec<Vec3> {
    differentiate_with(x, dt, Stencil::ThreePoint)
}

pub fn differentiate_with(x: &[Vec3], dt: f64, stencil: Stencil) -> Vec<Vec3> {
    let n = x.len();
    assert!(n >= 3, "need at least three samples");
    (0..n)
        .map(|i| {
            if i == 0 {
                (x[1] * 4.0 - x[0] * 3.0 - x[2]) / (2.0 * dt)
            } else if i == n - 1 {
                (x[n - 1] * 3.0 - x[n - 2] * 4.0 + x[n - 3]) / (2.0 * dt)
            } else if stencil == Stencil::FivePoint && i >= 2 && i + 2 < n {
                (x[i - 2] - x[i - 1] * 8.0 + x[i + 1] * 8.0 - x[i + 2]) / (12.0 * dt)
            } else {
                (x[i + 1] - x[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibOptions {
    pub lr: f64,
    pub max_iter: usize,
    /// Relative residual improvement regarded as converged.
    pub tol: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Below this per-axis rate std (rad/s) the bias is flagged as poorly excited.
    pub min_rate_std: f64,
    pub stencil: Stencil,
    pub record_history: bool,
}

impl Default for CalibOptions {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_iter: 50_000,
            tol: 1e-9,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            min_rate_std: 1e-3,
            stencil: Stencil::FivePoint,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibWarning {
    /// Field direction barely changes, so μ along it is unobservable.
    DipoleUnobservable,
    /// Body rates too steady to separate the bias.
    LowRateExcitation,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    /// A·m²
    pub mu: Vec3,
    /// deg/s
    pub bias: Vec3,
    /// Mean squared torque residual, N²m².
    pub final_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<CalibWarning>,
    /// Residual after each accepted step, when requested.
    pub history: Vec<f64>,
}

fn skew(v: Vec3) -> [[f64; 3]; 3] {
    [[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]]
}

/// Jacobian of `w × (I w)` at `w`.
fn gyro_jacobian(w: Vec3, inertia: &InertiaDiag) -> [[f64; 3]; 3] {
    let a = skew(w);
    let b = skew(inertia.apply(w));
    let iv = inertia.as_vec();
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = a[r][c] * iv[c] - b[r][c];
        }
    }
    m
}

fn mat_t_vec3(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
        m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
        m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
    )
}

/// Sums that make the objective a closed-form function of (μ, b).
///
/// Per sample the torque residual is `d + G z + k(b)` with `z = (μ, b)`,
/// `d = I ω̇ + ω × I ω`, `G = [B× | J(ω)]` and `k(b) = b × I b`.
struct Moments {
    n: f64,
    inertia: InertiaDiag,
    dd: f64,
    gd: [f64; 6],
    gg: [[f64; 6]; 6],
    g: [[f64; 6]; 3],
    d: Vec3,
    info_mu: [[f64; 3]; 3],
    rate_std: Vec3,
}

impl Moments {
    fn new(log: &RateLog, inertia: &InertiaDiag, stencil: Stencil) -> Self {
        let wdot = differentiate_with(&log.omega, log.dt, stencil);
        let mut m = Moments {
            n: log.len() as f64,
            inertia: *inertia,
            dd: 0.0,
            gd: [0.0; 6],
            gg: [[0.0; 6]; 6],
            g: [[0.0; 6]; 3],
            d: Vec3::ZERO,
            info_mu: [[0.0; 3]; 3],
            rate_std: Vec3::ZERO,
        };
        let mean_w = log.omega.iter().fold(Vec3::ZERO, |a, &w| a + w) / m.n;
        let mut var_w = Vec3::ZERO;
        for (i, (&w, &b)) in log.omega.iter().zip(&log.b_body).enumerate() {
            let d = inertia.apply(wdot[i]) + w.cross(inertia.apply(w));
            let p = skew(b);
            let j = gyro_jacobian(w, inertia);
            let mut gi = [[0.0; 6]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    gi[r][c] = p[r][c];
                    gi[r][c + 3] = j[r][c];
                }
            }
            m.dd += d.norm_squared();
            m.d += d;
            for r in 0..3 {
                for c in 0..6 {
                    m.g[r][c] += gi[r][c];
                    m.gd[c] += gi[r][c] * d[r];
                }
            }
            for a in 0..6 {
                for c in a..6 {
                    m.gg[a][c] += gi[0][a] * gi[0][c] + gi[1][a] * gi[1][c] + gi[2][a] * gi[2][c];
                }
            }
            let dw = w - mean_w;
            var_w += dw.hadamard(dw);
        }
        for a in 0..6 {
            for c in 0..a {
                m.gg[a][c] = m.gg[c][a];
            }
        }
        for a in 0..3 {
            for c in 0..3 {
                m.info_mu[a][c] = m.gg[a][c];
            }
        }
        m.rate_std = (var_w / m.n).map(f64::sqrt);
        m
    }

    /// Mean squared residual and its gradient in z = (μ, b[rad/s]).
    fn eval(&self, z: &[f64; 6]) -> (f64, [f64; 6]) {
        let beta = Vec3::new(z[3], z[4], z[5]);
        let k = beta.cross(self.inertia.apply(beta));
        let mut ggz = [0.0; 6];
        for (a, row) in self.gg.iter().enumerate() {
            ggz[a] = (0..6).map(|c| row[c] * z[c]).sum();
        }
        let gz = Vec3::new(
            (0..6).map(|c| self.g[0][c] * z[c]).sum(),
            (0..6).map(|c| self.g[1][c] * z[c]).sum(),
            (0..6).map(|c| self.g[2][c] * z[c]).sum(),
        );
        let zgd: f64 = (0..6).map(|c| z[c] * self.gd[c]).sum();
        let zggz: f64 = (0..6).map(|c| z[c] * ggz[c]).sum();
        let total = self.dd + 2.0 * zgd + zggz + 2.0 * k.dot(self.d) + 2.0 * k.dot(gz) + self.n * k.norm_squared();
        let mut grad = [0.0; 6];
        for c in 0..6 {
            let gtk = self.g[0][c] * k.x + self.g[1][c] * k.y + self.g[2][c] * k.z;
            grad[c] = 2.0 * (self.gd[c] + ggz[c] + gtk);
        }
        let kj = gyro_jacobian(beta, &self.inertia);
        let extra = mat_t_vec3(&kj, (self.d + gz + k * self.n) * 2.0);
        for c in 0..3 {
            grad[c + 3] += extra[c];
        }
        let inv_n = 1.0 / self.n;
        (total.max(0.0) * inv_n, grad.map(|g| g * inv_n))
    }

    fn dipole_observable(&self) -> bool {
        let m = &self.info_mu;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let tr = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        tr > 0.0 && det / tr.powi(3) > 1e-4
    }
}

/// Mean squared residual of the torque balance at given μ (A·m²) and b (deg/s).
pub fn calibration_residual(log: &RateLog, inertia: &InertiaDiag, mu: Vec3, bias_deg: Vec3) -> f64 {
    let b = bias_deg.map(f64::to_radians);
    let wdot = differentiate(&log.omega, log.dt);
    let sum: f64 = log
        .omega
        .iter()
        .zip(&log.b_body)
        .zip(&wdot)
        .map(|((&w, &bb), &wd)| {
            let wc = w + b;
            (inertia.apply(wd) + wc.cross(inertia.apply(wc)) - mu.cross(bb)).norm_squared()
        })
        .sum();
    sum / log.len() as f64
}

/// Fits μ and b to `I ω̇ + ω_c × I ω_c = μ × B` with `ω_c = ω_measured + b`.
pub fn estimate_dipole_bias(log: &RateLog, inertia: &InertiaDiag, opts: &CalibOptions) -> Result<CalibResult, CalibError> {
    if !(opts.lr > 0.0 && opts.tol >= 0.0 && (0.0..1.0).contains(&opts.beta1) && (0.0..1.0).contains(&opts.beta2)) {
        return Err(CalibError::InvalidArgument("optimizer settings out of range".into()));
    }
    let mom = Moments::new(log, inertia, opts.stencil);
    let mut warnings = Vec::new();
    if !mom.dipole_observable() {
        warnings.push(CalibWarning::DipoleUnobservable);
    }
    if mom.rate_std.iter().any(|s| s < opts.min_rate_std) {
        warnings.push(CalibWarning::LowRateExcitation);
    }

    // Parameters are μ in A·m² and b in deg/s so both are of order one.
    let deg = std::f64::consts::PI / 180.0;
    let to_z = |p: &[f64; 6]| [p[0], p[1], p[2], p[3] * deg, p[4] * deg, p[5] * deg];
    let objective = |p: &[f64; 6]| {
        let (j, g) = mom.eval(&to_z(p));
        (j, [g[0], g[1], g[2], g[3] * deg, g[4] * deg, g[5] * deg])
    };

    let mut p = [0.0; 6];
    let (mut j, mut g) = objective(&p);
    let scale = if j > 0.0 { 1.0 / j } else { 1.0 };
    let mut history = Vec::new();
    if opts.record_history {
        history.push(j);
    }
    let mut lr = opts.lr;
    let (mut m, mut v) = ([0.0; 6], [0.0; 6]);
    let mut t = 0i32;
    let mut stalled = 0;
    let mut converged = j == 0.0;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        t += 1;
        let mut cand = p;
        for c in 0..6 {
            let gc = g[c] * scale;
            m[c] = opts.beta1 * m[c] + (1.0 - opts.beta1) * gc;
            v[c] = opts.beta2 * v[c] + (1.0 - opts.beta2) * gc * gc;
            let mh = m[c] / (1.0 - opts.beta1.powi(t));
            let vh = v[c] / (1.0 - opts.beta2.powi(t));
            cand[c] -= lr * (mh / (vh.sqrt() + 1e-300) + opts.weight_decay * p[c]);
        }
        let (jc, gcand) = objective(&cand);
        if jc <= j {
            let rel = if j > 0.0 { (j - jc) / j } else { 0.0 };
            p = cand;
            j = jc;
            g = gcand;
            if opts.record_history {
                history.push(j);
            }
            stalled = if rel < opts.tol { stalled + 1 } else { 0 };
            converged = stalled >= 20 || j == 0.0;
        } else {
            lr *= 0.5;
            m = [0.0; 6];
            v = [0.0; 6];
            t = 0;
            converged = lr < opts.lr * 1e-12;
        }
    }
    if !converged {
        warnings.push(CalibWarning::NotConverged);
    }
    Ok(CalibResult {
        mu: Vec3::new(p[0], p[1], p[2]),
        bias: Vec3::new(p[3], p[4], p[5]),
        final_residual: j,
        iterations,
        warnings,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtStepResult {
    /// A·m², projected on the activated axis.
    pub delta: f64,
    pub delta_vec: Vec3,
    pub before: CalibResult,
    pub after: CalibResult,
    pub warnings: Vec<CalibWarning>,
}

/// Dipole change between logs taken before and after activating one
/// magnetorquer axis (0, 1 or 2).
pub fn mt_step_response_check(
    before: &RateLog,
    after: &RateLog,
    inertia: &InertiaDiag,
    axis: usize,
    opts: &CalibOptions,
) -> Result<MtStepResult, CalibError> {
    if axis > 2 {
        return Err(CalibError::InvalidArgument(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    let b = estimate_dipole_bias(before, inertia, opts)?;
    let a = estimate_dipole_bias(after, inertia, opts)?;
    let delta_vec = a.mu - b.mu;
    let mut warnings = b.warnings.clone();
    for w in &a.warnings {
        if !warnings.contains(w) {
            warnings.push(*w);
        }
    }
    Ok(MtStepResult {
        delta: delta_vec[axis],
        delta_vec,
        before: b,
        after: a,
        warnings,
    })
}

/// Raw sensor samples at a fixed rate, with an optional auxiliary channel
/// (for instance temperature) used to weight segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSensorLog {
    pub dt: f64,
    /// rad/s
    pub gyro: Vec<Vec3>,
    /// µT
    pub mag: Vec<Vec3>,
    pub aux: Option<Vec<f64>>,
}

/// Minimum number of segments for noise extraction.
pub const MIN_SEGMENTS: usize = 10;
const AUX_BINS: usize = 10;

/// Bias std (of segment means) and white-noise std (within segments) of one
/// three-axis channel, population statistics.
pub fn channel_noise(samples: &[Vec3], seg_len: usize, weights: &[f64]) -> (Vec3, Vec3) {
    let nseg = weights.len();
    let origin = samples.first().copied().unwrap_or_default();
    let samples: Vec<Vec3> = samples.iter().map(|&x| x - origin).collect();
    let means: Vec<Vec3> = (0..nseg)
        .map(|k| samples[k * seg_len..(k + 1) * seg_len].iter().fold(Vec3::ZERO, |a, &x| a + x) / seg_len as f64)
        .collect();
    let wsum: f64 = weights.iter().sum();
    let grand = means.iter().zip(weights).fold(Vec3::ZERO, |a, (&m, &w)| a + m * w) / wsum;
    let between = means
        .iter()
        .zip(weights)
        .fold(Vec3::ZERO, |a, (&m, &w)| a + (m - grand).hadamard(m - grand) * w)
        / wsum;
    let mut within = Vec3::ZERO;
    for (k, &m) in means.iter().enumerate() {
        for &x in &samples[k * seg_len..(k + 1) * seg_len] {
            within += (x - m).hadamard(x - m);
        }
    }
    within = within / (nseg * seg_len) as f64;
    (between.map(f64::sqrt), within.map(f64::sqrt))
}

/// Inverse-occupancy weights from each segment's mean auxiliary value.
pub fn occupancy_weights(aux_means: &[f64]) -> Vec<f64> {
    let lo = aux_means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = aux_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; aux_means.len()];
    }
    let bin = |a: f64| (((a - lo) / (hi - lo) * AUX_BINS as f64) as usize).min(AUX_BINS - 1);
    let mut count = [0usize; AUX_BINS];
    for &a in aux_means {
        count[bin(a)] += 1;
    }
    aux_means.iter().map(|&a| 1.0 / count[bin(a)] as f64).collect()
}

/// Noise parameters from a raw log cut into `segment_len` second segments.
/// The returned values are unscaled (`scale = 1`).
pub fn extract_noise_params(log: &RawSensorLog, segment_len: f64) -> Result<SensorNoiseParams, CalibError> {
    if !(log.dt > 0.0 && segment_len >= log.dt) {
        return Err(CalibError::InvalidArgument("segment length must cover at least one sample".into()));
    }
    if log.gyro.len() != log.mag.len() || log.aux.as_ref().is_some_and(|a| a.len() != log.gyro.len()) {
        return Err(CalibError::LengthMismatch);
    }
    let seg = (segment_len / log.dt).round() as usize;
    let nseg = log.gyro.len() / seg;
    if nseg < MIN_SEGMENTS {
        return Err(CalibError::InvalidArgument(format!(
            "need at least {MIN_SEGMENTS} segments of {segment_len} s, log holds {nseg}"
        )));
    }
    let weights = match &log.aux {
        Some(aux) => {
            let means: Vec<f64> = (0..nseg)
                .map(|k| aux[k * seg..(k + 1) * seg].iter().sum::<f64>() / seg as f64)
                .collect();
            occupancy_weights(&means)
        }
        None => vec![1.0; nseg],
    };
    let (gb, gn) = channel_noise(&log.gyro, seg, &weights);
    let (mb, mn) = channel_noise(&log.mag, seg, &weights);
    Ok(SensorNoiseParams {
        gyro_sigma_b: gb,
        gyro_sigma_n: gn,
        mag_sigma_b: mb,
        mag_sigma_n: mn,
        scale: 1.0,
    })
}

/// Settings for a synthetic free-tumble calibration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticLogSpec {
    pub inertia: InertiaDiag,
    /// A·m²
    pub mu: Vec3,
    /// Gyro bias in deg/s; measured = true − bias.
    pub bias: Vec3,
    pub initial_q: Quaternion,
    /// rad/s
    pub initial_omega: Vec3,
    pub elements: OrbitElements,
    pub duration: f64,
    pub dt: f64,
    pub substeps: usize,
    /// rad/s
    pub gyro_noise: Vec3,
    /// µT
    pub mag_noise: Vec3,
    /// µT
    pub mag_bias: Vec3,
    pub seed: u64,
}

impl Default for SyntheticLogSpec {
    fn default() -> Self {
        Self {
            inertia: InertiaDiag::NOMINAL,
            mu: Vec3::ZERO,
            bias: Vec3::ZERO,
            initial_q: Quaternion::IDENTITY,
            initial_omega: Vec3::new(0.05, -0.04, 0.06),
            elements: OrbitElements::NOMINAL,
            duration: 600.0,
            dt: 1.0,
            substeps: 10,
            gyro_noise: Vec3::ZERO,
            mag_noise: Vec3::ZERO,
            mag_bias: Vec3::ZERO,
            seed: 0,
        }
    }
}

fn gauss3(rng: &mut ChaCha8Rng, sigma: Vec3) -> Vec3 {
    Vec3::new(
        sigma.x * rng.sample::<f64, _>(StandardNormal),
        sigma.y * rng.sample::<f64, _>(StandardNormal),
        sigma.z * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Forward-simulates a torque-free body with a fixed residual dipole and
/// samples gyro and magnetometer.
pub fn synthetic_rate_log(spec: &SyntheticLogSpec) -> Result<RateLog, CalibError> {
    if !(spec.dt > 0.0 && spec.duration >= 2.0 * spec.dt && spec.substeps > 0) {
        return Err(CalibError::InvalidArgument("duration, dt and substeps must be positive".into()));
    }
    let n = (spec.duration / spec.dt).round() as usize + 1;
    let field = DipoleField::default();
    let b_inertial: Vec<Vec3> = (0..n)
        .map(|i| {
            let t = i as f64 * spec.dt;
            field
                .field(propagate_position(&spec.elements, t), t)
                .map_err(|e| CalibError::InvalidArgument(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let inertia = spec.inertia;
    let mu = spec.mu;
    let deriv = |q: Quaternion, w: Vec3, b_in: Vec3| {
        let tau = mu.cross(q.to_body(b_in));
        let wdot = inertia.solve(tau - w.cross(inertia.apply(w)));
        let qdot = q * Quaternion::from_scalar_vector(0.0, w) * 0.5;
        (qdot, wdot)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bias = spec.bias.map(f64::to_radians);
    let h = spec.dt / spec.substeps as f64;
    let mut q = spec.initial_q.normalized();
    let mut w = spec.initial_omega;
    let mut t_out = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    let mut b_body = Vec::with_capacity(n);
    for i in 0..n {
        t_out.push(i as f64 * spec.dt);
        omega.push(w - bias + gauss3(&mut rng, spec.gyro_noise));
        let b_meas = q.to_body(b_inertial[i]) * 1e6 + spec.mag_bias + gauss3(&mut rng, spec.mag_noise);
        b_body.push(b_meas * 1e-6);
        if i + 1 == n {
            break;
        }
        let (b0, b1) = (b_inertial[i], b_inertial[i + 1]);
        for s in 0..spec.substeps {
            let f = |frac: f64| b0 + (b1 - b0) * ((s as f64 + frac) / spec.substeps as f64);
            let (k1q, k1w) = deriv(q, w, f(0.0));
            let (k2q, k2w) = deriv(q + k1q * (h / 2.0), w + k1w * (h / 2.0), f(0.5));
            let (k3q, k3w) = deriv(q + k2q * (h / 2.0), w + k2w * (h / 2.0), f(0.5));
            let (k4q, k4w) = deriv(q + k3q * h, w + k3w * h, f(1.0));
            q = (q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0)).normalized();
            w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        }
    }
    RateLog::new(&t_out, omega, b_body)
}

/// Piecewise-constant bias plus white noise, for noise-extraction checks.
pub fn synthetic_raw_log(
    dt: f64,
    segments: usize,
    segment_len: f64,
    gyro: (Vec3, Vec3),
    mag: (Vec3, Vec3),
    seed: u64,
) -> RawSensorLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = (segment_len / dt).round() as usize;
    let mut log = RawSensorLog {
        dt,
        gyro: Vec::with_capacity(segments * per),
        mag: Vec::with_capacity(segments * per),
        aux: None,
    };
    for _ in 0..segments {
        let gb = gauss3(&mut rng, gyro.0);
        let mb = gauss3(&mut rng, mag.0);
        for _ in 0..per {
            log.gyro.push(gb + gauss3(&mut rng, gyro.1));
            log.mag.push(mb + gauss3(&mut rng, mag.1));
        }
    }
    log
}
