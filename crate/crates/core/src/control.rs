//! PD law, policy-network inference and the network file codec.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{raw_error_quaternion, MathError, Quaternion, Vec3};
use crate::obsreward::{build_observation, Snapshot, OBS_LEN};
use crate::plant::{RwModel, MT_MAX_DIPOLE};

pub const NET_MAGIC: [u8; 4] = *b"LLRN";
pub const NET_VERSION: u16 = 1;
/// Maximum wheel torque, Nm.
pub const RW_MAX_TORQUE: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("input has {got} elements, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("policy shape invalid: {0}")]
    PolicyShape(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("bad magic {0:?}, expected \"LLRN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("{0} trailing bytes after network payload")]
    TrailingBytes(usize),
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {layer} has a zero dimension")]
    ZeroDim { layer: usize },
    #[error("layer {layer} expects {got} inputs but previous layer outputs {expected}")]
    Chaining { layer: usize, expected: usize, got: usize },
    #[error("layer {layer} has unknown activation id {id}")]
    UnknownActivation { layer: usize, id: u8 },
    #[error("layer {layer} contains a non-finite parameter")]
    NonFinite { layer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub z_axis_scale: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: 670.0,
            kd: 2500.0,
            z_axis_scale: 0.2,
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.kp > 0.0 && self.kd > 0.0 && self.z_axis_scale > 0.0 && self.z_axis_scale <= 1.0) {
            return Err(ControlError::InvalidGains(format!(
                "need kp, kd > 0 and 0 < z_axis_scale <= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// PD law on an error quaternion of either sign. Output in rpm/s.
pub fn pd_from_error(dq: Quaternion, omega: Vec3, gains: &PdGains) -> Vec3 {
    let s = if dq.w >= 0.0 { 1.0 } else { -1.0 };
    let v = dq.vector();
    let axis = Vec3::new(1.0, 1.0, gains.z_axis_scale);
    let p = axis * gains.kp;
    let d = axis * (gains.kd * (1.0 + v.norm_squared()));
    -(p.hadamard(v) * s) - d.hadamard(omega)
}

/// `−k_p sign(δq_s) δq_v − k_d (1 + δq_vᵀδq_v) ω` with the z gains scaled.
///
/// The result is a body-torque request expressed as wheel acceleration in
/// rpm/s; the wheels are driven with the opposite sign.
pub fn pd_control(q: Quaternion, q_t: Quaternion, omega: Vec3, gains: &PdGains) -> Result<Vec3, ControlError> {
    let dq = raw_error_quaternion(q_t, q)?;
    Ok(pd_from_error(dq, omega, gains))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Silu,
    Tanh,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Silu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Silu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Silu => silu(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// out_dim × in_dim, row-major
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            let mut acc = *b as f64;
            for (w, xi) in row.iter().zip(x) {
                acc += *w as f64 * xi;
            }
            out.push(self.activation.apply(acc));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

impl MlpNetwork {
    /// Checks chaining, sizes and finiteness.
    pub fn new(layers: Vec<Layer>) -> Result<Self, DecodeError> {
        if layers.is_empty() {
            return Err(DecodeError::NoLayers);
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(DecodeError::ZeroDim { layer: i });
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(DecodeError::Chaining {
                    layer: i,
                    expected: layers[i - 1].out_dim,
                    got: l.in_dim,
                });
            }
            assert_eq!(l.weights.len(), l.in_dim * l.out_dim, "weight buffer size");
            assert_eq!(l.biases.len(), l.out_dim, "bias buffer size");
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(DecodeError::NonFinite { layer: i });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn encoded_len(&self) -> usize {
        8 + 9 * self.layers.len() + 4 * self.param_count()
    }

    /// Raw forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, ControlError> {
        if input.len() != self.in_dim() {
            return Err(ControlError::DimensionMismatch {
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        let mut y = Vec::with_capacity(64);
        for l in &self.layers {
            l.forward(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Requires a 39-input network with 3 or 6 outputs.
    pub fn check_policy_shape(&self) -> Result<(), ControlError> {
        if self.in_dim() != OBS_LEN {
            return Err(ControlError::PolicyShape(format!(
                "input dimension {} != {OBS_LEN}",
                self.in_dim()
            )));
        }
        if !matches!(self.out_dim(), 3 | 6) {
            return Err(ControlError::PolicyShape(format!(
                "output dimension {} not in {{3, 6}}",
                self.out_dim()
            )));
        }
        Ok(())
    }
}

/// Forward pass bounded to [−1, 1].
pub fn infer(net: &MlpNetwork, obs: &[f64]) -> Result<Vec<f64>, ControlError> {
    let mut y = net.forward(obs)?;
    for v in &mut y {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(y)
}

pub fn encode_network(net: &MlpNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(net.encoded_len());
    out.extend_from_slice(&NET_MAGIC);
    out.extend_from_slice(&NET_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u16).to_le_bytes());
    for l in &net.layers {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        out.push(l.activation.id());
    }
    for l in &net.layers {
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DecodeError::Truncated {
                needed: self.pos as u64 + n as u64,
                available: self.buf.len() as u64,
            }),
        }
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes one network from the start of `bytes`, returning it and the
/// number of bytes consumed.
pub fn decode_network_prefix(bytes: &[u8]) -> Result<(MlpNetwork, usize), DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != NET_MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != NET_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let count = r.u16()? as usize;
    if count == 0 {
        return Err(DecodeError::NoLayers);
    }
    let mut dims = Vec::with_capacity(count);
    for layer in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let id = r.take(1)?[0];
        let act = Activation::from_id(id).ok_or(DecodeError::UnknownActivation { layer, id })?;
        if in_dim == 0 || out_dim == 0 {
            return Err(DecodeError::ZeroDim { layer });
        }
        if let Some(&(_, prev_out, _)) = dims.last() {
            if prev_out != in_dim {
                return Err(DecodeError::Chaining {
                    layer,
                    expected: prev_out,
                    got: in_dim,
                });
            }
        }
        dims.push((in_dim, out_dim, act));
    }
    let params: u128 = dims
        .iter()
        .map(|&(i, o, _)| i as u128 * o as u128 + o as u128)
        .sum();
    let needed = r.pos as u128 + 4 * params;
    if needed > bytes.len() as u128 {
        return Err(DecodeError::Truncated {
            needed: u64::try_from(needed).unwrap_or(u64::MAX),
            available: bytes.len() as u64,
        });
    }
    let mut read_f32s = |n: usize| -> Result<Vec<f32>, DecodeError> {
        let raw = r.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mut layers = Vec::with_capacity(count);
    for &(in_dim, out_dim, activation) in &dims {
        let weights = read_f32s(in_dim * out_dim)?;
        let biases = read_f32s(out_dim)?;
        layers.push(Layer {
            in_dim,
            out_dim,
            activation,
            weights,
            biases,
        });
    }
    let consumed = r.pos;
    Ok((MlpNetwork::new(layers)?, consumed))
}

pub fn decode_network(bytes: &[u8]) -> Result<MlpNetwork, DecodeError> {
    let (net, used) = decode_network_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    Ok(net)
}

/// One file holding either a single network or a wheel/magnetorquer pair
/// stored back to back.
pub fn decode_network_file(bytes: &[u8]) -> Result<Vec<MlpNetwork>, DecodeError> {
    let mut nets = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (net, used) = decode_network_prefix(&bytes[pos..])?;
        nets.push(net);
        pos += used;
    }
    if nets.is_empty() {
        return Err(DecodeError::Truncated {
            needed: 8,
            available: 0,
        });
    }
    Ok(nets)
}

pub fn encode_network_pair(rw: &MlpNetwork, mt: &MlpNetwork) -> Vec<u8> {
    let mut out = encode_network(rw);
    out.extend(encode_network(mt));
    out
}

/// Network with Gaussian weights of the given standard deviation.
pub fn random_network<R: Rng + ?Sized>(dims: &[usize], std: f64, rng: &mut R) -> MlpNetwork {
    let n = dims.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let act = if i + 1 == n { Activation::Tanh } else { Activation::Silu };
            let mut l = Layer::zeros(dims[i], dims[i + 1], act);
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = (std * rng.sample::<f64, _>(StandardNormal)) as f32;
            }
            l
        })
        .collect();
    MlpNetwork::new(layers).expect("generated dims chain")
}

/// Orthogonally initialized network: SiLU hidden layers with gain
/// `hidden_gain`, tanh output with gain `output_gain`, zero biases.
pub fn orthogonal_network<R: Rng + ?Sized>(
    dims: &[usize],
    hidden_gain: f64,
    output_gain: f64,
    rng: &mut R,
) -> MlpNetwork {
    let n = dims.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let last = i + 1 == n;
            let (act, gain) = if last {
                (Activation::Tanh, output_gain)
            } else {
                (Activation::Silu, hidden_gain)
            };
            let mut l = Layer::zeros(dims[i], dims[i + 1], act);
            let m = orthogonal_matrix(dims[i + 1], dims[i], rng);
            for (w, v) in l.weights.iter_mut().zip(m) {
                *w = (gain * v) as f32;
            }
            l
        })
        .collect();
    MlpNetwork::new(layers).expect("generated dims chain")
}

/// rows × cols matrix (row-major) with orthonormal rows or columns,
/// whichever are fewer.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (k, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    m
}

/// Wheel policy layout: three hidden layers of 64.
pub const RW_POLICY_DIMS: [usize; 5] = [OBS_LEN, 64, 64, 64, 3];
/// Magnetorquer policy layout: four hidden layers of 64.
pub const MT_POLICY_DIMS: [usize; 6] = [OBS_LEN, 64, 64, 64, 64, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubnetState {
    Disabled,
    Frozen,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetworkState {
    pub rw_state: SubnetState,
    pub mt_state: SubnetState,
}

impl Default for SubnetworkState {
    fn default() -> Self {
        Self {
            rw_state: SubnetState::Active,
            mt_state: SubnetState::Active,
        }
    }
}

fn subnet_act(net: &MlpNetwork, state: SubnetState, obs: &[f64]) -> Result<[f64; 3], ControlError> {
    if state == SubnetState::Disabled {
        return Ok([0.0; 3]);
    }
    let y = infer(net, obs)?;
    if y.len() != 3 {
        return Err(ControlError::PolicyShape(format!("subnetwork outputs {} values, expected 3", y.len())));
    }
    Ok([y[0], y[1], y[2]])
}

/// `[rw_action, mt_action]`, with zeros in any disabled slot.
pub fn split_policy_act(
    rw_net: &MlpNetwork,
    mt_net: &MlpNetwork,
    states: SubnetworkState,
    obs: &[f64],
) -> Result<[f64; 6], ControlError> {
    let a = subnet_act(rw_net, states.rw_state, obs)?;
    let b = subnet_act(mt_net, states.mt_state, obs)?;
    Ok([a[0], a[1], a[2], b[0], b[1], b[2]])
}

/// Wheel torque (Nm) for a normalized wheel action.
pub fn scale_rw_action(a: Vec3) -> Vec3 {
    a * RW_MAX_TORQUE
}

/// Dipole (A·m²) for a normalized magnetorquer action.
pub fn scale_mt_action(a: Vec3) -> Vec3 {
    a * MT_MAX_DIPOLE
}

/// Scales a 3- or 6-element action: the first three are wheel torques (Nm),
/// the rest dipoles (A·m²).
pub fn scale_action(action: &[f64]) -> Vec<f64> {
    action
        .iter()
        .enumerate()
        .map(|(i, a)| if i < 3 { a * RW_MAX_TORQUE } else { a * MT_MAX_DIPOLE })
        .collect()
}

/// One step of an episode as seen by the skip bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipStep {
    pub mt_action: Vec3,
    pub reward: f64,
}

/// A held magnetorquer action and the reward credited to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtRecord {
    pub mt_action: Vec3,
    pub accumulated_reward: f64,
    pub start: usize,
    pub len: usize,
}

/// Compensated sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Groups an episode into spans of `num_skip + 1` steps. Each span keeps the
/// magnetorquer action of its first step and the sum of its rewards.
pub fn skip_rollout_collect(steps: &[SkipStep], num_skip: usize) -> Vec<MtRecord> {
    steps
        .chunks(num_skip + 1)
        .enumerate()
        .map(|(i, chunk)| MtRecord {
            mt_action: chunk[0].mt_action,
            accumulated_reward: neumaier_sum(chunk.iter().map(|s| s.reward)),
            start: i * (num_skip + 1),
            len: chunk.len(),
        })
        .collect()
}

/// Holds a magnetorquer action for `num_skip` steps after it is issued.
#[derive(Debug, Clone, Default)]
pub struct MtHold {
    num_skip: usize,
    held: Vec3,
    remaining: usize,
}

impl MtHold {
    pub fn new(num_skip: usize) -> Self {
        Self {
            num_skip,
            ..Default::default()
        }
    }

    pub fn apply(&mut self, proposed: Vec3) -> Vec3 {
        if self.remaining == 0 {
            self.held = proposed;
            self.remaining = self.num_skip;
        } else {
            self.remaining -= 1;
        }
        self.held
    }
}

/// What a controller sees at one control step: the current and previous
/// sensed snapshots and its own previous wheel action.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub current: &'a Snapshot,
    pub previous: Option<&'a Snapshot>,
    pub last_rw_action: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    /// Body-torque request in wheel-acceleration units, rpm/s.
    pub rw_request: Vec3,
    /// Normalized wheel action in [−1, 1].
    pub rw_action: Vec3,
    /// Normalized magnetorquer action in [−1, 1].
    pub mt_action: Vec3,
}

pub trait Controller: Send {
    fn act(&mut self, input: &ControlInput<'_>) -> Result<ControlOutput, ControlError>;
}

pub struct PdController {
    pub gains: PdGains,
    rw_limit: f64,
}

impl PdController {
    pub fn new(gains: PdGains, model: &RwModel) -> Self {
        Self {
            gains,
            rw_limit: model.nm_to_rpm_per_s(model.max_torque),
        }
    }
}

impl Controller for PdController {
    fn act(&mut self, input: &ControlInput<'_>) -> Result<ControlOutput, ControlError> {
        let omega = -input.current.err_rr;
        let req = pd_from_error(input.current.err_quat, omega, &self.gains);
        Ok(ControlOutput {
            rw_request: req,
            rw_action: req.map(|v| (v / self.rw_limit).clamp(-1.0, 1.0)),
            mt_action: Vec3::ZERO,
        })
    }
}

#[derive(Debug, Clone)]
pub enum PolicyNets {
    /// One network; three outputs drive the wheels, six drive wheels then magnetorquers.
    Single(MlpNetwork),
    Split { rw: MlpNetwork, mt: MlpNetwork },
}

impl PolicyNets {
    pub fn from_networks(mut nets: Vec<MlpNetwork>) -> Result<Self, ControlError> {
        for n in &nets {
            n.check_policy_shape()?;
        }
        match nets.len() {
            1 => Ok(PolicyNets::Single(nets.remove(0))),
            2 => {
                let mt = nets.remove(1);
                let rw = nets.remove(0);
                if rw.out_dim() != 3 || mt.out_dim() != 3 {
                    return Err(ControlError::PolicyShape("split pair must have 3 outputs each".into()));
                }
                Ok(PolicyNets::Split { rw, mt })
            }
            n => Err(ControlError::PolicyShape(format!("expected 1 or 2 networks, got {n}"))),
        }
    }
}

pub struct PolicyController {
    nets: PolicyNets,
    states: SubnetworkState,
    hold: MtHold,
    rw_model: RwModel,
}

impl PolicyController {
    pub fn new(nets: PolicyNets, states: SubnetworkState, num_skip: usize, rw_model: &RwModel) -> Self {
        Self {
            nets,
            states,
            hold: MtHold::new(num_skip),
            rw_model: rw_model.clone(),
        }
    }
}

impl Controller for PolicyController {
    fn act(&mut self, input: &ControlInput<'_>) -> Result<ControlOutput, ControlError> {
        let obs = build_observation(input.current, input.previous, input.last_rw_action);
        let a: [f64; 6] = match &self.nets {
            PolicyNets::Split { rw, mt } => split_policy_act(rw, mt, self.states, &obs.0)?,
            PolicyNets::Single(net) => {
                let y = infer(net, &obs.0)?;
                let mut a = [0.0; 6];
                a[..y.len()].copy_from_slice(&y);
                if self.states.rw_state == SubnetState::Disabled {
                    a[..3].fill(0.0);
                }
                if self.states.mt_state == SubnetState::Disabled {
                    a[3..].fill(0.0);
                }
                a
            }
        };
        let rw_action = Vec3::new(a[0], a[1], a[2]);
        let mt_action = self.hold.apply(Vec3::new(a[3], a[4], a[5]));
        let tau = scale_rw_action(rw_action);
        Ok(ControlOutput {
            rw_request: tau.map(|t| self.rw_model.nm_to_rpm_per_s(t)),
            rw_action,
            mt_action,
        })
    }
}

/// Emits the same normalized wheel action every step.
pub struct ConstantController {
    pub rw_action: Vec3,
    rw_limit: f64,
}

impl ConstantController {
    pub fn new(rw_action: Vec3, model: &RwModel) -> Self {
        Self {
            rw_action,
            rw_limit: model.nm_to_rpm_per_s(model.max_torque),
        }
    }
}

impl Controller for ConstantController {
    fn act(&mut self, _input: &ControlInput<'_>) -> Result<ControlOutput, ControlError> {
        Ok(ControlOutput {
            rw_request: self.rw_action * self.rw_limit,
            rw_action: self.rw_action,
            mt_action: Vec3::ZERO,
        })
    }
}
