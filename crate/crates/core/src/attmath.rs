//! Quaternion and rigid-body math.
//!
//! Quaternions are scalar-first Hamilton quaternions. An attitude quaternion
//! `q` maps vectors from the inertial frame into the body frame:
//! `v_body = q* ⊗ v_inertial ⊗ q`. Body rates act on the right-hand side, so
//! the kinematics read `q̇ = ½ q ⊗ (0, ω)`.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation from unit norm for quaternions passed into the
/// error-quaternion and controller code.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("quaternion is not unit-norm (|q| = {0})")]
    NotUnit(f64),
    #[error("invalid inertia: {0}")]
    InvalidInertia(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector, or zero if the input has zero length.
    pub fn normalized_or_zero(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec3::ZERO
        }
    }

    /// Elementwise product.
    pub fn hadamard(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    /// Applies `f` to x, y, z in that order.
    pub fn map(self, mut f: impl FnMut(f64) -> f64) -> Vec3 {
        let x = f(self.x);
        let y = f(self.y);
        Vec3::new(x, y, f(self.z))
    }

    pub fn zip_map(self, o: Vec3, f: impl Fn(f64, f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x, o.x), f(self.y, o.y), f(self.z, o.z))
    }

    pub fn abs(self) -> Vec3 {
        self.map(f64::abs)
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn iter(self) -> impl Iterator<Item = f64> {
        self.to_array().into_iter()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_scalar_vector(w: f64, v: Vec3) -> Self {
        Self::new(w, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis.normalized_or_zero();
        Self::from_scalar_vector(c, a * s)
    }

    /// Exponential map of a rotation vector (axis × angle, radians).
    pub fn from_rotation_vector(rv: Vec3) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            // second-order series keeps the result unit-norm to rounding
            let half = rv * 0.5;
            return Self::from_scalar_vector(1.0 - half.norm_squared() * 0.5, half).normalized();
        }
        Self::from_axis_angle(rv, angle)
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    /// Representative of the same rotation with `w ≥ 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn dot(self, o: Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Express an inertial-frame vector in the body frame.
    pub fn to_body(self, v_inertial: Vec3) -> Vec3 {
        self.conjugate().rotate(v_inertial)
    }

    /// Express a body-frame vector in the inertial frame.
    pub fn to_inertial(self, v_body: Vec3) -> Vec3 {
        self.rotate(v_body)
    }

    /// Active rotation `q ⊗ v ⊗ q*`.
    fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(t)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(self) -> f64 {
        let c = self.canonical();
        2.0 * c.vector().norm().atan2(c.w)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

/// Principal-axis inertia tensor in kg·m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct InertiaDiag {
    ixx: f64,
    iyy: f64,
    izz: f64,
}

impl InertiaDiag {
    /// Nominal spacecraft inertia.
    pub const NOMINAL: InertiaDiag = InertiaDiag {
        ixx: 0.0428,
        iyy: 0.0422,
        izz: 0.00985,
    };

    pub fn new(ixx: f64, iyy: f64, izz: f64) -> Result<Self, MathError> {
        let all = [ixx, iyy, izz];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(MathError::InvalidInertia(format!(
                "components must be finite and positive, got {all:?}"
            )));
        }
        if ixx + iyy < izz || iyy + izz < ixx || izz + ixx < iyy {
            return Err(MathError::InvalidInertia(format!(
                "triangle inequality violated for {all:?}"
            )));
        }
        Ok(Self { ixx, iyy, izz })
    }

    pub fn ixx(&self) -> f64 {
        self.ixx
    }

    pub fn iyy(&self) -> f64 {
        self.iyy
    }

    pub fn izz(&self) -> f64 {
        self.izz
    }

    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.ixx, self.iyy, self.izz)
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        v.hadamard(self.as_vec())
    }

    pub fn solve(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.x / self.ixx, v.y / self.iyy, v.z / self.izz)
    }
}

impl TryFrom<[f64; 3]> for InertiaDiag {
    type Error = MathError;
    fn try_from(a: [f64; 3]) -> Result<Self, MathError> {
        InertiaDiag::new(a[0], a[1], a[2])
    }
}

impl From<InertiaDiag> for [f64; 3] {
    fn from(i: InertiaDiag) -> [f64; 3] {
        [i.ixx, i.iyy, i.izz]
    }
}

fn check_unit(q: Quaternion) -> Result<(), MathError> {
    if q.is_finite() && q.is_unit(UNIT_NORM_TOL) {
        Ok(())
    } else {
        Err(MathError::NotUnit(q.norm()))
    }
}

/// `q_t⁻¹ ⊗ q`, renormalized, without sign canonicalization.
pub fn raw_error_quaternion(q_t: Quaternion, q: Quaternion) -> Result<Quaternion, MathError> {
    check_unit(q_t)?;
    check_unit(q)?;
    Ok((q_t.inverse() * q).normalized())
}

/// Attitude error `q_t⁻¹ ⊗ q`, canonicalized to a non-negative scalar part.
pub fn error_quaternion(q_t: Quaternion, q: Quaternion) -> Result<Quaternion, MathError> {
    raw_error_quaternion(q_t, q).map(Quaternion::canonical)
}

/// Advances `q` by a constant body rate over `dt` using the exact exponential.
pub fn integrate_kinematics(q: Quaternion, omega_body: Vec3, dt: f64) -> Quaternion {
    if omega_body == Vec3::ZERO {
        return q;
    }
    (q * Quaternion::from_rotation_vector(omega_body * dt)).normalized()
}

/// Body angular acceleration with wheel momentum exchange:
/// `I ω̇ = τ_ext − τ_wheels − ω × (I ω + h)`.
///
/// `tau_wheels` is the torque applied to the wheel rotors (so `ḣ = τ_wheels`).
pub fn euler_dynamics(
    omega: Vec3,
    inertia: &InertiaDiag,
    h_wheels: Vec3,
    tau_wheels: Vec3,
    tau_ext: Vec3,
) -> Vec3 {
    let h_total = inertia.apply(omega) + h_wheels;
    inertia.solve(tau_ext - tau_wheels - omega.cross(h_total))
}

pub fn magnetic_torque(mu: Vec3, b: Vec3) -> Vec3 {
    mu.cross(b)
}

/// Rotational state integrated by [`rk4_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub q: Quaternion,
    /// Body rates, rad/s.
    pub omega: Vec3,
    /// Total wheel angular momentum in the body frame, N·m·s.
    pub h_wheels: Vec3,
}

impl RigidBodyState {
    /// Total angular momentum expressed in the inertial frame.
    pub fn inertial_momentum(&self, inertia: &InertiaDiag) -> Vec3 {
        self.q.to_inertial(inertia.apply(self.omega) + self.h_wheels)
    }
}

/// One classical Runge–Kutta step with torques held over the interval.
pub fn rk4_step(
    s: &RigidBodyState,
    inertia: &InertiaDiag,
    tau_wheels: Vec3,
    tau_ext: Vec3,
    dt: f64,
) -> RigidBodyState {
    let deriv = |q: Quaternion, w: Vec3, h: Vec3| {
        let qd = q * Quaternion::from_scalar_vector(0.0, w) * 0.5;
        let wd = euler_dynamics(w, inertia, h, tau_wheels, tau_ext);
        (qd, wd)
    };
    let (q0, w0, h0) = (s.q, s.omega, s.h_wheels);
    let hdot = tau_wheels;

    let (k1q, k1w) = deriv(q0, w0, h0);
    let (k2q, k2w) = deriv(q0 + k1q * (0.5 * dt), w0 + k1w * (0.5 * dt), h0 + hdot * (0.5 * dt));
    let (k3q, k3w) = deriv(q0 + k2q * (0.5 * dt), w0 + k2w * (0.5 * dt), h0 + hdot * (0.5 * dt));
    let (k4q, k4w) = deriv(q0 + k3q * dt, w0 + k3w * dt, h0 + hdot * dt);

    let q = q0 + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
    let omega = w0 + (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (dt / 6.0);
    RigidBodyState {
        q: q.normalized(),
        omega,
        h_wheels: h0 + hdot * dt,
    }
}

/// Uniformly distributed random unit quaternion (Shoemake).
pub fn random_unit_quaternion<R: rand::Rng + ?Sized>(rng: &mut R) -> Quaternion {
    use std::f64::consts::TAU;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    Quaternion::new(
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
        b * (TAU * u3).cos(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn assert_quat_close(a: Quaternion, b: Quaternion, tol: f64) {
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn error_quaternion_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let dq = error_quaternion(Quaternion::IDENTITY, Quaternion::new(h, h, 0.0, 0.0)).unwrap();
        assert_quat_close(dq, Quaternion::new(h, h, 0.0, 0.0), 1e-12);

        let q = Quaternion::new(0.5, 0.5, 0.5, 0.5);
        assert_quat_close(error_quaternion(q, q).unwrap(), Quaternion::IDENTITY, 1e-12);

        // Hamilton product by hand: identity⁻¹ ⊗ q = q = (−½,−½,−½,−½), then w<0 flips sign.
        let dq = error_quaternion(Quaternion::IDENTITY, Quaternion::new(-0.5, -0.5, -0.5, -0.5)).unwrap();
        assert_quat_close(dq, Quaternion::new(0.5, 0.5, 0.5, 0.5), 1e-12);
    }

    #[test]
    fn error_quaternion_rejects_non_unit() {
        let bad = Quaternion::new(1.0, 0.1, 0.0, 0.0);
        assert!(matches!(
            error_quaternion(Quaternion::IDENTITY, bad),
            Err(MathError::NotUnit(_))
        ));
        assert!(error_quaternion(bad, Quaternion::IDENTITY).is_err());
    }

    #[test]
    fn error_of_self_is_identity_and_scalar_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = random_unit_quaternion(&mut rng);
            let p = random_unit_quaternion(&mut rng);
            assert_quat_close(error_quaternion(q, q).unwrap(), Quaternion::IDENTITY, 1e-12);
            assert!(error_quaternion(p, q).unwrap().w >= 0.0);
        }
    }

    #[test]
    fn hamilton_product_matches_basis_table() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(i * j, k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(i * i, -Quaternion::IDENTITY);
    }

    #[test]
    fn frame_transforms_are_inverse() {
        let q = Quaternion::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 1.1);
        let v = Vec3::new(0.3, -1.2, 2.0);
        let back = q.to_inertial(q.to_body(v));
        assert!((back - v).norm() < 1e-14);
        // Body frame rotated +90° about z sees the inertial x-axis along −y.
        let qz = Quaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), PI / 2.0);
        let xb = qz.to_body(Vec3::new(1.0, 0.0, 0.0));
        assert!((xb - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn kinematics_examples() {
        let q = integrate_kinematics(Quaternion::IDENTITY, Vec3::ZERO, 1.0);
        assert_eq!(q, Quaternion::IDENTITY);

        // π/2 rad/s for 1 s is a 90° turn: (cos 45°, 0, 0, sin 45°).
        let q = integrate_kinematics(Quaternion::IDENTITY, Vec3::new(0.0, 0.0, PI / 2.0), 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_quat_close(q, Quaternion::new(h, 0.0, 0.0, h), 1e-12);
    }

    #[test]
    fn kinematics_preserves_norm_over_many_steps() {
        let w = Vec3::new(0.1, 0.2, 0.3);
        let mut q = Quaternion::IDENTITY;
        for _ in 0..10_000 {
            q = integrate_kinematics(q, w, 0.1);
        }
        assert!((q.norm() - 1.0).abs() < 1e-9);
        // constant rate: exact closed form after 1000 s
        let expected = Quaternion::from_rotation_vector(w * 1000.0);
        assert!(error_quaternion(expected, q).unwrap().angle() < 1e-9);
    }

    #[test]
    fn kinematics_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_unit_quaternion(&mut rng);
            let w = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dt = rng.random_range(0.01..2.0);
            let two = integrate_kinematics(integrate_kinematics(q, w, dt), w, dt);
            let one = integrate_kinematics(q, w, 2.0 * dt);
            assert_quat_close(two.canonical(), one.canonical(), 1e-12);
        }
    }

    /// Independent componentwise evaluation of ω × (Iω).
    fn gyroscopic_by_hand(w: [f64; 3], i: [f64; 3]) -> [f64; 3] {
        [
            (i[2] - i[1]) * w[1] * w[2],
            (i[0] - i[2]) * w[2] * w[0],
            (i[1] - i[0]) * w[0] * w[1],
        ]
    }

    #[test]
    fn euler_dynamics_against_componentwise_oracle() {
        let zero = euler_dynamics(Vec3::ZERO, &InertiaDiag::NOMINAL, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(zero, Vec3::ZERO);

        // I = diag(2,1,1), ω = (0, 0.1, 0.1): Iy = Iz so every gyroscopic component vanishes.
        let i = InertiaDiag::new(2.0, 1.0, 1.0).unwrap();
        let wd = euler_dynamics(Vec3::new(0.0, 0.1, 0.1), &i, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(wd, Vec3::ZERO);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let iv = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
            let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let inertia = InertiaDiag::new(iv[0], iv[1], iv[2]).unwrap();
            let got = euler_dynamics(Vec3::from_array(w), &inertia, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
            let g = gyroscopic_by_hand(w, iv);
            for k in 0..3 {
                let expected = -g[k] / iv[k];
                assert!((got[k] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wheel_torque_reacts_on_body() {
        let i = InertiaDiag::NOMINAL;
        let tau = Vec3::new(1e-3, -2e-3, 5e-4);
        let wd = euler_dynamics(Vec3::ZERO, &i, Vec3::ZERO, tau, Vec3::ZERO);
        assert!((i.apply(wd) + tau).norm() < 1e-18);
    }

    #[test]
    fn rk4_free_rotation_conserves_momentum() {
        let inertia = InertiaDiag::NOMINAL;
        let mut s = RigidBodyState {
            q: Quaternion::from_axis_angle(Vec3::new(0.3, -0.2, 1.0), 0.7),
            omega: Vec3::new(0.05, -0.08, 0.2),
            h_wheels: Vec3::new(1e-3, -5e-4, 2e-4),
        };
        let l0 = s.inertial_momentum(&inertia);
        for _ in 0..10_000 {
            s = rk4_step(&s, &inertia, Vec3::ZERO, Vec3::ZERO, 0.1);
        }
        let drift = (s.inertial_momentum(&inertia) - l0).norm() / l0.norm();
        assert!(drift < 1e-6, "drift {drift}");
        assert!((s.q.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn magnetic_torque_examples() {
        let t = magnetic_torque(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1e-5, 0.0));
        assert_eq!(t, Vec3::new(0.0, 0.0, 1e-5));
        let b = Vec3::new(2e-5, -1e-5, 3e-5);
        assert_eq!(magnetic_torque(b * 3.0, b), Vec3::ZERO);

        let mu = Vec3::new(-0.459, -0.024, 0.069);
        let t = magnetic_torque(mu, b);
        // hand evaluation
        let expected = Vec3::new(
            -0.024 * 3e-5 - 0.069 * -1e-5,
            0.069 * 2e-5 - -0.459 * 3e-5,
            -0.459 * -1e-5 - -0.024 * 2e-5,
        );
        assert!((t - expected).norm() < 1e-20);
        assert!((t - Vec3::new(-3.0e-8, 1.515e-5, 5.07e-6)).norm() < 1e-12);
        // antisymmetry
        assert_eq!(magnetic_torque(b, mu), -t);
    }

    #[test]
    fn inertia_validation() {
        assert!(InertiaDiag::new(0.0, 1.0, 1.0).is_err());
        assert!(InertiaDiag::new(1.0, 1.0, 3.0).is_err());
        assert!(InertiaDiag::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(InertiaDiag::new(0.0428, 0.0422, 0.00985).is_ok());
    }
}
