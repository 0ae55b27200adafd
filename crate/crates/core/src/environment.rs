//! Orbit propagation, geomagnetic field and per-episode randomization.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{random_unit_quaternion, InertiaDiag, Quaternion, Vec3};
use crate::plant::{SensorBias, SensorNoiseParams};

/// Earth gravitational parameter, km³/s².
pub const MU_EARTH_KM3: f64 = 398_600.441_8;
/// Equatorial Earth radius, km.
pub const R_EARTH_KM: f64 = 6378.137;
/// Earth rotation rate, rad/s.
pub const OMEGA_EARTH: f64 = 7.292_115_9e-5;
/// μ0 / 4π in T·m/A.
const MU0_OVER_4PI: f64 = 1e-7;

/// Residual dipole of the spacecraft before compensation, A·m².
pub const NOMINAL_RESIDUAL_DIPOLE: Vec3 = Vec3::new(-0.459, -0.024, 0.069);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("position is inside the Earth (|r| = {0:.3} km)")]
    InsideEarth(f64),
    #[error("invalid orbit: {0}")]
    InvalidOrbit(String),
    #[error("invalid randomization spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitElements {
    /// km above the equatorial radius
    pub perigee_alt: f64,
    /// km above the equatorial radius
    pub apogee_alt: f64,
    /// deg
    pub inclination: f64,
    /// deg
    pub raan: f64,
    /// deg
    pub arg_perigee: f64,
    /// deg
    pub true_anomaly: f64,
}

impl OrbitElements {
    /// Nominal orbit before randomization.
    pub const NOMINAL: OrbitElements = OrbitElements {
        perigee_alt: 508.0,
        apogee_alt: 519.0,
        inclination: 97.43,
        raan: 0.0,
        arg_perigee: 0.0,
        true_anomaly: 0.0,
    };

    /// Published eccentricity of the nominal orbit.
    pub const NOMINAL_ECCENTRICITY: f64 = 7.630e-4;

    /// Circular orbit of the given radius (km).
    pub fn circular(radius_km: f64, inclination: f64) -> Self {
        let alt = radius_km - R_EARTH_KM;
        Self {
            perigee_alt: alt,
            apogee_alt: alt,
            inclination,
            raan: 0.0,
            arg_perigee: 0.0,
            true_anomaly: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let vals = [
            self.perigee_alt,
            self.apogee_alt,
            self.inclination,
            self.raan,
            self.arg_perigee,
            self.true_anomaly,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidOrbit("non-finite element".into()));
        }
        if self.perigee_alt <= 0.0 {
            return Err(EnvError::InvalidOrbit(format!(
                "perigee altitude {} km is not above the surface",
                self.perigee_alt
            )));
        }
        if self.apogee_alt < self.perigee_alt {
            return Err(EnvError::InvalidOrbit(format!(
                "apogee {} km below perigee {} km",
                self.apogee_alt, self.perigee_alt
            )));
        }
        for (name, v) in [
            ("raan", self.raan),
            ("arg_perigee", self.arg_perigee),
            ("true_anomaly", self.true_anomaly),
        ] {
            if !(0.0..360.0).contains(&v) {
                return Err(EnvError::InvalidOrbit(format!("{name} = {v} outside [0, 360)")));
            }
        }
        if !(0.0..=180.0).contains(&self.inclination) {
            return Err(EnvError::InvalidOrbit(format!(
                "inclination {} outside [0, 180]",
                self.inclination
            )));
        }
        Ok(())
    }

    pub fn perigee_radius(&self) -> f64 {
        R_EARTH_KM + self.perigee_alt
    }

    pub fn apogee_radius(&self) -> f64 {
        R_EARTH_KM + self.apogee_alt
    }

    /// km
    pub fn semi_major_axis(&self) -> f64 {
        0.5 * (self.perigee_radius() + self.apogee_radius())
    }

    pub fn eccentricity(&self) -> f64 {
        let (rp, ra) = (self.perigee_radius(), self.apogee_radius());
        (ra - rp) / (ra + rp)
    }

    /// s
    pub fn period(&self) -> f64 {
        TAU * (self.semi_major_axis().powi(3) / MU_EARTH_KM3).sqrt()
    }

    /// True if the derived eccentricity lies within `tol` of `reference`.
    pub fn eccentricity_consistent(&self, reference: f64, tol: f64) -> bool {
        (self.eccentricity() - reference).abs() <= tol
    }
}

/// Solves `M = E − e sin E` for `E` by Newton iteration.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> f64 {
    let m = mean_anomaly.rem_euclid(TAU);
    let mut ecc_anom = if e < 0.8 { m } else { PI };
    for _ in 0..50 {
        let f = ecc_anom - e * ecc_anom.sin() - m;
        let step = f / (1.0 - e * ecc_anom.cos());
        ecc_anom -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    ecc_anom
}

/// Inertial position (km) and velocity (km/s) after `t` seconds of two-body motion.
pub fn propagate_state(el: &OrbitElements, t: f64) -> (Vec3, Vec3) {
    let a = el.semi_major_axis();
    let e = el.eccentricity();
    let n = (MU_EARTH_KM3 / a.powi(3)).sqrt();
    let nu0 = el.true_anomaly.to_radians();
    let e0 = ((1.0 - e * e).sqrt() * nu0.sin()).atan2(e + nu0.cos());
    let m0 = e0 - e * e0.sin();
    let ea = solve_kepler(m0 + n * t, e);
    let (s, c) = ea.sin_cos();
    let sq = (1.0 - e * e).sqrt();
    let r_pf = Vec3::new(a * (c - e), a * sq * s, 0.0);
    let r = a * (1.0 - e * c);
    let v_pf = Vec3::new(-s, sq * c, 0.0) * ((MU_EARTH_KM3 * a).sqrt() / r);
    let rot = perifocal_to_inertial(el);
    (rot(r_pf), rot(v_pf))
}

/// Inertial position (km) after `t` seconds.
pub fn propagate_position(el: &OrbitElements, t: f64) -> Vec3 {
    propagate_state(el, t).0
}

fn perifocal_to_inertial(el: &OrbitElements) -> impl Fn(Vec3) -> Vec3 {
    let (so, co) = el.raan.to_radians().sin_cos();
    let (si, ci) = el.inclination.to_radians().sin_cos();
    let (sw, cw) = el.arg_perigee.to_radians().sin_cos();
    let p = Vec3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
    let q = Vec3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);
    move |v: Vec3| p * v.x + q * v.y
}

/// Tilted, rotating geomagnetic dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleField {
    /// A·m²
    pub moment: f64,
    /// deg from the rotation axis
    pub tilt: f64,
    /// Longitude of the dipole axis in the inertial frame at t = 0, deg.
    pub phase: f64,
}

impl Default for DipoleField {
    fn default() -> Self {
        Self {
            moment: 7.94e22,
            tilt: 11.5,
            phase: 0.0,
        }
    }
}

impl DipoleField {
    /// Unit vector of the northern magnetic axis at time `t`.
    pub fn axis(&self, t: f64) -> Vec3 {
        let lon = self.phase.to_radians() + OMEGA_EARTH * t;
        let (st, ct) = self.tilt.to_radians().sin_cos();
        Vec3::new(st * lon.cos(), st * lon.sin(), ct)
    }

    /// Field magnitude on the magnetic equator at the mean Earth radius, T.
    pub fn equatorial_surface_field(&self) -> f64 {
        MU0_OVER_4PI * self.moment / (R_EARTH_KM * 1e3).powi(3)
    }

    /// Inertial field vector in tesla at `position` (km).
    pub fn field(&self, position: Vec3, t: f64) -> Result<Vec3, EnvError> {
        let r_km = position.norm();
        if !(r_km > R_EARTH_KM) {
            return Err(EnvError::InsideEarth(r_km));
        }
        // Earth's dipole moment points toward the southern hemisphere.
        let m = self.axis(t) * (-self.moment);
        let r = r_km * 1e3;
        let rhat = position / r_km;
        Ok((rhat * (3.0 * m.dot(rhat)) - m) * (MU0_OVER_4PI / r.powi(3)))
    }
}

/// Field of the default dipole model.
pub fn magnetic_field(position: Vec3, t: f64) -> Result<Vec3, EnvError> {
    DipoleField::default().field(position, t)
}

/// Per-episode randomization ranges. Offsets are symmetric half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomizationSpec {
    pub nominal_orbit: OrbitElements,
    /// ± km
    pub perigee_offset: f64,
    /// ± km
    pub apogee_offset: f64,
    /// Allowed eccentricity offset interval relative to the published value.
    pub ecc_offset: [f64; 2],
    /// ± deg
    pub incl_offset: f64,
    /// RAAN, argument of perigee and true anomaly are drawn from [0, span) deg.
    pub angle_span: f64,
    pub nominal_inertia: InertiaDiag,
    /// ± fraction per axis
    pub inertia_scale: f64,
    /// ± deg/s per axis
    pub init_rate_range: f64,
    /// ± rpm per axis
    pub init_rw_speed_range: f64,
    /// Draw the initial attitude uniformly over SO(3) instead of identity.
    pub random_initial_attitude: bool,
    pub residual_dipole: Vec3,
    /// ± fraction per axis
    pub dipole_comp_error: f64,
    pub sensor_noise: SensorNoiseParams,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self::flight()
    }
}

impl RandomizationSpec {
    /// Ranges used for the flight-agent scenarios.
    pub fn flight() -> Self {
        Self {
            nominal_orbit: OrbitElements::NOMINAL,
            perigee_offset: 5.0,
            apogee_offset: 5.0,
            ecc_offset: [-1e-4, 3e-4],
            incl_offset: 0.03,
            angle_span: 360.0,
            nominal_inertia: InertiaDiag::NOMINAL,
            inertia_scale: 0.15,
            init_rate_range: 5.0,
            init_rw_speed_range: 0.0,
            random_initial_attitude: true,
            residual_dipole: NOMINAL_RESIDUAL_DIPOLE,
            dipole_comp_error: 0.25,
            sensor_noise: SensorNoiseParams::flight(),
        }
    }

    /// Ranges used for the base-agent scenarios.
    pub fn base() -> Self {
        Self {
            init_rate_range: 0.0,
            init_rw_speed_range: 500.0,
            dipole_comp_error: 0.10,
            ..Self::flight()
        }
    }

    /// Every range zero and every noise source off.
    pub fn nominal() -> Self {
        Self {
            perigee_offset: 0.0,
            apogee_offset: 0.0,
            incl_offset: 0.0,
            angle_span: 0.0,
            inertia_scale: 0.0,
            init_rate_range: 0.0,
            init_rw_speed_range: 0.0,
            random_initial_attitude: false,
            dipole_comp_error: 0.0,
            sensor_noise: SensorNoiseParams::zero(),
            ..Self::flight()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.nominal_orbit.validate()?;
        let widths = [
            ("perigee_offset", self.perigee_offset),
            ("apogee_offset", self.apogee_offset),
            ("incl_offset", self.incl_offset),
            ("angle_span", self.angle_span),
            ("inertia_scale", self.inertia_scale),
            ("init_rate_range", self.init_rate_range),
            ("init_rw_speed_range", self.init_rw_speed_range),
            ("dipole_comp_error", self.dipole_comp_error),
        ];
        for (name, w) in widths {
            if !w.is_finite() || w < 0.0 {
                return Err(EnvError::InvalidSpec(format!("{name} must be a nonnegative width, got {w}")));
            }
        }
        if self.ecc_offset[0] > self.ecc_offset[1] {
            return Err(EnvError::InvalidSpec("ecc_offset interval is reversed".into()));
        }
        if self.angle_span > 360.0 {
            return Err(EnvError::InvalidSpec("angle_span exceeds 360 deg".into()));
        }
        if self.inertia_scale >= 1.0 {
            return Err(EnvError::InvalidSpec("inertia_scale must be below 1".into()));
        }
        if !self.residual_dipole.is_finite() {
            return Err(EnvError::InvalidSpec("residual_dipole must be finite".into()));
        }
        self.sensor_noise
            .validate()
            .map_err(|e| EnvError::InvalidSpec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScenario {
    pub elements: OrbitElements,
    pub inertia: InertiaDiag,
    pub initial_q: Quaternion,
    /// deg/s
    pub initial_omega: Vec3,
    /// rpm
    pub initial_rw_speeds: Vec3,
    /// A·m²
    pub residual_mu: Vec3,
    /// Uncompensated fraction of the residual dipole, per axis.
    pub comp_error: Vec3,
    pub sensor_noise: SensorNoiseParams,
    pub sensor_bias: SensorBias,
    pub rng_seed: u64,
}

fn sym<R: Rng>(rng: &mut R, half_width: f64) -> f64 {
    let u: f64 = rng.random();
    half_width * (2.0 * u - 1.0)
}

fn sym3<R: Rng>(rng: &mut R, half_width: f64) -> Vec3 {
    Vec3::new(sym(rng, half_width), sym(rng, half_width), sym(rng, half_width))
}

fn span<R: Rng>(rng: &mut R, width: f64) -> f64 {
    let u: f64 = rng.random();
    (width * u).rem_euclid(360.0)
}

/// Draws a scenario. The result depends only on `spec` and `seed`.
pub fn sample_scenario(spec: &RandomizationSpec, seed: u64) -> EpisodeScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nom = &spec.nominal_orbit;
    let perigee = nom.perigee_alt + sym(&mut rng, spec.perigee_offset);
    let apogee = (nom.apogee_alt + sym(&mut rng, spec.apogee_offset)).max(perigee);
    let elements = OrbitElements {
        perigee_alt: perigee,
        apogee_alt: apogee,
        inclination: nom.inclination + sym(&mut rng, spec.incl_offset),
        raan: (nom.raan + span(&mut rng, spec.angle_span)).rem_euclid(360.0),
        arg_perigee: (nom.arg_perigee + span(&mut rng, spec.angle_span)).rem_euclid(360.0),
        true_anomaly: (nom.true_anomaly + span(&mut rng, spec.angle_span)).rem_euclid(360.0),
    };
    // ±15% per axis can break the triangle inequality for this body, so redraw.
    let mut inertia = spec.nominal_inertia;
    for _ in 0..64 {
        let scale = Vec3::splat(1.0) + sym3(&mut rng, spec.inertia_scale);
        let iv = spec.nominal_inertia.as_vec().hadamard(scale);
        if let Ok(i) = InertiaDiag::new(iv.x, iv.y, iv.z) {
            inertia = i;
            break;
        }
    }
    let q_draw = random_unit_quaternion(&mut rng);
    let initial_q = if spec.random_initial_attitude {
        q_draw
    } else {
        Quaternion::IDENTITY
    };
    let initial_omega = sym3(&mut rng, spec.init_rate_range);
    let initial_rw_speeds = sym3(&mut rng, spec.init_rw_speed_range);
    let comp_error = sym3(&mut rng, spec.dipole_comp_error);
    let sensor_bias = SensorBias::sample(&spec.sensor_noise, &mut rng);
    EpisodeScenario {
        elements,
        inertia,
        initial_q,
        initial_omega,
        initial_rw_speeds,
        residual_mu: spec.residual_dipole,
        comp_error,
        sensor_noise: spec.sensor_noise.clone(),
        sensor_bias,
        rng_seed: seed,
    }
}

impl EpisodeScenario {
    /// Nominal scenario with a given start attitude and body rates (deg/s).
    pub fn nominal(initial_q: Quaternion, initial_omega: Vec3) -> Self {
        let mut s = sample_scenario(&RandomizationSpec::nominal(), 0);
        s.initial_q = initial_q;
        s.initial_omega = initial_omega;
        s
    }
}
