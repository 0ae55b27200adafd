use adcs::attmath::{error_quaternion, integrate_kinematics, magnetic_torque, InertiaDiag, Quaternion, Vec3};
use adcs::calib::{estimate_dipole_bias, synthetic_rate_log, CalibOptions, SyntheticLogSpec};
use adcs::control::{infer, pd_from_error, random_network, PdGains, RW_POLICY_DIMS};
use adcs::environment::{
    magnetic_field, propagate_state, sample_scenario, OrbitElements, RandomizationSpec, MU_EARTH_KM3,
};
use adcs::obsreward::{
    flight_penalties, reward_mt, reward_rw_base, reward_rw_flight, rw_branch, RewardBranch, RewardConfig, StepContext,
};
use adcs::plant::{apply_mt_command, clip_dipole};
use adcs::safety::{clip_command, monitor_step, CageVerdict, MonitorInput, SafetyLimits};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn v3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    (v3(1.0), -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(v, w, _)| v.norm() + w.abs() > 1e-3)
        .prop_map(|(v, w, sign)| {
            let q = Quaternion::new(w, v.x, v.y, v.z).normalized();
            if sign < 0.0 {
                q * -1.0
            } else {
                q
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn error_of_self_is_identity(q in unit_quat()) {
        let e = error_quaternion(q, q).unwrap();
        prop_assert!((e.w - 1.0).abs() < 1e-12);
        prop_assert!(e.x.abs() + e.y.abs() + e.z.abs() < 1e-12);
    }

    #[test]
    fn error_is_canonical(a in unit_quat(), b in unit_quat()) {
        prop_assert!(error_quaternion(a, b).unwrap().w >= 0.0);
    }

    #[test]
    fn kinematics_compose(q in unit_quat(), w in v3(0.5), dt in 0.01..1.0f64) {
        let two = integrate_kinematics(integrate_kinematics(q, w, dt), w, dt);
        let once = integrate_kinematics(q, w, 2.0 * dt);
        let d = two + once * -1.0;
        prop_assert!(d.w.abs().max(d.x.abs()).max(d.y.abs()).max(d.z.abs()) < 1e-12);
    }

    #[test]
    fn magnetic_torque_bilinear_antisymmetric(m1 in v3(1.0), m2 in v3(1.0), b in v3(5e-5), k in -3.0..3.0f64) {
        let lhs = magnetic_torque(m1 * k + m2, b);
        let rhs = magnetic_torque(m1, b) * k + magnetic_torque(m2, b);
        prop_assert!((lhs - rhs).norm() < 1e-15);
        prop_assert!((magnetic_torque(m1, b) + magnetic_torque(b, m1)).norm() < 1e-20);
    }

    #[test]
    fn scenario_sampling_is_pure(seed in any::<u64>()) {
        let spec = RandomizationSpec::flight();
        prop_assert_eq!(sample_scenario(&spec, seed), sample_scenario(&spec, seed));
    }

    #[test]
    fn flight_inertia_within_fifteen_percent(seed in any::<u64>()) {
        let s = sample_scenario(&RandomizationSpec::flight(), seed);
        let nom = InertiaDiag::NOMINAL.as_vec();
        let got = s.inertia.as_vec();
        for k in 0..3 {
            prop_assert!((got[k] / nom[k] - 1.0).abs() <= 0.15 + 1e-12);
        }
    }

    #[test]
    fn keplerian_invariants(t in 0.0..20_000.0f64, ta in 0.0..360.0f64, ecc_alt in 0.0..300.0f64) {
        let el = OrbitElements { true_anomaly: ta, apogee_alt: OrbitElements::NOMINAL.perigee_alt + ecc_alt, ..OrbitElements::NOMINAL };
        let energy = |(r, v): (Vec3, Vec3)| v.norm_squared() / 2.0 - MU_EARTH_KM3 / r.norm();
        let (s0, s1) = (propagate_state(&el, 0.0), propagate_state(&el, t));
        prop_assert!((energy(s1) / energy(s0) - 1.0).abs() < 1e-9);
        let (h0, h1) = (s0.0.cross(s0.1), s1.0.cross(s1.1));
        prop_assert!((h1 - h0).norm() / h0.norm() < 1e-9);
    }

    #[test]
    fn field_is_continuous(t in 0.0..6000.0f64, dir in v3(1.0)) {
        prop_assume!(dir.norm() > 1e-3);
        let p = propagate_state(&OrbitElements::NOMINAL, t).0;
        let q = p + dir.normalized_or_zero() * 1e-3;
        let d = magnetic_field(p, t).unwrap() - magnetic_field(q, t).unwrap();
        prop_assert!(d.norm() < 1e-9);
    }

    #[test]
    fn clip_is_idempotent_on_field_torque(x in v3(2.0), b in v3(5e-5)) {
        prop_assert_eq!(apply_mt_command(clip_dipole(x), b), apply_mt_command(x, b));
    }

    #[test]
    fn pd_ignores_quaternion_sign(dq in unit_quat(), w in v3(0.2)) {
        let g = PdGains::default();
        let a = pd_from_error(dq, w, &g);
        let b = pd_from_error(dq * -1.0, w, &g);
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn clip_command_is_axis_separable(a in v3(500.0), s in v3(1600.0), b in v3(500.0)) {
        let l = SafetyLimits::default();
        let c1 = clip_command(a, s, &l);
        let c2 = clip_command(Vec3::new(a.x, b.y, b.z), s, &l);
        prop_assert_eq!(c1.x, c2.x);
    }

    #[test]
    fn trip_is_absorbing(rates in proptest::collection::vec(v3(40.0), 1..40)) {
        let l = SafetyLimits::default();
        let mut v = CageVerdict::NOMINAL;
        let mut tripped = false;
        for (i, r) in rates.into_iter().enumerate() {
            let input = MonitorInput {
                t: i as f64,
                body_rate: r,
                rw_speed: Vec3::ZERO,
                attitude: Quaternion::IDENTITY,
                mt_dipole: Vec3::ZERO,
            };
            v = monitor_step(&input, &l, v);
            if tripped {
                prop_assert!(v.is_tripped());
            }
            tripped = v.is_tripped();
        }
    }

    #[test]
    fn reward_mt_at_most_one(rwr in v3(0.1), act in v3(1.0)) {
        let c = StepContext { err_rwr: rwr, mt_action: act, ..Default::default() };
        let r = reward_mt(&c);
        prop_assert!(r <= 1.0);
        if rwr != Vec3::ZERO || act != Vec3::ZERO {
            prop_assert!(r < 1.0);
        }
    }

    #[test]
    fn success_dominates_other_branches(p in 0.0..9.99f64, e_ok in 0.0..3.8e-5f64, e in 3.8e-5..1.0f64, e_prev in 0.0..1.0f64, d_prev in -1.0..1.0f64) {
        let rr = Vec3::new(p, 0.0, 0.0);
        let ok = StepContext { err_att: e_ok, err_att_prev: e_prev, err_rr: rr, ..Default::default() };
        let other = StepContext { err_att: e, err_att_prev: e_prev, dtheta: e - e_prev, dtheta_prev: d_prev, err_rr: rr, ..Default::default() };
        prop_assert_eq!(rw_branch(&ok), RewardBranch::Success);
        prop_assert!(reward_rw_base(&ok) > reward_rw_base(&other));
    }

    #[test]
    fn flight_reward_monotone_in_penalties(rr in v3(30.0), a in v3(1.0), ap in v3(1.0), grow in 1.0..3.0f64, e in 0.0..0.5f64) {
        let cfg = RewardConfig::default();
        let base = StepContext { err_att: e, err_att_prev: e, err_rr: rr, rw_action: a, rw_action_prev: ap, ..Default::default() };
        let r0 = reward_rw_flight(&base, &cfg);
        let p0 = flight_penalties(&base, &cfg);
        // Larger rate error with unchanged branch.
        let more_rate = StepContext { err_rr: rr * grow, ..base };
        prop_assert!(reward_rw_flight(&more_rate, &cfg) <= r0 + 1e-12);
        // Larger action change.
        let more_jerk = StepContext { rw_action: ap + (a - ap) * grow, ..base };
        let p1 = flight_penalties(&more_jerk, &cfg);
        prop_assert!(p1.p_smooth >= p0.p_smooth);
        prop_assert!(reward_rw_flight(&more_jerk, &cfg) <= r0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inference_is_deterministic(seed in any::<u64>(), obs in proptest::collection::vec(-1.0..1.0f64, 39)) {
        let net = random_network(&RW_POLICY_DIMS, 0.3, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = infer(&net, &obs).unwrap();
        let b = infer(&net, &obs).unwrap();
        prop_assert!(a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn calibration_is_rotation_equivariant(rot in unit_quat()) {
        // Spherical body so that the rotated log is a valid log of the same inertia.
        let inertia = InertiaDiag::new(0.03, 0.03, 0.03).unwrap();
        let spec = SyntheticLogSpec {
            inertia,
            mu: Vec3::new(-0.2, 0.1, 0.15),
            bias: Vec3::new(0.3, -0.2, 0.1),
            initial_omega: Vec3::new(0.05, -0.04, 0.06),
            duration: 3000.0,
            dt: 0.2,
            substeps: 2,
            ..Default::default()
        };
        let log = synthetic_rate_log(&spec).unwrap();
        let opts = CalibOptions::default();
        let r = estimate_dipole_bias(&log, &inertia, &opts).unwrap();
        let rr = estimate_dipole_bias(&log.rotated(rot), &inertia, &opts).unwrap();
        prop_assert!((rr.mu - rot.to_body(r.mu)).norm() < 1e-3 * r.mu.norm());
        prop_assert!((rr.bias - rot.to_body(r.bias)).norm() < 1e-3);
    }
}
