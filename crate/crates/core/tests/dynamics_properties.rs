//! Structural properties of the plant model that must hold for any
//! physically sensible parameterization.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uwmpc_core::dynamics::{
    coriolis_matrix, damping_torques, friction_torques, mass_matrix, step, DynamicsParams,
    JointState, PayloadSpec, SimConfig,
};
use uwmpc_core::linalg::Mat;

fn random_q(rng: &mut ChaCha8Rng, params: &DynamicsParams<f64>) -> Vec<f64> {
    params
        .joints
        .iter()
        .map(|j| rng.gen_range(j.q_min..j.q_max))
        .collect()
}

#[test]
fn mass_matrix_is_spd_over_configuration_space() {
    let params = DynamicsParams::<f64>::default_4dof();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let q = random_q(&mut rng, &params);
        let m = mass_matrix(&q, &params);
        assert!(m.asymmetry() < 1e-12, "asymmetric M at q = {q:?}");
        assert!(m.cholesky().is_some(), "M not PD at q = {q:?}");
    }
}

#[test]
fn mass_matrix_stays_spd_with_payload() {
    let base = DynamicsParams::<f64>::default_4dof();
    let payload = PayloadSpec {
        mass: 1.0,
        buoyancy_volume: 1.0 / 2700.0,
        offset: [0.02, 0.0, 0.0],
        label: "weights".into(),
    };
    let params = uwmpc_core::dynamics::attach_payload(&base, &payload).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let q = random_q(&mut rng, &params);
        assert!(mass_matrix(&q, &params).cholesky().is_some());
    }
}

#[test]
fn damping_is_passive() {
    // power extracted by drag is never positive: qd . D(qd) qd >= 0
    let params = DynamicsParams::<f64>::default_4dof();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let qd: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d = damping_torques(&qd, &params);
        let power: f64 = qd.iter().zip(&d).map(|(v, t)| v * t).sum();
        assert!(power >= 0.0, "drag injected energy at qd = {qd:?}");
    }
}

#[test]
fn friction_opposes_motion() {
    let params = DynamicsParams::<f64>::default_4dof();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let qd: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f = friction_torques(&qd, &params);
        for (v, t) in qd.iter().zip(&f) {
            assert!(v * t >= 0.0, "friction aided motion: qd = {v}, tau_f = {t}");
        }
    }
}

#[test]
fn mdot_minus_2c_is_skew_symmetric() {
    // with Christoffel-form C, dM/dt - 2C must be skew-symmetric
    let params = DynamicsParams::<f64>::default_4dof();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = f64::EPSILON.powf(1.0 / 3.0);
    for _ in 0..100 {
        let q = random_q(&mut rng, &params);
        let qd: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = coriolis_matrix(&q, &qd, &params);
        // Mdot = sum_i dM/dq_i qd_i, same central differences as C uses
        let mut mdot = Mat::<f64>::zeros(4, 4);
        let mut qp = q.clone();
        for i in 0..4 {
            qp[i] = q[i] + h;
            let mp = mass_matrix(&qp, &params);
            qp[i] = q[i] - h;
            let mm = mass_matrix(&qp, &params);
            qp[i] = q[i];
            for r in 0..4 {
                for cc in 0..4 {
                    mdot[(r, cc)] += (mp[(r, cc)] - mm[(r, cc)]) / (2.0 * h) * qd[i];
                }
            }
        }
        // S = Mdot - 2C; skew-symmetry means S + S^T = 0
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            for cc in 0..4 {
                let s_rc = mdot[(r, cc)] - 2.0 * c[(r, cc)];
                let s_cr = mdot[(cc, r)] - 2.0 * c[(cc, r)];
                worst = worst.max((s_rc + s_cr).abs());
            }
        }
        assert!(worst < 1e-9, "skew defect {worst} at q = {q:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_from_valid_state_stays_finite_and_in_box(
        q in prop::collection::vec(0.0f64..3.5, 4),
        qd in prop::collection::vec(-1.5f64..1.5, 4),
        tau in prop::collection::vec(-6.0f64..6.0, 4),
    ) {
        let params = DynamicsParams::<f64>::default_4dof();
        let cfg = SimConfig::<f64>::default();
        let state = JointState::new(q, qd);
        let out = step(&state, &tau, &params, &cfg).unwrap();
        prop_assert!(out.state.is_finite());
        for (i, j) in params.joints.iter().enumerate() {
            prop_assert!(out.state.q[i] >= j.q_min - 1e-12);
            prop_assert!(out.state.q[i] <= j.q_max + 1e-12);
        }
    }

    #[test]
    fn mass_matrix_quadratic_form_positive(
        q in prop::collection::vec(0.0f64..3.5, 4),
        v in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let params = DynamicsParams::<f64>::default_4dof();
        let m = mass_matrix(&q, &params);
        let mv = m.matvec(&v);
        let quad: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
        prop_assert!(quad > 0.0);
    }
}
