//! Ground-truth plant: a planar n-link serial manipulator moving in a
//! vertical plane through still water. The equation of motion is
//!
//! `M(q) q'' + C(q,q') q' + D(q') q' + eta(q) + f_f(q') = tau`
//!
//! with an inertia matrix that folds in per-link added mass, per-joint linear
//! plus quadratic drag, gravity/buoyancy restoring torques, and viscous plus
//! (smoothed) Coulomb joint friction. Joint 1 is at the origin; link angles
//! accumulate, gravity acts along -y.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::scalar::{all_finite, Scalar};

/// Width (rad/s) of the tanh smoothing applied to Coulomb friction so the
/// vector field stays integrable by a fixed-step scheme.
pub const COULOMB_SMOOTHING: f64 = 1e-2;

/// Relative condition-number bound above which the inertia matrix is treated
/// as numerically singular.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState<T> {
    /// Joint angles, rad.
    pub q: Vec<T>,
    /// Joint angular velocities, rad/s.
    pub qdot: Vec<T>,
}

impl<T: Scalar> JointState<T> {
    pub fn new(q: Vec<T>, qdot: Vec<T>) -> Self {
        assert_eq!(q.len(), qdot.len());
        JointState { q, qdot }
    }

    pub fn at_rest(q: Vec<T>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot: vec![T::zero(); n],
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.q) && all_finite(&self.qdot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams<T> {
    /// Dry mass, kg.
    pub mass: T,
    /// Link length, m.
    pub length: T,
    /// Center-of-mass offset along the link axis, m.
    pub com_offset: T,
    /// Rotational inertia about the link COM, kg m^2.
    pub inertia: T,
    /// Translational added mass (fluid entrained with the link), kg.
    pub added_mass: T,
    /// Displaced volume for buoyancy, m^3.
    pub buoyancy_volume: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParams<T> {
    /// Linear drag coefficient, N m s / rad.
    pub drag_linear: T,
    /// Quadratic drag coefficient, N m s^2 / rad^2.
    pub drag_quadratic: T,
    /// Viscous friction coefficient, N m s / rad.
    pub viscous_friction: T,
    /// Reflected actuator inertia (rotor + gearbox), kg m^2; enters the
    /// mass-matrix diagonal.
    pub armature: T,
    /// Coulomb friction magnitude, N m.
    pub coulomb_friction: T,
    /// Joint-limit box, rad.
    pub q_min: T,
    pub q_max: T,
    /// Torque-limit box, N m.
    pub tau_min: T,
    pub tau_max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams<T> {
    pub links: Vec<LinkParams<T>>,
    pub joints: Vec<JointParams<T>>,
    /// Fluid density, kg/m^3.
    pub fluid_density: T,
    /// Gravitational acceleration, m/s^2.
    pub gravity: T,
}

/// Rigidly grasped payload, attached at the tip of the terminal link.
///
/// The planar model uses only the along-axis component `offset[0]` of the
/// end-effector offset; the payload is treated as a point mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadSpec<T> {
    pub mass: T,
    pub buoyancy_volume: T,
    pub offset: [T; 3],
    pub label: String,
}

impl<T: Scalar> PayloadSpec<T> {
    pub fn none() -> Self {
        PayloadSpec {
            mass: T::zero(),
            buoyancy_volume: T::zero(),
            offset: [T::zero(); 3],
            label: "none".into(),
        }
    }
}

/// Arm lift capacity, kg; payloads above this are rejected.
pub const PAYLOAD_CAPACITY_KG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Inner integration step, s. Must divide the control period exactly.
    pub inner_dt: T,
    /// Control period, s (0.05 for the 20 Hz loop).
    pub control_period: T,
    pub integrator: Integrator,
    /// Uniform measurement-noise amplitude on q, rad.
    pub noise_q: T,
    /// Uniform measurement-noise amplitude on qdot, rad/s.
    pub noise_qdot: T,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        SimConfig {
            inner_dt: T::c(0.005),
            control_period: T::c(0.05),
            integrator: Integrator::Rk4,
            // encoder accuracy: +/- 0.1 degrees
            noise_q: T::c(0.1f64.to_radians()),
            noise_qdot: T::c(2e-3),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("inertia matrix numerically singular (condition estimate {cond:.3e})")]
    SingularDynamics { cond: f64 },
    #[error("integration diverged at inner step {inner_step}")]
    IntegrationDiverged { inner_step: usize },
    #[error("payload mass {mass} kg exceeds lift capacity {capacity} kg")]
    CapacityExceeded { mass: f64, capacity: f64 },
    #[error("invalid dynamics parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
}

impl<T: Scalar> DynamicsParams<T> {
    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.links.is_empty() || self.links.len() != self.joints.len() {
            return Err(DynamicsError::InvalidParams(
                "links and joints must be non-empty and of equal length".into(),
            ));
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > T::zero() && l.length > T::zero() && l.inertia > T::zero()) {
                return Err(DynamicsError::InvalidParams(format!(
                    "link {}: mass, length, inertia must be strictly positive",
                    i + 1
                )));
            }
            if l.added_mass < T::zero() || l.buoyancy_volume < T::zero() {
                return Err(DynamicsError::InvalidParams(format!(
                    "link {}: added mass and buoyancy volume must be non-negative",
                    i + 1
                )));
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if j.drag_linear < T::zero()
                || j.drag_quadratic < T::zero()
                || j.viscous_friction < T::zero()
                || j.coulomb_friction < T::zero()
            {
                return Err(DynamicsError::InvalidParams(format!(
                    "joint {}: drag and friction coefficients must be non-negative",
                    i + 1
                )));
            }
            if !(j.q_max > j.q_min) || !(j.tau_max > j.tau_min) {
                return Err(DynamicsError::InvalidParams(format!(
                    "joint {}: limit boxes must have positive width",
                    i + 1
                )));
            }
        }
        if !(self.fluid_density >= T::zero()) || !self.gravity.is_finite() {
            return Err(DynamicsError::InvalidParams(
                "fluid density must be >= 0 and gravity finite".into(),
            ));
        }
        Ok(())
    }

    /// Default plant approximating a small 4-DOF subsea arm: total dry mass
    /// 1.3 kg, link lengths summing to 0.4 m, near-neutral buoyancy.
    /// Distal joints have weaker actuators, as on the real hardware class.
    pub fn default_4dof() -> Self {
        let masses = [0.40, 0.40, 0.30, 0.20];
        let lengths = [0.15, 0.12, 0.08, 0.05];
        let tau_max = [6.0, 2.8, 3.5, 1.6];
        let drag_quad = [1.2, 0.9, 0.5, 0.25];
        let drag_lin = [0.30, 0.25, 0.15, 0.08];
        let links = (0..4)
            .map(|i| LinkParams {
                mass: T::c(masses[i]),
                length: T::c(lengths[i]),
                com_offset: T::c(lengths[i] / 2.0),
                inertia: T::c(masses[i] * lengths[i] * lengths[i] / 12.0),
                added_mass: T::c(0.5 * masses[i]),
                // material density ~2000 kg/m^3 => half the dry weight in water
                buoyancy_volume: T::c(masses[i] / 2000.0),
            })
            .collect();
        // geared actuators: sizable reflected inertia and viscous drag keep
        // joint speeds in the low rad/s range, as on the hardware class
        let armature = [0.15, 0.12, 0.08, 0.05];
        let viscous = [0.8, 0.6, 0.4, 0.22];
        let joints = (0..4)
            .map(|i| JointParams {
                drag_linear: T::c(drag_lin[i]),
                drag_quadratic: T::c(drag_quad[i]),
                viscous_friction: T::c(viscous[i]),
                armature: T::c(armature[i]),
                coulomb_friction: T::c(0.02),
                q_min: T::zero(),
                q_max: T::c(3.5),
                tau_min: T::c(-tau_max[i]),
                tau_max: T::c(tau_max[i]),
            })
            .collect();
        DynamicsParams {
            links,
            joints,
            fluid_density: T::c(1000.0),
            gravity: T::c(9.81),
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.inner_dt > T::zero()) || !(self.control_period > T::zero()) {
            return Err(DynamicsError::InvalidConfig("steps must be positive".into()));
        }
        if self.inner_dt > self.control_period {
            return Err(DynamicsError::InvalidConfig(
                "inner step must not exceed the control period".into(),
            ));
        }
        let ratio = (self.control_period / self.inner_dt).to_f64().unwrap();
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "inner step must divide the control period exactly (ratio {ratio})"
            )));
        }
        if self.noise_q < T::zero() || self.noise_qdot < T::zero() {
            return Err(DynamicsError::InvalidConfig(
                "noise amplitudes must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn inner_steps(&self) -> usize {
        (self.control_period / self.inner_dt)
            .to_f64()
            .unwrap()
            .round() as usize
    }
}

/// Absolute link angles (cumulative joint angles).
fn abs_angles<T: Scalar>(q: &[T]) -> Vec<T> {
    let mut theta = Vec::with_capacity(q.len());
    let mut acc = T::zero();
    for &qi in q {
        acc = acc + qi;
        theta.push(acc);
    }
    theta
}

/// Joint positions `p_0..p_n` (p_0 is the base origin, p_i the tip of link i).
fn joint_positions<T: Scalar>(theta: &[T], params: &DynamicsParams<T>) -> Vec<[T; 2]> {
    let mut pts = Vec::with_capacity(theta.len() + 1);
    let mut p = [T::zero(); 2];
    pts.push(p);
    for (l, &th) in params.links.iter().zip(theta) {
        p = [p[0] + l.length * th.cos(), p[1] + l.length * th.sin()];
        pts.push(p);
    }
    pts
}

/// COM positions of every link.
fn com_positions<T: Scalar>(theta: &[T], params: &DynamicsParams<T>) -> Vec<[T; 2]> {
    let joints = joint_positions(theta, params);
    params
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let base = joints[i];
            [
                base[0] + l.com_offset * theta[i].cos(),
                base[1] + l.com_offset * theta[i].sin(),
            ]
        })
        .collect()
}

/// Inertia matrix `M(q)` with translational added mass folded in:
/// `M = sum_l (m_l + ma_l) Jv_l^T Jv_l + I_l Jw_l^T Jw_l`.
pub fn mass_matrix<T: Scalar>(q: &[T], params: &DynamicsParams<T>) -> Mat<T> {
    let n = q.len();
    let theta = abs_angles(q);
    let joints = joint_positions(&theta, params);
    let coms = com_positions(&theta, params);
    let mut m = Mat::zeros(n, n);
    for (l, link) in params.links.iter().enumerate() {
        let m_eff = link.mass + link.added_mass;
        // Jv_l column k (k <= l) is the 90-degree rotation of com_l - p_{k-1}.
        let cols: Vec<[T; 2]> = (0..=l)
            .map(|k| {
                let dx = coms[l][0] - joints[k][0];
                let dy = coms[l][1] - joints[k][1];
                [-dy, dx]
            })
            .collect();
        for j in 0..=l {
            for k in 0..=l {
                let dv = cols[j][0] * cols[k][0] + cols[j][1] * cols[k][1];
                m[(j, k)] = m[(j, k)] + m_eff * dv + link.inertia;
            }
        }
    }
    for (i, joint) in params.joints.iter().enumerate() {
        m[(i, i)] = m[(i, i)] + joint.armature;
    }
    m
}

/// Gravity + buoyancy restoring torques `eta(q)` (gradient of the potential).
pub fn restoring_torques<T: Scalar>(q: &[T], params: &DynamicsParams<T>) -> Vec<T> {
    let n = q.len();
    let theta = abs_angles(q);
    let joints = joint_positions(&theta, params);
    let coms = com_positions(&theta, params);
    let mut eta = vec![T::zero(); n];
    for (l, link) in params.links.iter().enumerate() {
        // net in-water weight; negative when the link floats
        let w = (link.mass - params.fluid_density * link.buoyancy_volume) * params.gravity;
        for (k, e) in eta.iter_mut().enumerate().take(l + 1) {
            // d(y_com_l)/dq_k = (com_l - p_{k-1}).x
            *e = *e + w * (coms[l][0] - joints[k][0]);
        }
    }
    eta
}

/// Hydrodynamic damping torque vector `D(q') q'` (linear + quadratic drag).
pub fn damping_torques<T: Scalar>(qdot: &[T], params: &DynamicsParams<T>) -> Vec<T> {
    qdot.iter()
        .zip(&params.joints)
        .map(|(&v, j)| (j.drag_linear + j.drag_quadratic * v.abs()) * v)
        .collect()
}

/// Viscous + smoothed Coulomb joint friction.
pub fn friction_torques<T: Scalar>(qdot: &[T], params: &DynamicsParams<T>) -> Vec<T> {
    let w = T::c(COULOMB_SMOOTHING);
    qdot.iter()
        .zip(&params.joints)
        .map(|(&v, j)| j.viscous_friction * v + j.coulomb_friction * (v / w).tanh())
        .collect()
}

/// Coriolis/centripetal matrix built from Christoffel symbols of `M(q)`,
/// with `dM/dq_i` obtained by central differences. Using Christoffel symbols
/// makes `dM/dt - 2C` skew-symmetric.
pub fn coriolis_matrix<T: Scalar>(q: &[T], qdot: &[T], params: &DynamicsParams<T>) -> Mat<T> {
    let n = q.len();
    let h = T::epsilon().powf(T::c(1.0 / 3.0));
    // dm[i] = dM/dq_i
    let mut dm = Vec::with_capacity(n);
    let mut qp = q.to_vec();
    for i in 0..n {
        let qi = q[i];
        qp[i] = qi + h;
        let m_plus = mass_matrix(&qp, params);
        qp[i] = qi - h;
        let m_minus = mass_matrix(&qp, params);
        qp[i] = qi;
        let mut d = Mat::zeros(n, n);
        let denom = T::two() * h;
        for r in 0..n {
            for c in 0..n {
                d[(r, c)] = (m_plus[(r, c)] - m_minus[(r, c)]) / denom;
            }
        }
        dm.push(d);
    }
    let mut cmat = Mat::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for i in 0..n {
                let christoffel =
                    T::half() * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]);
                acc = acc + christoffel * qdot[i];
            }
            cmat[(k, j)] = acc;
        }
    }
    cmat
}

/// Joint accelerations from the equation of motion:
/// `q'' = M(q)^-1 (tau - C q' - D q' - eta - f_f)`.
pub fn forward_dynamics<T: Scalar>(
    state: &JointState<T>,
    tau: &[T],
    params: &DynamicsParams<T>,
) -> Result<Vec<T>, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFiniteInput("state"));
    }
    if !all_finite(tau) {
        return Err(DynamicsError::NonFiniteInput("tau"));
    }
    let n = state.dof();
    assert_eq!(tau.len(), n);
    assert_eq!(params.dof(), n);

    let m = mass_matrix(&state.q, params);
    let c = coriolis_matrix(&state.q, &state.qdot, params);
    let cv = c.matvec(&state.qdot);
    let d = damping_torques(&state.qdot, params);
    let f = friction_torques(&state.qdot, params);
    let eta = restoring_torques(&state.q, params);
    let rhs: Vec<T> = (0..n)
        .map(|i| tau[i] - cv[i] - d[i] - f[i] - eta[i])
        .collect();

    let l = m.cholesky().ok_or(DynamicsError::SingularDynamics { cond: f64::INFINITY })?;
    let mut dmin = l[(0, 0)];
    let mut dmax = l[(0, 0)];
    for i in 1..n {
        dmin = dmin.min(l[(i, i)]);
        dmax = dmax.max(l[(i, i)]);
    }
    let cond = (dmax / dmin).to_f64().unwrap().powi(2);
    if cond > MAX_CONDITION {
        return Err(DynamicsError::SingularDynamics { cond });
    }
    Ok(Mat::cholesky_solve(&l, &rhs))
}

/// A joint hitting its limit during integration; the position is clamped and
/// the velocity zeroed. Never silent: callers receive the full event list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub inner_step: usize,
    pub joint: usize,
    pub at_upper: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: JointState<T>,
    pub clamps: Vec<ClampEvent>,
}

/// Advance one control period under a zero-order-hold torque.
pub fn step<T: Scalar>(
    state: &JointState<T>,
    tau: &[T],
    params: &DynamicsParams<T>,
    cfg: &SimConfig<T>,
) -> Result<StepOutcome<T>, DynamicsError> {
    cfg.validate()?;
    let n = state.dof();
    let mut s = state.clone();
    let mut clamps = Vec::new();
    let dt = cfg.inner_dt;
    for inner in 0..cfg.inner_steps() {
        s = match cfg.integrator {
            Integrator::Rk4 => rk4_step(&s, tau, params, dt)?,
            Integrator::Euler => euler_step(&s, tau, params, dt)?,
        };
        if !s.is_finite() {
            return Err(DynamicsError::IntegrationDiverged { inner_step: inner });
        }
        for i in 0..n {
            let j = &params.joints[i];
            if s.q[i] < j.q_min {
                s.q[i] = j.q_min;
                s.qdot[i] = T::zero();
                clamps.push(ClampEvent { inner_step: inner, joint: i, at_upper: false });
            } else if s.q[i] > j.q_max {
                s.q[i] = j.q_max;
                s.qdot[i] = T::zero();
                clamps.push(ClampEvent { inner_step: inner, joint: i, at_upper: true });
            }
        }
    }
    Ok(StepOutcome { state: s, clamps })
}

fn deriv<T: Scalar>(
    s: &JointState<T>,
    tau: &[T],
    params: &DynamicsParams<T>,
) -> Result<(Vec<T>, Vec<T>), DynamicsError> {
    let qdd = forward_dynamics(s, tau, params)?;
    Ok((s.qdot.clone(), qdd))
}

fn euler_step<T: Scalar>(
    s: &JointState<T>,
    tau: &[T],
    params: &DynamicsParams<T>,
    dt: T,
) -> Result<JointState<T>, DynamicsError> {
    let (dq, dqd) = deriv(s, tau, params)?;
    Ok(JointState {
        q: add_scaled(&s.q, &dq, dt),
        qdot: add_scaled(&s.qdot, &dqd, dt),
    })
}

fn rk4_step<T: Scalar>(
    s: &JointState<T>,
    tau: &[T],
    params: &DynamicsParams<T>,
    dt: T,
) -> Result<JointState<T>, DynamicsError> {
    let half = dt * T::half();
    let (k1q, k1v) = deriv(s, tau, params)?;
    let s2 = JointState {
        q: add_scaled(&s.q, &k1q, half),
        qdot: add_scaled(&s.qdot, &k1v, half),
    };
    let (k2q, k2v) = deriv(&s2, tau, params)?;
    let s3 = JointState {
        q: add_scaled(&s.q, &k2q, half),
        qdot: add_scaled(&s.qdot, &k2v, half),
    };
    let (k3q, k3v) = deriv(&s3, tau, params)?;
    let s4 = JointState {
        q: add_scaled(&s.q, &k3q, dt),
        qdot: add_scaled(&s.qdot, &k3v, dt),
    };
    let (k4q, k4v) = deriv(&s4, tau, params)?;
    let sixth = dt / T::c(6.0);
    let combine = |y: &[T], k1: &[T], k2: &[T], k3: &[T], k4: &[T]| -> Vec<T> {
        (0..y.len())
            .map(|i| y[i] + sixth * (k1[i] + T::two() * k2[i] + T::two() * k3[i] + k4[i]))
            .collect()
    };
    Ok(JointState {
        q: combine(&s.q, &k1q, &k2q, &k3q, &k4q),
        qdot: combine(&s.qdot, &k1v, &k2v, &k3v, &k4v),
    })
}

fn add_scaled<T: Scalar>(a: &[T], b: &[T], s: T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

/// New parameters with the payload rigidly composited into the terminal link
/// (mass, COM shift, parallel-axis inertia, buoyancy volume). The original
/// parameters are unchanged.
pub fn attach_payload<T: Scalar>(
    params: &DynamicsParams<T>,
    payload: &PayloadSpec<T>,
) -> Result<DynamicsParams<T>, DynamicsError> {
    if payload.mass < T::zero() || payload.buoyancy_volume < T::zero() {
        return Err(DynamicsError::InvalidParams(
            "payload mass and volume must be non-negative".into(),
        ));
    }
    if payload.mass.to_f64().unwrap() > PAYLOAD_CAPACITY_KG {
        return Err(DynamicsError::CapacityExceeded {
            mass: payload.mass.to_f64().unwrap(),
            capacity: PAYLOAD_CAPACITY_KG,
        });
    }
    if payload.mass == T::zero() && payload.buoyancy_volume == T::zero() {
        return Ok(params.clone());
    }
    let mut out = params.clone();
    let link = out.links.last_mut().expect("validated non-empty");
    // point payload at distance (L + offset_x) along the terminal link axis
    let d = link.length + payload.offset[0];
    let m0 = link.mass;
    let c0 = link.com_offset;
    let m1 = m0 + payload.mass;
    let c1 = (m0 * c0 + payload.mass * d) / m1;
    let i1 = link.inertia
        + m0 * (c0 - c1) * (c0 - c1)
        + payload.mass * (d - c1) * (d - c1);
    link.mass = m1;
    link.com_offset = c1;
    link.inertia = i1;
    link.buoyancy_volume = link.buoyancy_volume + payload.buoyancy_volume;
    Ok(out)
}

/// Encoder model: zero-mean uniform bounded noise on q and qdot, drawn
/// deterministically from the seed.
pub fn sensed_state<T: Scalar>(state: &JointState<T>, cfg: &SimConfig<T>, rng_seed: u64) -> JointState<T> {
    if cfg.noise_q == T::zero() && cfg.noise_qdot == T::zero() {
        return state.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draw = |amp: T| -> T {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        amp * T::c(u)
    };
    let q = state.q.iter().map(|&x| x + draw(cfg.noise_q)).collect();
    let qdot = state.qdot.iter().map(|&x| x + draw(cfg.noise_qdot)).collect();
    JointState { q, qdot }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DynamicsParams<f64> {
        DynamicsParams::default_4dof()
    }

    #[test]
    fn default_params_validate() {
        params().validate().unwrap();
    }

    #[test]
    fn static_equilibrium_gives_zero_acceleration() {
        let p = params();
        let state = JointState::at_rest(vec![0.7, 1.1, 0.4, 0.9]);
        // hold torque exactly balancing restoring forces; friction is zero at rest
        let tau = restoring_torques(&state.q, &p);
        let qdd = forward_dynamics(&state, &tau, &p).unwrap();
        for a in qdd {
            assert!(a.abs() < 1e-12, "residual acceleration {a}");
        }
    }

    #[test]
    fn neutral_buoyancy_rest_is_equilibrium() {
        let mut p = params();
        // make each link exactly neutrally buoyant
        for l in &mut p.links {
            l.buoyancy_volume = l.mass / p.fluid_density;
        }
        let state = JointState::at_rest(vec![0.3, 0.8, 1.2, 0.5]);
        let qdd = forward_dynamics(&state, &[0.0; 4], &p).unwrap();
        for a in qdd {
            assert!(a.abs() < 1e-12);
        }
    }

    fn single_link_params(
        drag_linear: f64,
        drag_quadratic: f64,
        viscous: f64,
        coulomb: f64,
    ) -> DynamicsParams<f64> {
        DynamicsParams {
            links: vec![LinkParams {
                mass: 0.5,
                length: 0.3,
                com_offset: 0.17,
                inertia: 0.004,
                added_mass: 0.2,
                buoyancy_volume: 1.1e-4,
            }],
            joints: vec![JointParams {
                drag_linear,
                drag_quadratic,
                viscous_friction: viscous,
                armature: 0.01,
                coulomb_friction: coulomb,
                q_min: -10.0,
                q_max: 10.0,
                tau_min: -6.0,
                tau_max: 6.0,
            }],
            fluid_density: 1000.0,
            gravity: 9.81,
        }
    }

    /// Closed-form pendulum-with-drag oracle for the 1-link reduction.
    fn pendulum_oracle(p: &DynamicsParams<f64>, q: f64, qd: f64, tau: f64) -> f64 {
        let l = &p.links[0];
        let j = &p.joints[0];
        let m11 =
            (l.mass + l.added_mass) * l.com_offset * l.com_offset + l.inertia + p.joints[0].armature;
        let w = (l.mass - p.fluid_density * l.buoyancy_volume) * p.gravity;
        let drag = (j.drag_linear + j.drag_quadratic * qd.abs()) * qd;
        let fric = j.viscous_friction * qd + j.coulomb_friction * (qd / COULOMB_SMOOTHING).tanh();
        (tau - drag - fric - w * l.com_offset * q.cos()) / m11
    }

    #[test]
    fn single_link_matches_analytic_pendulum() {
        use rand::Rng;
        let p = single_link_params(0.3, 0.8, 0.05, 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let q = rng.gen_range(-3.0..3.0);
            let qd = rng.gen_range(-4.0..4.0);
            let tau = rng.gen_range(-6.0..6.0);
            let state = JointState::new(vec![q], vec![qd]);
            let got = forward_dynamics(&state, &[tau], &p).unwrap()[0];
            let want = pendulum_oracle(&p, q, qd, tau);
            worst = worst.max((got - want).abs());
        }
        assert!(worst < 1e-9, "max deviation {worst:.3e}");
    }

    #[test]
    fn zero_torque_rest_unchanged_when_neutral_and_frictionless() {
        let mut p = params();
        for l in &mut p.links {
            l.buoyancy_volume = l.mass / p.fluid_density;
        }
        for j in &mut p.joints {
            j.viscous_friction = 0.0;
            j.coulomb_friction = 0.0;
        }
        let cfg = SimConfig::default();
        let s0 = JointState::at_rest(vec![1.0, 0.5, 1.5, 2.0]);
        let out = step(&s0, &[0.0; 4], &p, &cfg).unwrap();
        assert!(out.clamps.is_empty());
        for i in 0..4 {
            assert!((out.state.q[i] - s0.q[i]).abs() < 1e-14);
            assert!(out.state.qdot[i].abs() < 1e-14);
        }
    }

    #[test]
    fn step_converges_under_inner_step_halving() {
        let p = params();
        let s0 = JointState::at_rest(vec![0.6, 1.0, 1.2, 0.8]);
        let tau = [1.0, 0.5, -0.4, 0.2];
        let run = |inner_dt: f64| -> JointState<f64> {
            let cfg = SimConfig { inner_dt, ..SimConfig::default() };
            let mut s = s0.clone();
            for _ in 0..20 {
                // 1 s total
                s = step(&s, &tau, &p, &cfg).unwrap().state;
            }
            s
        };
        let coarse = run(0.005);
        let fine = run(0.0025);
        for i in 0..4 {
            assert!((coarse.q[i] - fine.q[i]).abs() < 1e-6);
            assert!((coarse.qdot[i] - fine.qdot[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn undamped_single_link_conserves_energy() {
        let p = single_link_params(0.0, 0.0, 0.0, 0.0);
        let l = &p.links[0];
        let m11 =
            (l.mass + l.added_mass) * l.com_offset * l.com_offset + l.inertia + p.joints[0].armature;
        let w = (l.mass - p.fluid_density * l.buoyancy_volume) * p.gravity;
        let energy = |s: &JointState<f64>| -> f64 {
            0.5 * m11 * s.qdot[0] * s.qdot[0] + w * l.com_offset * s.q[0].sin()
        };
        let cfg = SimConfig {
            inner_dt: 1e-3,
            control_period: 0.05,
            ..SimConfig::default()
        };
        let mut s = JointState::new(vec![1.2], vec![0.0]);
        let e0 = energy(&s);
        // scale for relative drift: energy above the potential minimum
        let scale = e0 + w.abs() * l.com_offset;
        for _ in 0..200 {
            // 10 s
            s = step(&s, &[0.0], &p, &cfg).unwrap().state;
        }
        let drift = (energy(&s) - e0).abs() / scale.abs();
        assert!(drift < 1e-3, "energy drift {drift:.3e}");
    }

    #[test]
    fn attach_zero_payload_is_bit_identical() {
        let p = params();
        let out = attach_payload(&p, &PayloadSpec::none()).unwrap();
        assert_eq!(p, out);
    }

    #[test]
    fn attach_point_payload_at_tip_center() {
        // 0.5 kg point payload at zero EE offset: mass adds, COM shifts,
        // inertia about the new COM follows the two-point parallel-axis sum
        let p = params();
        let payload = PayloadSpec {
            mass: 0.5,
            buoyancy_volume: 0.0,
            offset: [0.0; 3],
            label: "test".into(),
        };
        let out = attach_payload(&p, &payload).unwrap();
        let a = p.links.last().unwrap();
        let b = out.links.last().unwrap();
        assert!((b.mass - (a.mass + 0.5)).abs() < 1e-15);
        let d = a.length; // payload sits at the link tip
        let c1 = (a.mass * a.com_offset + 0.5 * d) / b.mass;
        assert!((b.com_offset - c1).abs() < 1e-15);
        let i1 = a.inertia
            + a.mass * (a.com_offset - c1).powi(2)
            + 0.5 * (d - c1).powi(2);
        assert!((b.inertia - i1).abs() < 1e-15);
    }

    #[test]
    fn attach_offset_payload_matches_two_point_oracle() {
        let p = params();
        let payload = PayloadSpec {
            mass: 1.0,
            buoyancy_volume: 1.28e-4,
            offset: [0.1, 0.0, 0.0],
            label: "weights".into(),
        };
        let out = attach_payload(&p, &payload).unwrap();
        let a = p.links.last().unwrap();
        let b = out.links.last().unwrap();
        // independent two-point composite-body computation
        let d = a.length + 0.1;
        let m1 = a.mass + 1.0;
        let c1 = (a.mass * a.com_offset + 1.0 * d) / m1;
        let i1 = a.inertia + a.mass * (a.com_offset - c1).powi(2) + 1.0 * (d - c1).powi(2);
        assert!((b.mass - m1).abs() < 1e-15);
        assert!((b.com_offset - c1).abs() < 1e-15);
        assert!((b.inertia - i1).abs() < 1e-12);
        assert!((b.buoyancy_volume - (a.buoyancy_volume + 1.28e-4)).abs() < 1e-18);
    }

    #[test]
    fn attach_rejects_over_capacity() {
        let p = params();
        let payload = PayloadSpec {
            mass: 2.5,
            buoyancy_volume: 0.0,
            offset: [0.0; 3],
            label: "too heavy".into(),
        };
        assert!(matches!(
            attach_payload(&p, &payload),
            Err(DynamicsError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn sensed_state_zero_noise_is_identity() {
        let cfg = SimConfig { noise_q: 0.0, noise_qdot: 0.0, ..SimConfig::default() };
        let s = JointState::new(vec![1.0, 2.0, 0.5, 0.2], vec![0.1, -0.2, 0.0, 0.4]);
        assert_eq!(sensed_state(&s, &cfg, 42), s);
    }

    #[test]
    fn sensed_state_is_deterministic_per_seed() {
        let cfg = SimConfig::<f64>::default();
        let s = JointState::new(vec![1.0, 2.0, 0.5, 0.2], vec![0.1, -0.2, 0.0, 0.4]);
        let a = sensed_state(&s, &cfg, 99);
        let b = sensed_state(&s, &cfg, 99);
        assert_eq!(a, b);
        let c = sensed_state(&s, &cfg, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn sensed_state_noise_amplitude_is_tight() {
        let amp = 0.1f64.to_radians();
        let cfg = SimConfig { noise_q: amp, noise_qdot: 0.0, ..SimConfig::default() };
        let s = JointState::at_rest(vec![0.0]);
        let mut max_dev = 0.0f64;
        for seed in 0..100_000u64 {
            let n = sensed_state(&s, &cfg, seed);
            max_dev = max_dev.max(n.q[0].abs());
            assert!(n.q[0].abs() <= amp + 1e-15);
        }
        assert!(max_dev >= 0.099f64.to_radians(), "max {max_dev}");
    }

    #[test]
    fn step_clamps_at_joint_limit_and_reports() {
        let p = params();
        let cfg = SimConfig::default();
        // near the upper limit, push hard into it
        let s0 = JointState::at_rest(vec![3.49, 1.0, 1.0, 1.0]);
        let out = step(&s0, &[6.0, 0.0, 0.0, 0.0], &p, &cfg).unwrap();
        assert!(out.clamps.iter().any(|c| c.joint == 0 && c.at_upper));
        assert_eq!(out.state.q[0], 3.5);
        assert_eq!(out.state.qdot[0], 0.0);
    }

    #[test]
    fn invalid_sim_config_rejected() {
        let bad = SimConfig { inner_dt: 0.004, control_period: 0.05, ..SimConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad2 = SimConfig { inner_dt: 0.1, control_period: 0.05, ..SimConfig::<f64>::default() };
        assert!(bad2.validate().is_err());
    }
}
