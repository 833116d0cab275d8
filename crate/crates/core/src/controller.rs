//! Receding-horizon controller: each control period it rolls the learned
//! delta-state model over an N-step horizon, evaluates the tracking cost
//! (position, velocity, command-variation, and integral terms with diagonal
//! time-varying weights), solves the constrained problem with the
//! derivative-free optimizer, and applies the first move.

use std::cell::RefCell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::JointState;
use crate::nn::{self, NetworkParams};
use crate::optim::{self, OptProblem, Termination};
use crate::scalar::{all_finite, weighted_sq_norm, Scalar};

/// Cost substituted when the model rollout diverges; the solve continues and
/// steers away from the region.
const DIVERGED_COST: f64 = 1e30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights<T> {
    /// Position-tracking diagonal (positive).
    pub q1: Vec<T>,
    /// Velocity-tracking diagonal (positive).
    pub q2: Vec<T>,
    /// Move-suppression diagonal on `delta u` (non-negative).
    pub r: Vec<T>,
    /// Integral-term diagonal (non-negative).
    pub p: Vec<T>,
    /// Horizon steps N.
    pub horizon: usize,
    /// Integral step `delta l`, s (the control period).
    pub integral_dt: T,
}

impl<T: Scalar> CostWeights<T> {
    /// Defaults tuned against the stock plant: stiff position tracking, and a
    /// strong integral diagonal paired with a tight anti-windup clamp so the
    /// bounded integral authority cancels unknown-payload torque bias quickly
    /// instead of winding up during large transients.
    pub fn default_4dof() -> Self {
        CostWeights {
            q1: vec![T::c(80.0), T::c(90.0), T::c(80.0), T::c(80.0)],
            q2: vec![T::one(), T::one(), T::one(), T::two()],
            r: vec![T::c(0.1); 4],
            p: vec![T::c(800.0), T::c(350.0), T::c(400.0), T::c(600.0)],
            horizon: 7,
            integral_dt: T::c(0.05),
        }
    }

    pub fn validate(&self, dof: usize) -> Result<(), CtrlError> {
        let lens_ok = self.q1.len() == dof
            && self.q2.len() == dof
            && self.r.len() == dof
            && self.p.len() == dof;
        if !lens_ok {
            return Err(CtrlError::Config("weight diagonal length mismatch".into()));
        }
        if self.horizon == 0 || !(self.integral_dt > T::zero()) {
            return Err(CtrlError::Config("horizon must be >= 1 and dt > 0".into()));
        }
        if self.q1.iter().any(|&w| !(w > T::zero())) || self.q2.iter().any(|&w| !(w > T::zero())) {
            return Err(CtrlError::Config("Q1 and Q2 diagonals must be positive".into()));
        }
        if self.r.iter().any(|&w| w < T::zero()) || self.p.iter().any(|&w| w < T::zero()) {
            return Err(CtrlError::Config("R and P diagonals must be non-negative".into()));
        }
        if !all_finite(&self.q1) || !all_finite(&self.q2) || !all_finite(&self.r) || !all_finite(&self.p) {
            return Err(CtrlError::Config("weights must be finite".into()));
        }
        Ok(())
    }

    /// All diagonals scaled by the same factor; the argmin is unchanged.
    fn scaled(&self, s: T) -> CostWeights<T> {
        let mul = |v: &[T]| v.iter().map(|&x| x * s).collect();
        CostWeights {
            q1: mul(&self.q1),
            q2: mul(&self.q2),
            r: mul(&self.r),
            p: mul(&self.p),
            horizon: self.horizon,
            integral_dt: self.integral_dt,
        }
    }
}

/// Time-resolved weight selection; total over all times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSchedule<T> {
    Constant(CostWeights<T>),
    /// Entries `(start_time_s, weights)` sorted ascending; the active entry
    /// is the last one whose start time is `<= t`. The first entry must
    /// start at or before t = 0 so every time resolves.
    Timed(Vec<(T, CostWeights<T>)>),
}

impl<T: Scalar> WeightSchedule<T> {
    pub fn at(&self, t: T) -> &CostWeights<T> {
        match self {
            WeightSchedule::Constant(w) => w,
            WeightSchedule::Timed(entries) => {
                let mut chosen = &entries[0].1;
                for (start, w) in entries {
                    if *start <= t {
                        chosen = w;
                    }
                }
                chosen
            }
        }
    }

    pub fn validate(&self, dof: usize) -> Result<(), CtrlError> {
        match self {
            WeightSchedule::Constant(w) => w.validate(dof),
            WeightSchedule::Timed(entries) => {
                if entries.is_empty() {
                    return Err(CtrlError::Config("empty weight schedule".into()));
                }
                if entries[0].0 > T::zero() {
                    return Err(CtrlError::Config(
                        "first schedule entry must start at or before t = 0".into(),
                    ));
                }
                for (_, w) in entries {
                    w.validate(dof)?;
                }
                Ok(())
            }
        }
    }
}

/// Joint and torque boxes the controller enforces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits<T> {
    pub q_min: Vec<T>,
    pub q_max: Vec<T>,
    pub tau_min: Vec<T>,
    pub tau_max: Vec<T>,
}

impl<T: Scalar> Limits<T> {
    pub fn from_params(params: &crate::dynamics::DynamicsParams<T>) -> Self {
        Limits {
            q_min: params.joints.iter().map(|j| j.q_min).collect(),
            q_max: params.joints.iter().map(|j| j.q_max).collect(),
            tau_min: params.joints.iter().map(|j| j.tau_min).collect(),
            tau_max: params.joints.iter().map(|j| j.tau_max).collect(),
        }
    }

    pub fn dof(&self) -> usize {
        self.q_min.len()
    }

    fn tau_mid_half(&self, i: usize) -> (T, T) {
        let mid = (self.tau_max[i] + self.tau_min[i]) * T::half();
        let half = (self.tau_max[i] - self.tau_min[i]) * T::half();
        (mid, half)
    }

    pub fn clamp_tau(&self, u: &mut [T]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = (*v).max(self.tau_min[i]).min(self.tau_max[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    pub max_evals: usize,
    pub rho_start: T,
    pub rho_end: T,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        OptimizerConfig {
            max_evals: 200,
            rho_start: T::c(0.5),
            rho_end: T::c(1e-3),
        }
    }
}

/// Per-instance controller state. One instance is a single-threaded state
/// machine; `control_step` calls must be externally serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T> {
    /// Accumulated position-error integral, rad s, clamped to `antiwindup`.
    pub integral: Vec<T>,
    /// Previously applied command.
    pub prev_u: Vec<T>,
    /// Previous solution in torque units, one vector per move block; the
    /// block pattern expands it to the N-step sequence.
    pub prev_plan: Vec<Vec<T>>,
    pub ref_q: Vec<T>,
    pub ref_qd: Vec<T>,
    /// Controller time, s; advanced by the integral step each control step.
    pub time: T,
    /// Anti-windup bound on each |integral| component.
    pub antiwindup: T,
    /// When set, predicted position errors accrue into the integral over the
    /// horizon so the integral term influences the optimal action.
    pub integral_continuation: bool,
    /// Number of distinct move blocks (the rest of the horizon holds the
    /// last block).
    pub move_blocks: usize,
}

impl<T: Scalar> ControllerState<T> {
    pub fn new(dof: usize, move_blocks: usize) -> Self {
        ControllerState {
            integral: vec![T::zero(); dof],
            prev_u: vec![T::zero(); dof],
            prev_plan: vec![vec![T::zero(); dof]; move_blocks.max(1)],
            ref_q: vec![T::zero(); dof],
            ref_qd: vec![T::zero(); dof],
            time: T::zero(),
            antiwindup: T::c(0.1),
            integral_continuation: true,
            move_blocks: move_blocks.max(1),
        }
    }

    pub fn dof(&self) -> usize {
        self.integral.len()
    }
}

#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub evals: usize,
    pub constraint_evals: usize,
    pub termination: &'static str,
    /// Objective at the warm start, unscaled weights.
    pub initial_objective: f64,
    /// Objective at the returned plan, unscaled weights.
    pub final_objective: f64,
    pub fallback: bool,
    pub solve_time_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CtrlError {
    #[error("non-finite measurement")]
    NonFiniteMeasurement,
    #[error("reference outside the joint box (joint {joint})")]
    ReferenceOutOfBounds { joint: usize },
    #[error("controller config error: {0}")]
    Config(String),
}

/// Single-stage tracking cost: `||r_q - q||^2_Q1 + ||r_qd - qd||^2_Q2 +
/// ||u_k - u_prev||^2_R`, diagonal weights.
pub fn stage_cost<T: Scalar>(
    predicted: &JointState<T>,
    r_q: &[T],
    r_qd: &[T],
    u_k: &[T],
    u_prev: &[T],
    w: &CostWeights<T>,
) -> T {
    let eq: Vec<T> = r_q.iter().zip(&predicted.q).map(|(&r, &q)| r - q).collect();
    let ev: Vec<T> = r_qd.iter().zip(&predicted.qdot).map(|(&r, &v)| r - v).collect();
    let du: Vec<T> = u_k.iter().zip(u_prev).map(|(&a, &b)| a - b).collect();
    weighted_sq_norm(&w.q1, &eq) + weighted_sq_norm(&w.q2, &ev) + weighted_sq_norm(&w.r, &du)
}

fn clamp_vec<T: Scalar>(v: &mut [T], bound: T) {
    for x in v.iter_mut() {
        *x = (*x).max(-bound).min(bound);
    }
}

/// Horizon cost handed to the optimizer: stage costs over the model rollout
/// plus the integral term. The integral term is the P-weighted squared norm
/// of the running error integral: its value at the current time (a constant
/// within one solve) plus, when continuation is enabled, its accrual over
/// the predicted horizon, which makes P influence the optimal action.
///
/// A diverged rollout yields a finite worst-case cost so the solve continues.
pub fn horizon_cost<T: Scalar>(
    net: &NetworkParams<T>,
    ctl: &ControllerState<T>,
    state: &JointState<T>,
    u_seq: &[Vec<T>],
    w: &CostWeights<T>,
) -> T {
    debug_assert_eq!(u_seq.len(), w.horizon);
    let states = match nn::rollout(net, state, u_seq) {
        Ok(s) => s,
        Err(_) => return T::c(DIVERGED_COST),
    };
    let mut cost = T::zero();
    let mut u_prev = ctl.prev_u.clone();
    for (k, s) in states.iter().enumerate() {
        cost = cost + stage_cost(s, &ctl.ref_q, &ctl.ref_qd, &u_seq[k], &u_prev, w);
        u_prev = u_seq[k].clone();
    }
    // integral term
    let mut e = ctl.integral.clone();
    cost = cost + weighted_sq_norm(&w.p, &e);
    if ctl.integral_continuation {
        for s in &states {
            for (ei, (&r, &q)) in e.iter_mut().zip(ctl.ref_q.iter().zip(&s.q)) {
                *ei = *ei + (r - q) * w.integral_dt;
            }
            clamp_vec(&mut e, ctl.antiwindup);
            cost = cost + weighted_sq_norm(&w.p, &e);
        }
    }
    if !cost.is_finite() {
        return T::c(DIVERGED_COST);
    }
    cost
}

/// Expand move blocks to the N-step command sequence: step k uses block
/// `min(k, blocks - 1)`.
pub fn expand_blocks<T: Scalar>(blocks: &[Vec<T>], horizon: usize) -> Vec<Vec<T>> {
    (0..horizon)
        .map(|k| blocks[k.min(blocks.len() - 1)].clone())
        .collect()
}

fn blocks_to_decision<T: Scalar>(blocks: &[Vec<T>], limits: &Limits<T>) -> Vec<T> {
    let mut z = Vec::with_capacity(blocks.len() * limits.dof());
    for b in blocks {
        for (i, &u) in b.iter().enumerate() {
            let (mid, half) = limits.tau_mid_half(i);
            let zi = if half > T::zero() { (u - mid) / half } else { T::zero() };
            z.push(zi.max(-T::one()).min(T::one()));
        }
    }
    z
}

/// Unclamped mapping used inside the solve: the cost must keep a gradient
/// past the box edge or a corner incumbent would look locally flat; the
/// z-box constraints pull the solution back inside.
fn decision_to_blocks_raw<T: Scalar>(z: &[T], limits: &Limits<T>, n_blocks: usize) -> Vec<Vec<T>> {
    let dof = limits.dof();
    (0..n_blocks)
        .map(|b| {
            (0..dof)
                .map(|i| {
                    let (mid, half) = limits.tau_mid_half(i);
                    mid + z[b * dof + i] * half
                })
                .collect()
        })
        .collect()
}

fn decision_to_blocks<T: Scalar>(z: &[T], limits: &Limits<T>, n_blocks: usize) -> Vec<Vec<T>> {
    let dof = limits.dof();
    (0..n_blocks)
        .map(|b| {
            (0..dof)
                .map(|i| {
                    let (mid, half) = limits.tau_mid_half(i);
                    mid + z[b * dof + i].max(-T::one()).min(T::one()) * half
                })
                .collect()
        })
        .collect()
}

/// One control period: update the integral error, solve the horizon problem
/// warm-started from the shifted previous solution, and return the first
/// move (always clamped into the torque box).
pub fn control_step<T: Scalar>(
    net: &NetworkParams<T>,
    ctl: &mut ControllerState<T>,
    measured: &JointState<T>,
    w_sched: &WeightSchedule<T>,
    limits: &Limits<T>,
    opt_cfg: &OptimizerConfig<T>,
) -> Result<(Vec<T>, StepDiagnostics), CtrlError> {
    let dof = ctl.dof();
    if measured.dof() != dof || limits.dof() != dof {
        return Err(CtrlError::Config("dimension mismatch".into()));
    }
    if !measured.is_finite() {
        return Err(CtrlError::NonFiniteMeasurement);
    }
    w_sched.validate(dof)?;
    let w = w_sched.at(ctl.time).clone();

    // integral update from the measurement, with anti-windup
    for (ei, (&r, &q)) in ctl.integral.iter_mut().zip(ctl.ref_q.iter().zip(&measured.q)) {
        *ei = *ei + (r - q) * w.integral_dt;
    }
    clamp_vec(&mut ctl.integral, ctl.antiwindup);

    // normalize the weights so the solve is invariant to uniform scaling
    let wsum: T = w.q1.iter().copied().sum();
    let scale = wsum / T::from_usize(w.q1.len()).unwrap();
    let wn = w.scaled(T::one() / scale);

    let n_blocks = ctl.move_blocks.min(w.horizon);
    let dim = n_blocks * dof;

    // warm start: previous solution shifted by one period
    let shifted: Vec<Vec<T>> = (0..n_blocks)
        .map(|j| ctl.prev_plan[(j + 1).min(ctl.prev_plan.len() - 1)].clone())
        .collect();
    let z0 = blocks_to_decision(&shifted, limits);

    let started = Instant::now();
    // memoized rollout shared by the objective and the state constraints
    type Memo<T> = RefCell<Option<(Vec<T>, Option<Vec<JointState<T>>>)>>;
    let memo: Memo<T> = RefCell::new(None);
    let rollout_for = |z: &[T]| -> Option<Vec<JointState<T>>> {
        {
            let cached = memo.borrow();
            if let Some((key, states)) = cached.as_ref() {
                if key.as_slice() == z {
                    return states.clone();
                }
            }
        }
        let blocks = decision_to_blocks_raw(z, limits, n_blocks);
        let u_seq = expand_blocks(&blocks, w.horizon);
        let states = nn::rollout(net, measured, &u_seq).ok();
        *memo.borrow_mut() = Some((z.to_vec(), states.clone()));
        states
    };

    let ctl_snapshot = ctl.clone();
    let objective = |z: &[T]| -> T {
        let blocks = decision_to_blocks_raw(z, limits, n_blocks);
        let u_seq = expand_blocks(&blocks, w.horizon);
        horizon_cost(net, &ctl_snapshot, measured, &u_seq, &wn)
    };

    let mut constraints: Vec<Box<dyn Fn(&[T]) -> T + '_>> = Vec::new();
    // decision-box constraints: z in [-1, 1] encodes u in the torque box
    for i in 0..dim {
        constraints.push(Box::new(move |z: &[T]| T::one() - z[i]));
        constraints.push(Box::new(move |z: &[T]| z[i] + T::one()));
    }
    // predicted joint positions inside the joint box at every horizon step
    for k in 0..w.horizon {
        for i in 0..dof {
            let (qmin, qmax) = (limits.q_min[i], limits.q_max[i]);
            let r = &rollout_for;
            constraints.push(Box::new(move |z: &[T]| match r(z) {
                Some(states) => qmax - states[k].q[i],
                None => T::c(-DIVERGED_COST),
            }));
            let r = &rollout_for;
            constraints.push(Box::new(move |z: &[T]| match r(z) {
                Some(states) => states[k].q[i] - qmin,
                None => T::c(-DIVERGED_COST),
            }));
        }
    }

    let problem = OptProblem {
        dim,
        objective: Box::new(objective),
        constraints,
        initial: z0.clone(),
        rho_start: opt_cfg.rho_start,
        rho_end: opt_cfg.rho_end,
        max_evals: opt_cfg.max_evals,
    };
    let solve = optim::minimize(&problem);
    let solve_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let unscaled_obj = |z: &[T]| -> f64 {
        let blocks = decision_to_blocks(z, limits, n_blocks);
        let u_seq = expand_blocks(&blocks, w.horizon);
        horizon_cost(net, &ctl_snapshot, measured, &u_seq, &w)
            .to_f64()
            .unwrap_or(f64::NAN)
    };

    match solve {
        Ok(result) => {
            let blocks = decision_to_blocks(&result.best, limits, n_blocks);
            let mut u = blocks[0].clone();
            limits.clamp_tau(&mut u); // hard guarantee, independent of the solver
            let diag = StepDiagnostics {
                evals: result.evals,
                constraint_evals: result.constraint_evals,
                termination: result.termination.as_str(),
                initial_objective: unscaled_obj(&z0),
                final_objective: unscaled_obj(&result.best),
                fallback: false,
                solve_time_ms,
            };
            ctl.prev_plan = blocks;
            ctl.prev_u = u.clone();
            ctl.time = ctl.time + w.integral_dt;
            Ok((u, diag))
        }
        Err(_) => {
            // fail-safe hold: repeat the previous applied command
            let mut u = ctl.prev_u.clone();
            limits.clamp_tau(&mut u);
            let diag = StepDiagnostics {
                evals: 0,
                constraint_evals: 0,
                termination: Termination::Stall.as_str(),
                initial_objective: unscaled_obj(&z0),
                final_objective: unscaled_obj(&z0),
                fallback: true,
                solve_time_ms,
            };
            ctl.prev_u = u.clone();
            ctl.time = ctl.time + w.integral_dt;
            Ok((u, diag))
        }
    }
}

/// Update the reference; the integral state persists unless `reset_integral`.
pub fn set_reference<T: Scalar>(
    ctl: &mut ControllerState<T>,
    r_q: &[T],
    r_qd: &[T],
    limits: &Limits<T>,
    reset_integral: bool,
) -> Result<(), CtrlError> {
    for (i, &r) in r_q.iter().enumerate() {
        if r < limits.q_min[i] || r > limits.q_max[i] {
            return Err(CtrlError::ReferenceOutOfBounds { joint: i });
        }
    }
    ctl.ref_q = r_q.to_vec();
    ctl.ref_qd = r_qd.to_vec();
    if reset_integral {
        for e in &mut ctl.integral {
            *e = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_net(dof: usize) -> NetworkParams<f64> {
        let mut net = NetworkParams::init(dof, &[25, 25], 0);
        let flat = vec![0.0; net.param_count()];
        net.set_from_flat(&flat);
        net
    }

    fn limits4() -> Limits<f64> {
        Limits {
            q_min: vec![0.0; 4],
            q_max: vec![3.5; 4],
            tau_min: vec![-6.0; 4],
            tau_max: vec![6.0; 4],
        }
    }

    #[test]
    fn stage_cost_zero_at_reference() {
        let w = CostWeights::default_4dof();
        let s = JointState::new(vec![1.0; 4], vec![0.0; 4]);
        let c = stage_cost(&s, &[1.0; 4], &[0.0; 4], &[0.5; 4], &[0.5; 4], &w);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn stage_cost_direct_norm() {
        let mut w: CostWeights<f64> = CostWeights::default_4dof();
        w.q1 = vec![1.0; 4];
        w.q2 = vec![0.0; 4];
        w.r = vec![0.0; 4];
        let s = JointState::new(vec![0.9, 1.0, 1.0, 1.0], vec![0.3; 4]);
        let c = stage_cost(&s, &[1.0; 4], &[0.0; 4], &[2.0; 4], &[0.0; 4], &w);
        assert!((c - 0.01).abs() < 1e-15);
    }

    #[test]
    fn stage_cost_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let rv = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()
            };
            let w = CostWeights {
                q1: (0..4).map(|_| rng.gen_range(0.1..5.0)).collect(),
                q2: (0..4).map(|_| rng.gen_range(0.1..5.0)).collect(),
                r: (0..4).map(|_| rng.gen_range(0.0..2.0)).collect(),
                p: vec![0.0; 4],
                horizon: 7,
                integral_dt: 0.05,
            };
            let q = rv(&mut rng);
            let qd = rv(&mut rng);
            let r_q = rv(&mut rng);
            let r_qd = rv(&mut rng);
            let u = rv(&mut rng);
            let up = rv(&mut rng);
            let s = JointState::new(q.clone(), qd.clone());
            let got = stage_cost(&s, &r_q, &r_qd, &u, &up, &w);
            // independently coded scalar loop
            let mut want = 0.0;
            for i in 0..4 {
                want += w.q1[i] * (r_q[i] - q[i]).powi(2);
                want += w.q2[i] * (r_qd[i] - qd[i]).powi(2);
                want += w.r[i] * (u[i] - up[i]).powi(2);
            }
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_cost_zero_when_converged() {
        let net = zero_net(4);
        let mut ctl = ControllerState::new(4, 3);
        ctl.ref_q = vec![1.0; 4];
        let state = JointState::new(vec![1.0; 4], vec![0.0; 4]);
        let w = CostWeights::default_4dof();
        let u_seq = vec![vec![0.0; 4]; w.horizon];
        assert_eq!(horizon_cost(&net, &ctl, &state, &u_seq, &w), 0.0);
    }

    #[test]
    fn horizon_cost_n1_equals_stage_plus_integral() {
        let net: NetworkParams<f64> = NetworkParams::init(4, &[25, 25], 9);
        let mut ctl = ControllerState::new(4, 1);
        ctl.ref_q = vec![1.0, 1.2, 0.8, 0.5];
        ctl.integral = vec![0.1, -0.2, 0.05, 0.0];
        ctl.prev_u = vec![0.3; 4];
        let state = JointState::new(vec![0.5; 4], vec![0.1; 4]);
        let mut w = CostWeights::default_4dof();
        w.horizon = 1;
        let u_seq = vec![vec![1.0, -0.5, 0.2, 0.0]];
        let got = horizon_cost(&net, &ctl, &state, &u_seq, &w);
        // hand-composed: single predicted state
        let pred = crate::nn::rollout(&net, &state, &u_seq).unwrap();
        let stage = stage_cost(&pred[0], &ctl.ref_q, &ctl.ref_qd, &u_seq[0], &ctl.prev_u, &w);
        let mut e = ctl.integral.clone();
        let mut integral = weighted_sq_norm(&w.p, &e);
        for i in 0..4 {
            e[i] += (ctl.ref_q[i] - pred[0].q[i]) * w.integral_dt;
            e[i] = e[i].clamp(-ctl.antiwindup, ctl.antiwindup);
        }
        integral += weighted_sq_norm(&w.p, &e);
        assert!((got - (stage + integral)).abs() < 1e-12);
    }

    #[test]
    fn horizon_cost_hand_expansion_1dof_n2() {
        // 1-DOF toy, N = 2: expand the sum by hand with an arbitrary net
        let net: NetworkParams<f64> = NetworkParams::init(1, &[4], 3);
        let mut ctl = ControllerState::new(1, 2);
        ctl.ref_q = vec![0.8];
        ctl.ref_qd = vec![0.0];
        ctl.integral = vec![0.3];
        ctl.antiwindup = 2.0;
        ctl.prev_u = vec![0.2];
        let state = JointState::new(vec![0.5], vec![0.1]);
        let w = CostWeights {
            q1: vec![2.0],
            q2: vec![0.7],
            r: vec![0.4],
            p: vec![0.9],
            horizon: 2,
            integral_dt: 0.05,
        };
        let u_seq = vec![vec![0.6], vec![-0.3]];
        let got = horizon_cost(&net, &ctl, &state, &u_seq, &w);

        let s = crate::nn::rollout(&net, &state, &u_seq).unwrap();
        let mut want = 0.0;
        want += 2.0 * (0.8 - s[0].q[0]).powi(2)
            + 0.7 * (0.0 - s[0].qdot[0]).powi(2)
            + 0.4 * (0.6f64 - 0.2).powi(2);
        want += 2.0 * (0.8 - s[1].q[0]).powi(2)
            + 0.7 * (0.0 - s[1].qdot[0]).powi(2)
            + 0.4 * (-0.3f64 - 0.6).powi(2);
        let e0 = 0.3;
        let e1 = (e0 + (0.8 - s[0].q[0]) * 0.05).clamp(-2.0, 2.0);
        let e2 = (e1 + (0.8 - s[1].q[0]) * 0.05).clamp(-2.0, 2.0);
        want += 0.9 * (e0 * e0 + e1 * e1 + e2 * e2);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn control_step_at_reference_returns_zero_command() {
        let net = zero_net(4);
        let limits = limits4();
        let mut ctl = ControllerState::new(4, 3);
        let state = JointState::new(vec![1.0; 4], vec![0.0; 4]);
        set_reference(&mut ctl, &state.q, &[0.0; 4], &limits, false).unwrap();
        let sched = WeightSchedule::Constant(CostWeights::default_4dof());
        let (u, diag) = control_step(
            &net,
            &mut ctl,
            &state,
            &sched,
            &limits,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(!diag.fallback);
        for ui in u {
            assert!(ui.abs() < 1e-9, "u = {ui}");
        }
    }

    #[test]
    fn control_step_matches_grid_oracle_1dof() {
        // same model for controller and oracle; N = 2, two free moves
        let net = NetworkParams::init(1, &[8], 7);
        let limits = Limits {
            q_min: vec![-10.0],
            q_max: vec![10.0],
            tau_min: vec![-1.0],
            tau_max: vec![1.0],
        };
        let w = CostWeights {
            q1: vec![5.0],
            q2: vec![1.0],
            r: vec![0.1],
            p: vec![0.2],
            horizon: 2,
            integral_dt: 0.05,
        };
        w.validate(1).unwrap();
        let mut ctl = ControllerState::new(1, 2);
        ctl.ref_q = vec![0.5];
        let measured = JointState::new(vec![0.1], vec![0.0]);
        let opt_cfg = OptimizerConfig {
            max_evals: 400,
            rho_start: 0.5,
            rho_end: 1e-5,
        };
        let sched = WeightSchedule::Constant(w.clone());
        let mut ctl2 = ctl.clone();
        let (_u, _diag) =
            control_step(&net, &mut ctl2, &measured, &sched, &limits, &opt_cfg).unwrap();
        // evaluate the solved plan's cost with the pre-step controller state
        let mut ctl_eval = ctl.clone();
        for (e, (&r, &q)) in ctl_eval
            .integral
            .iter_mut()
            .zip(ctl.ref_q.iter().zip(&measured.q))
        {
            *e += (r - q) * w.integral_dt;
        }
        let plan_cost = horizon_cost(
            &net,
            &ctl_eval,
            &measured,
            &expand_blocks(&ctl2.prev_plan, 2),
            &w,
        );
        // brute-force grid at 1e-2 resolution over the torque box
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let u0 = -1.0 + 0.01 * i as f64;
                let u1 = -1.0 + 0.01 * j as f64;
                let c = horizon_cost(&net, &ctl_eval, &measured, &[vec![u0], vec![u1]], &w);
                best = best.min(c);
            }
        }
        assert!(
            plan_cost <= best + 1e-3,
            "plan cost {plan_cost}, grid best {best}"
        );
    }

    #[test]
    fn predicted_plan_respects_joint_box_near_limit() {
        // small-delta net, state near the upper limit, reference beyond it
        let mut net = NetworkParams::init(1, &[8], 5);
        net.output_scale = vec![0.02, 0.05];
        let limits = Limits {
            q_min: vec![0.0],
            q_max: vec![1.0],
            tau_min: vec![-1.0],
            tau_max: vec![1.0],
        };
        let mut ctl = ControllerState::new(1, 3);
        ctl.ref_q = vec![1.0]; // at the boundary (in-box), pushes toward it
        let measured = JointState::new(vec![0.995], vec![0.0]);
        let w = CostWeights {
            q1: vec![50.0],
            q2: vec![0.1],
            r: vec![0.01],
            p: vec![0.0],
            horizon: 5,
            integral_dt: 0.05,
        };
        let sched = WeightSchedule::Constant(w.clone());
        let opt_cfg = OptimizerConfig {
            max_evals: 300,
            rho_start: 0.5,
            rho_end: 1e-4,
        };
        let (_u, _d) = control_step(&net, &mut ctl, &measured, &sched, &limits, &opt_cfg).unwrap();
        let states =
            crate::nn::rollout(&net, &measured, &expand_blocks(&ctl.prev_plan, 5)).unwrap();
        for (k, s) in states.iter().enumerate() {
            assert!(
                s.q[0] <= 1.0 + 1e-6 && s.q[0] >= -1e-6,
                "step {k}: q = {}",
                s.q[0]
            );
        }
    }

    #[test]
    fn argmin_invariant_under_uniform_weight_scaling() {
        let net = NetworkParams::init(4, &[25, 25], 21);
        let limits = limits4();
        let w = CostWeights::default_4dof();
        let run = |scale: f64| -> Vec<f64> {
            let mut ctl = ControllerState::new(4, 3);
            ctl.ref_q = vec![1.5, 1.2, 0.9, 1.1];
            let ws = w.scaled(scale);
            let sched = WeightSchedule::Constant(ws);
            let measured = JointState::new(vec![0.5; 4], vec![0.0; 4]);
            let (u, _) = control_step(
                &net,
                &mut ctl,
                &measured,
                &sched,
                &limits,
                &OptimizerConfig::default(),
            )
            .unwrap();
            u
        };
        let a = run(1.0);
        let b = run(3.7);
        for i in 0..4 {
            assert!(
                (a[i] - b[i]).abs() < 1e-6,
                "joint {i}: {} vs {}",
                a[i],
                b[i]
            );
        }
    }

    #[test]
    fn failsafe_holds_previous_command() {
        let net = zero_net(4);
        let limits = limits4();
        let mut ctl = ControllerState::new(4, 3);
        ctl.prev_u = vec![0.7, -0.3, 0.1, 0.0];
        ctl.ref_q = vec![1.0; 4];
        let sched = WeightSchedule::Constant(CostWeights::default_4dof());
        // zero-eval budget makes every solve fail
        let bad_cfg = OptimizerConfig {
            max_evals: 0,
            rho_start: 0.5,
            rho_end: 1e-3,
        };
        let measured = JointState::new(vec![0.5; 4], vec![0.0; 4]);
        let mut last = ctl.prev_u.clone();
        for _ in 0..5 {
            let (u, diag) =
                control_step(&net, &mut ctl, &measured, &sched, &limits, &bad_cfg).unwrap();
            assert!(diag.fallback);
            assert_eq!(u, last);
            assert!(u.iter().all(|x| x.is_finite()));
            last = u;
        }
    }

    #[test]
    fn set_reference_rejects_out_of_box() {
        let limits = limits4();
        let mut ctl = ControllerState::new(4, 3);
        ctl.integral = vec![0.5; 4];
        let before = ctl.clone();
        let err = set_reference(&mut ctl, &[4.0, 1.0, 1.0, 1.0], &[0.0; 4], &limits, false);
        assert!(matches!(err, Err(CtrlError::ReferenceOutOfBounds { joint: 0 })));
        assert_eq!(ctl, before);
        set_reference(&mut ctl, &[1.0; 4], &[0.0; 4], &limits, false).unwrap();
        assert_eq!(ctl.ref_q, vec![1.0; 4]);
        assert_eq!(ctl.integral, vec![0.5; 4]);
        set_reference(&mut ctl, &[1.0; 4], &[0.0; 4], &limits, true).unwrap();
        assert_eq!(ctl.integral, vec![0.0; 4]);
    }

    #[test]
    fn timed_schedule_resolves_every_time() {
        let w0 = CostWeights::default_4dof();
        let mut w1 = w0.clone();
        w1.q1 = vec![20.0; 4];
        let sched = WeightSchedule::Timed(vec![(0.0, w0.clone()), (5.0, w1.clone())]);
        sched.validate(4).unwrap();
        assert_eq!(sched.at(0.0), &w0);
        assert_eq!(sched.at(4.99), &w0);
        assert_eq!(sched.at(5.0), &w1);
        assert_eq!(sched.at(100.0), &w1);
    }
}
