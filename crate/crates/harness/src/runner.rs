//! Closed-loop scenario execution: sensed state -> controller -> plant, at
//! the control rate, with trajectory logging and metric extraction.

use uwmpc_core::controller::{
    control_step, set_reference, stage_cost, ControllerState, Limits, WeightSchedule,
};
use uwmpc_core::dynamics::{self, JointState};
use uwmpc_core::nn::NetworkParams;
use uwmpc_core::trajectory::{Trajectory, TrajectoryRow};

use crate::config::HarnessConfig;
use crate::metrics::{compute_metrics, RunMetrics};
use crate::scenario::Scenario;

/// Consecutive fail-safe steps tolerated before the run aborts.
const MAX_CONSECUTIVE_FALLBACKS: usize = 10;

/// Default settling band: 2% of the step with a 0.01 rad floor.
pub const SETTLING_BAND_FRAC: f64 = 0.02;
pub const SETTLING_BAND_FLOOR_RAD: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario error: {0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("plant error: {0}")]
    Plant(#[from] uwmpc_core::dynamics::DynamicsError),
    #[error("controller error: {0}")]
    Controller(#[from] uwmpc_core::controller::CtrlError),
    #[error("metrics error: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("fail-safe engaged for {0} consecutive steps at t = {1:.2} s; run aborted")]
    FailsafeRunaway(usize, f64),
}

/// Per-step sensor seed derived from the scenario seed.
fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub fn run_scenario(
    cfg: &HarnessConfig,
    scenario: &Scenario,
    net: &NetworkParams<f64>,
) -> Result<(Trajectory<f64>, RunMetrics), RunError> {
    let base_plant = scenario.plant_override.as_ref().unwrap_or(&cfg.plant);
    scenario.validate(base_plant)?;
    // the payload is unknown to the controller: it attaches to the true
    // plant only, while the controller keeps its nominal model and limits
    let plant = dynamics::attach_payload(base_plant, &scenario.payload)?;
    let limits = Limits::from_params(base_plant);
    let dof = base_plant.dof();

    let weights = scenario
        .weights_override
        .clone()
        .unwrap_or_else(|| cfg.controller.weights.clone());
    let sched = WeightSchedule::Constant(weights.clone());

    let mut ctl = ControllerState::new(dof, cfg.controller.move_blocks);
    ctl.antiwindup = cfg.controller.antiwindup;
    ctl.integral_continuation = cfg.controller.integral_continuation;
    set_reference(&mut ctl, &scenario.reference, &vec![0.0; dof], &limits, false)?;

    let dt = cfg.sim.control_period;
    let steps = (scenario.duration_s / dt).round() as usize;
    let mut state = scenario.initial.clone();
    let mut traj = Trajectory::new();
    let mut consecutive_fallbacks = 0usize;

    for k in 0..steps {
        let t = k as f64 * dt;
        let sensed = dynamics::sensed_state(&state, &cfg.sim, step_seed(scenario.seed, k));
        let prev_u = ctl.prev_u.clone();
        let (u, diag) = control_step(net, &mut ctl, &sensed, &sched, &limits, &cfg.optimizer)?;
        if diag.fallback {
            consecutive_fallbacks += 1;
            if consecutive_fallbacks > MAX_CONSECUTIVE_FALLBACKS {
                return Err(RunError::FailsafeRunaway(consecutive_fallbacks, t));
            }
        } else {
            consecutive_fallbacks = 0;
        }

        let realized = stage_cost(
            &state,
            &scenario.reference,
            &vec![0.0; dof],
            &u,
            &prev_u,
            &weights,
        );
        traj.rows.push(TrajectoryRow {
            t,
            q: state.q.clone(),
            qdot: state.qdot.clone(),
            u: u.clone(),
            r_q: scenario.reference.clone(),
            cost: realized,
            evals: diag.evals,
            termination: diag.termination.to_string(),
            obj_initial: diag.initial_objective,
            obj_final: diag.final_objective,
            solve_ms: diag.solve_time_ms,
            fallback: diag.fallback,
        });

        state = dynamics::step(&state, &u, &plant, &cfg.sim)?.state;
    }

    let metrics = compute_metrics(
        &traj,
        SETTLING_BAND_FRAC,
        SETTLING_BAND_FLOOR_RAD,
        Some(&limits),
    )?;
    Ok((traj, metrics))
}

/// The constant torque that would hold a state in equilibrium; used by the
/// baseline sanity check.
pub fn hold_torque(state: &JointState<f64>, plant: &uwmpc_core::dynamics::DynamicsParams<f64>) -> Vec<f64> {
    dynamics::restoring_torques(&state.q, plant)
}
