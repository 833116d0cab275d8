//! Closed-loop evaluation scenarios: payload, setpoint, duration, seed.

use serde::{Deserialize, Serialize};

use uwmpc_core::controller::CostWeights;
use uwmpc_core::dynamics::{DynamicsParams, JointState, PayloadSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub payload: PayloadSpec<f64>,
    pub initial: JointState<f64>,
    /// Position setpoint, rad. Velocity reference is zero (setpoint
    /// regulation).
    pub reference: Vec<f64>,
    pub duration_s: f64,
    pub seed: u64,
    /// Optional plant parameter override (defaults to the config plant).
    pub plant_override: Option<DynamicsParams<f64>>,
    /// Optional controller weight override.
    pub weights_override: Option<CostWeights<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?} (known: {})", known_names().join(", "))]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn initial_state() -> JointState<f64> {
    JointState::at_rest(vec![0.5; 4])
}

/// Steel wrench, about 0.5 kg, slightly denser than the weights stack.
fn wrench_payload() -> PayloadSpec<f64> {
    PayloadSpec {
        mass: 0.5,
        buoyancy_volume: 0.5 / 7800.0,
        offset: [0.02, 0.0, 0.0],
        label: "wrench".into(),
    }
}

/// 1 kg weight stack.
fn weights_payload() -> PayloadSpec<f64> {
    PayloadSpec {
        mass: 1.0,
        buoyancy_volume: 1.0 / 7800.0,
        offset: [0.02, 0.0, 0.0],
        label: "weights".into(),
    }
}

pub fn known_names() -> Vec<&'static str> {
    vec!["baseline", "wrench", "weights", "weights-caption"]
}

/// Built-in scenarios. `baseline` regulates without payload; `wrench` and
/// `weights` carry their payloads to fixed setpoints. `weights-caption`
/// repeats the 1 kg payload at the baseline setpoints so the payload effect
/// can be compared at an identical posture.
pub fn builtin(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    let s = match name {
        "baseline" => Scenario {
            name: "baseline".into(),
            payload: PayloadSpec::none(),
            initial: initial_state(),
            reference: vec![1.7, 1.8, 1.6, 1.6],
            duration_s: 10.0,
            seed,
            plant_override: None,
            weights_override: None,
        },
        "wrench" => Scenario {
            name: "wrench".into(),
            payload: wrench_payload(),
            initial: initial_state(),
            reference: vec![1.7, 1.8, 1.6, 1.6],
            duration_s: 10.0,
            seed,
            plant_override: None,
            weights_override: None,
        },
        "weights" => Scenario {
            name: "weights".into(),
            payload: weights_payload(),
            initial: initial_state(),
            reference: vec![2.5, 2.0, 1.6, 2.2],
            duration_s: 12.0,
            seed,
            plant_override: None,
            weights_override: None,
        },
        "weights-caption" => Scenario {
            name: "weights-caption".into(),
            payload: weights_payload(),
            initial: initial_state(),
            reference: vec![1.7, 1.8, 1.6, 1.6],
            duration_s: 12.0,
            seed,
            plant_override: None,
            weights_override: None,
        },
        other => return Err(ScenarioError::Unknown(other.to_string())),
    };
    Ok(s)
}

impl Scenario {
    pub fn validate(&self, plant: &DynamicsParams<f64>) -> Result<(), ScenarioError> {
        if self.duration_s <= 0.0 {
            return Err(ScenarioError::Invalid("duration must be positive".into()));
        }
        let plant = self.plant_override.as_ref().unwrap_or(plant);
        if self.reference.len() != plant.dof() || self.initial.dof() != plant.dof() {
            return Err(ScenarioError::Invalid("dimension mismatch".into()));
        }
        for (i, (&r, j)) in self.reference.iter().zip(&plant.joints).enumerate() {
            if r < j.q_min || r > j.q_max {
                return Err(ScenarioError::Invalid(format!(
                    "reference for joint {} outside the joint box",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}
