//! Core library for a simulated underwater manipulator control stack:
//! ground-truth hydrodynamic plant, learned delta-state dynamics model,
//! derivative-free constrained optimizer, and the receding-horizon
//! controller that ties them together.
//!
//! Everything is generic over the scalar type (`f32` or `f64`) through the
//! [`scalar::Scalar`] trait; the `*64` aliases below are the concrete types
//! the rest of the stack uses.

pub mod controller;
pub mod dynamics;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod trajectory;

pub use scalar::Scalar;

/// Concrete f64 aliases used throughout the harness.
pub type JointState64 = dynamics::JointState<f64>;
pub type LinkParams64 = dynamics::LinkParams<f64>;
pub type JointParams64 = dynamics::JointParams<f64>;
pub type DynamicsParams64 = dynamics::DynamicsParams<f64>;
pub type PayloadSpec64 = dynamics::PayloadSpec<f64>;
pub type SimConfig64 = dynamics::SimConfig<f64>;
pub type NetworkParams64 = nn::NetworkParams<f64>;
pub type TrainingConfig64 = nn::TrainingConfig<f64>;
pub type Dataset64 = nn::Dataset<f64>;
pub type TrainingReport64 = nn::TrainingReport<f64>;
pub type OptProblem64<'a> = optim::OptProblem<'a, f64>;
pub type OptResult64 = optim::OptResult<f64>;
pub type CostWeights64 = controller::CostWeights<f64>;
pub type WeightSchedule64 = controller::WeightSchedule<f64>;
pub type ControllerState64 = controller::ControllerState<f64>;
pub type Limits64 = controller::Limits<f64>;
pub type OptimizerConfig64 = controller::OptimizerConfig<f64>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
