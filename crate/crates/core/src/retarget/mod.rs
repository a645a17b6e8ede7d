//! Closed-loop retargeting of a low-rate gripper setpoint stream onto a robot.
//!
//! [`run_pipeline`] holds each setpoint for `ik_rate / policy_rate` IK ticks,
//! solves the prioritized IK at every tick and passes the joint command through
//! a delay-plus-lag plant. [`compare_embodiments`] runs several robots on the
//! same stream.

mod compare;
mod config;
mod pipeline;
mod relay;

pub use compare::{
    compare_embodiments, write_comparison_csv, ComparisonMetrics, ComparisonRow, Embodiment,
    COMPARISON_HEADER,
};
pub use config::{Gain, LatencyModel, PipelineConfig, Wall};
pub use pipeline::{run_pipeline, RetargetReport, SetpointError, Summary, TickRecord, LIMIT_TOL};
pub use relay::{accumulate_setpoints, relay_setpoints};

use thiserror::Error;

use crate::dhb::DhbError;
use crate::ik::IkError;
use crate::kinematics::KinematicsError;
use crate::se3::Se3Error;

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("IK infeasible at tick {tick}")]
    Infeasible { tick: usize },
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error(transparent)]
    Dhb(#[from] DhbError),
}
