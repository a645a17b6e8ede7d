use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DVector, RowDVector};
use serde::Serialize;

use super::config::Resolved;
use super::{PipelineConfig, RetargetError};
use crate::ik::{build_tasks, CartesianRow, ConstraintSet, EsnsSolver, SolveStatus};
use crate::kinematics::{
    forward_kinematics, integrate, jacobian, velocity_bounds, JointState, RobotModel,
};
use crate::se3::{log_so3, GripperSample, GripperTrajectory, Pose};

/// Slack on position limits before a configuration counts as a violation.
pub const LIMIT_TOL: f64 = 1e-9;

/// State of one IK tick: the realized configuration at the start of the tick,
/// the realized and commanded joint velocities applied during it, and the
/// gripper-task scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TickRecord {
    pub tick: usize,
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub command: Vec<f64>,
    pub c1: f64,
    pub saturated: Vec<usize>,
}

/// Tracking error of one setpoint: at the end of its hold, and averaged over
/// the ticks of the hold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetpointError {
    pub index: usize,
    pub t: f64,
    pub position: f64,
    pub orientation: f64,
    pub hold_mean_position: f64,
    #[serde(skip)]
    pub realized: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub ticks: usize,
    pub setpoints: usize,
    pub max_position_error: f64,
    pub mean_position_error: f64,
    pub max_orientation_error: f64,
    pub mean_orientation_error: f64,
    /// Over setpoints at or after `settle_time`.
    pub steady_max_position_error: f64,
    pub steady_mean_position_error: f64,
    /// Position error against the held setpoint at the start of every tick.
    pub tick_max_position_error: f64,
    pub tick_mean_position_error: f64,
    pub limit_violations: usize,
    pub scaled_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetargetReport {
    pub ticks: Vec<TickRecord>,
    pub tracking: Vec<SetpointError>,
    pub summary: Summary,
    realized: GripperTrajectory,
}

impl RetargetReport {
    /// Realized gripper poses at the end of every hold, stamped with the
    /// setpoint times and grasp states.
    pub fn realized_trajectory(&self) -> &GripperTrajectory {
        &self.realized
    }

    /// One JSON object per tick.
    pub fn write_ticks_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for tick in &self.ticks {
            serde_json::to_writer(&mut writer, tick)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// The summary plus per-setpoint errors, as one JSON document.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            summary: &'a Summary,
            tracking: &'a [SetpointError],
        }
        serde_json::to_string_pretty(&Doc {
            summary: &self.summary,
            tracking: &self.tracking,
        })
        .expect("summary serializes")
    }
}

/// Per-DOF delay line plus first-order lag on the commanded velocity.
struct LatencyPlant {
    queue: VecDeque<DVector<f64>>,
    alpha: DVector<f64>,
    velocity: DVector<f64>,
}

impl LatencyPlant {
    fn new(n: usize, delay: usize, tau: &[f64], dt: f64) -> Self {
        let alpha = DVector::from_fn(n, |i, _| {
            if tau[i] > 0.0 {
                -(-dt / tau[i]).exp_m1()
            } else {
                1.0
            }
        });
        Self {
            queue: (0..delay).map(|_| DVector::zeros(n)).collect(),
            alpha,
            velocity: DVector::zeros(n),
        }
    }

    fn step(&mut self, command: &DVector<f64>) -> &DVector<f64> {
        self.queue.push_back(command.clone());
        let arrived = self
            .queue
            .pop_front()
            .expect("queue holds at least the new command");
        self.velocity += self.alpha.component_mul(&(arrived - &self.velocity));
        &self.velocity
    }
}

fn wall_rows(
    model: &RobotModel,
    config: &PipelineConfig,
    q: &DVector<f64>,
    gripper: &Pose,
    dt: f64,
) -> Result<Vec<CartesianRow>, RetargetError> {
    if config.walls.is_empty() {
        return Ok(Vec::new());
    }
    let jac = jacobian(model, q)?;
    let linear = jac.rows(0, 3);
    Ok(config
        .walls
        .iter()
        .map(|w| {
            let n = w.unit_normal();
            let along = n.dot(gripper.translation());
            CartesianRow {
                row: RowDVector::from_fn(model.dof(), |_, j| n.dot(&linear.column(j))),
                lower: (w.lower - along) / dt,
                upper: (w.upper - along) / dt,
            }
        })
        .collect())
}

/// Runs the closed-loop retargeter over a setpoint stream.
///
/// Every setpoint is held for `ik_rate / policy_rate` ticks. Each tick builds
/// the gripper and posture tasks at the realized configuration, bounds the
/// commanded velocity with [`velocity_bounds`] around the integral of past
/// commands, solves, and feeds the command through the latency plant. The
/// realized configuration is a weighted average of past commanded positions,
/// so it inherits their limits.
pub fn run_pipeline(
    model: &RobotModel,
    config: &PipelineConfig,
    commands: &GripperTrajectory,
) -> Result<RetargetReport, RetargetError> {
    let Resolved {
        ratio,
        dt,
        gains,
        weight,
        q0,
        q_bias,
        tau,
    } = config.resolve(model)?;
    let n = model.dof();
    let mut solver = EsnsSolver::new();
    let mut plant = LatencyPlant::new(n, config.latency.delay, &tau, dt);

    let mut q_act = q0.clone();
    let mut q_cmd = q0;
    let mut last_command = DVector::zeros(n);
    let mut violations = 0;
    let samples = commands.samples();
    let mut ticks = Vec::with_capacity(samples.len() * ratio);
    let mut tracking = Vec::with_capacity(samples.len());
    let mut realized = Vec::with_capacity(samples.len());

    let mut tick_errors = Vec::with_capacity(samples.len() * ratio);

    for (index, setpoint) in samples.iter().enumerate() {
        for sub in 0..ratio {
            let tick = index * ratio + sub;
            let gripper = forward_kinematics(model, &q_act)?;
            tick_errors.push((setpoint.pose.translation() - gripper.translation()).norm());
            let tasks = build_tasks(model, &q_act, &setpoint.pose, &q_bias, &gains)?;
            let commanded = JointState::new(model, q_cmd.clone(), last_command.clone())?;
            let (lower, upper) = velocity_bounds(model, &commanded, dt);
            let constraints = ConstraintSet {
                lower,
                upper,
                cartesian: wall_rows(model, config, &q_act, &gripper, dt)?,
            };
            let sol = solver.solve(&tasks, &constraints, &weight)?;
            if sol.status == SolveStatus::Infeasible {
                return Err(RetargetError::Infeasible { tick });
            }

            let velocity = plant.step(&sol.a).clone();
            ticks.push(TickRecord {
                tick,
                t: tick as f64 * dt,
                q: q_act.iter().copied().collect(),
                qdot: velocity.iter().copied().collect(),
                command: sol.a.iter().copied().collect(),
                c1: sol.scales[0],
                saturated: sol.saturated.clone(),
            });

            q_cmd = integrate(model, &q_cmd, &sol.a, dt)?;
            q_act = integrate(model, &q_act, &velocity, dt)?;
            violations += model.limit_violations(&q_cmd, LIMIT_TOL).len();
            violations += model.limit_violations(&q_act, LIMIT_TOL).len();
            model.clamp_to_limits(&mut q_cmd);
            model.clamp_to_limits(&mut q_act);
            last_command = sol.a;
        }
        let pose = forward_kinematics(model, &q_act)?;
        let position = (setpoint.pose.translation() - pose.translation()).norm();
        let orientation = log_so3(&(setpoint.pose.rotation() * pose.rotation().inverse())).norm();
        tracking.push(SetpointError {
            index,
            t: setpoint.t,
            position,
            orientation,
            hold_mean_position: tick_errors[index * ratio..].iter().sum::<f64>() / ratio as f64,
            realized: pose,
        });
        realized.push(GripperSample { pose, ..*setpoint });
    }
    if violations > 0 {
        log::warn!("{violations} joint-limit violations were clamped");
    }

    let summary = summarize(
        &ticks,
        &tracking,
        &tick_errors,
        config.settle_time,
        violations,
    );
    Ok(RetargetReport {
        ticks,
        tracking,
        summary,
        realized: GripperTrajectory::new(realized)?,
    })
}

fn summarize(
    ticks: &[TickRecord],
    tracking: &[SetpointError],
    tick_errors: &[f64],
    settle: f64,
    violations: usize,
) -> Summary {
    let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let pos: Vec<f64> = tracking.iter().map(|e| e.position).collect();
    let ori: Vec<f64> = tracking.iter().map(|e| e.orientation).collect();
    let steady: Vec<f64> = tracking
        .iter()
        .filter(|e| e.t >= settle)
        .map(|e| e.position)
        .collect();
    let scaled = ticks.iter().filter(|t| t.c1 < 1.0 - 1e-9).count();
    Summary {
        ticks: ticks.len(),
        setpoints: tracking.len(),
        max_position_error: max(&mut pos.iter().copied()),
        mean_position_error: mean(&pos),
        max_orientation_error: max(&mut ori.iter().copied()),
        mean_orientation_error: mean(&ori),
        steady_max_position_error: max(&mut steady.iter().copied()),
        steady_mean_position_error: mean(&steady),
        tick_max_position_error: max(&mut tick_errors.iter().copied()),
        tick_mean_position_error: mean(tick_errors),
        limit_violations: violations,
        scaled_fraction: if ticks.is_empty() {
            0.0
        } else {
            scaled as f64 / ticks.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plant_delays_and_lags() {
        let mut plant = LatencyPlant::new(1, 2, &[0.0], 0.01);
        let one = DVector::from_element(1, 1.0);
        assert_eq!(plant.step(&one)[0], 0.0);
        assert_eq!(plant.step(&one)[0], 0.0);
        assert_eq!(plant.step(&one)[0], 1.0);

        let mut lag = LatencyPlant::new(1, 0, &[0.1], 0.01);
        let v = lag.step(&one)[0];
        assert!((v - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
    }
}
