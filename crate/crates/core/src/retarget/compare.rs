use std::io::Write;
use std::thread;

use super::{run_pipeline, PipelineConfig, RetargetError, RetargetReport};
use crate::dhb::{dhb_distance, dhb_transform, format_f64};
use crate::kinematics::RobotModel;
use crate::se3::GripperTrajectory;

/// One robot to compare.
#[derive(Clone, Debug)]
pub struct Embodiment {
    pub name: String,
    pub model: RobotModel,
    pub config: PipelineConfig,
}

#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub name: String,
    pub outcome: Result<ComparisonMetrics, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonMetrics {
    pub max_position_error: f64,
    pub mean_position_error: f64,
    pub tick_mean_position_error: f64,
    pub max_orientation_error: f64,
    pub mean_orientation_error: f64,
    pub scaled_fraction: f64,
    pub limit_violations: usize,
    /// Between the commanded and the realized gripper trajectories, each taken
    /// as a single window.
    pub dhb_distance: f64,
}

fn metrics(
    report: &RetargetReport,
    commands: &GripperTrajectory,
) -> Result<ComparisonMetrics, RetargetError> {
    let commanded = dhb_transform(&commands.poses())?;
    let realized = dhb_transform(&report.realized_trajectory().poses())?;
    let s = &report.summary;
    Ok(ComparisonMetrics {
        max_position_error: s.max_position_error,
        mean_position_error: s.mean_position_error,
        tick_mean_position_error: s.tick_mean_position_error,
        max_orientation_error: s.max_orientation_error,
        mean_orientation_error: s.mean_orientation_error,
        scaled_fraction: s.scaled_fraction,
        limit_violations: s.limit_violations,
        dhb_distance: dhb_distance(&commanded, &realized)?,
    })
}

/// Runs the pipeline for every embodiment on the same commands, one thread per
/// embodiment. A failing embodiment yields an error row; the others are still
/// reported, in input order.
pub fn compare_embodiments(
    embodiments: &[Embodiment],
    commands: &GripperTrajectory,
) -> Result<Vec<ComparisonRow>, RetargetError> {
    if embodiments.len() < 2 {
        return Err(RetargetError::Config(
            "comparison needs at least two embodiments".into(),
        ));
    }
    if commands.len() < 3 {
        return Err(RetargetError::Config(
            "comparison needs at least three setpoints".into(),
        ));
    }
    let rows = thread::scope(|scope| {
        let handles: Vec<_> = embodiments
            .iter()
            .map(|e| {
                scope.spawn(move || {
                    run_pipeline(&e.model, &e.config, commands)
                        .and_then(|report| metrics(&report, commands))
                        .map_err(|err| err.to_string())
                })
            })
            .collect();
        handles
            .into_iter()
            .zip(embodiments)
            .map(|(h, e)| ComparisonRow {
                name: e.name.clone(),
                outcome: h
                    .join()
                    .unwrap_or_else(|_| Err("pipeline thread panicked".into())),
            })
            .collect()
    });
    Ok(rows)
}

pub const COMPARISON_HEADER: [&str; 10] = [
    "name",
    "status",
    "max_position_error",
    "mean_position_error",
    "tick_mean_position_error",
    "max_orientation_error",
    "mean_orientation_error",
    "scaled_fraction",
    "limit_violations",
    "dhb_distance",
];

/// CSV table, one row per embodiment. Error rows leave the metrics empty and
/// carry the message in `status`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(COMPARISON_HEADER)?;
    for row in rows {
        let record: Vec<String> = match &row.outcome {
            Ok(m) => vec![
                row.name.clone(),
                "ok".into(),
                format_f64(m.max_position_error),
                format_f64(m.mean_position_error),
                format_f64(m.tick_mean_position_error),
                format_f64(m.max_orientation_error),
                format_f64(m.mean_orientation_error),
                format_f64(m.scaled_fraction),
                m.limit_violations.to_string(),
                format_f64(m.dhb_distance),
            ],
            Err(e) => {
                let mut r = vec![row.name.clone(), format!("error: {e}")];
                r.resize(COMPARISON_HEADER.len(), String::new());
                r
            }
        };
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
