use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::{Cli, Command, FixtureKind, TransformKind};
use crate::dhb::{dhb_distance, dhb_transform, format_f64, DhbInvariants, CHANNEL_NAMES};
use crate::fixtures;
use crate::ik::{build_tasks, solve_esns, ConstraintSet, SolveStatus};
use crate::kinematics::{
    forward_kinematics, integrate, velocity_bounds, JointState, PoseRecord, RobotModel,
};
use crate::losses::{
    mean_breakdown, read_episode, EpisodeStep, GmmMode, GmmParams, LossBreakdown, Steps,
};
use crate::retarget::{
    compare_embodiments, run_pipeline, write_comparison_csv, Embodiment, PipelineConfig,
    RetargetError,
};
use crate::se3::{log_so3, DifferentialPose, GripperTrajectory, Pose};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn in_file(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

impl From<RetargetError> for CliError {
    fn from(e: RetargetError) -> Self {
        match e {
            RetargetError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            other => input(other),
        }
    }
}

fn require_files(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Input(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<RobotModel, CliError> {
    RobotModel::from_json_file(path).map_err(|e| in_file(path, e))
}

fn load_trajectory(path: &Path) -> Result<GripperTrajectory, CliError> {
    let file = File::open(path).map_err(|e| in_file(path, e))?;
    GripperTrajectory::read_jsonl(BufReader::new(file)).map_err(|e| in_file(path, e))
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::from_file(p).map_err(|e| in_file(p, e)),
        None => Ok(PipelineConfig::default()),
    }
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| in_file(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(input)?;
        self.write_text(name, &(text + "\n"))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| in_file(&path, e))?;
        Ok(path)
    }
}

fn finish(path: PathBuf, mut writer: BufWriter<File>) -> Result<PathBuf, CliError> {
    writer.flush().map_err(|e| in_file(&path, e))?;
    Ok(path)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Retarget { model, trajectory } => require_files(&[model, trajectory])?,
        Command::Invariants { trajectory, .. } => require_files(&[trajectory])?,
        Command::Compare { a, b, .. } => require_files(&[a, b])?,
        Command::IkSolve { model, .. } => require_files(&[model])?,
        Command::LossEval { params, episode } => require_files(&[params, episode])?,
        Command::CompareEmbodiments {
            models,
            model_configs,
            trajectory,
        } => {
            let mut all: Vec<&Path> = models
                .iter()
                .chain(model_configs)
                .map(PathBuf::as_path)
                .collect();
            all.push(trajectory);
            require_files(&all)?
        }
        Command::Fixture { .. } => {}
    }
    if let Some(c) = &cli.config {
        require_files(&[c])?;
    }
    fs::create_dir_all(&cli.output_dir).map_err(|e| in_file(&cli.output_dir, e))?;
    let out = Output {
        dir: &cli.output_dir,
    };

    let written = match &cli.command {
        Command::Retarget { model, trajectory } => retarget(cli, &out, model, trajectory)?,
        Command::Invariants {
            trajectory,
            window,
            single,
        } => invariants(&out, trajectory, *window, *single)?,
        Command::Compare { a, b, window } => compare(&out, a, b, *window)?,
        Command::IkSolve {
            model,
            target,
            q0,
            qdot,
        } => ik_solve(cli, &out, model, target, q0.as_deref(), qdot.as_deref())?,
        Command::LossEval { params, episode } => loss_eval(&out, params, episode)?,
        Command::CompareEmbodiments {
            models,
            model_configs,
            trajectory,
        } => embodiments(cli, &out, models, model_configs, trajectory)?,
        Command::Fixture {
            kind,
            name,
            transform,
            samples,
        } => fixture(cli, &out, *kind, name.as_deref(), *transform, *samples)?,
    };
    for path in written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn retarget(
    cli: &Cli,
    out: &Output,
    model: &Path,
    trajectory: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let model = load_model(model)?;
    let commands = load_trajectory(trajectory)?;
    let config = load_config(cli.config.as_ref())?;
    let report = run_pipeline(&model, &config, &commands)?;
    let (path, mut w) = out.create("ticks.jsonl")?;
    report
        .write_ticks_jsonl(&mut w)
        .map_err(|e| in_file(&path, e))?;
    let ticks = finish(path, w)?;
    let summary = out.write_text("summary.json", &(report.summary_json() + "\n"))?;
    println!("{}", serde_json::to_string(&report.summary).map_err(input)?);
    Ok(vec![ticks, summary])
}

fn windows(
    traj: &GripperTrajectory,
    window: usize,
    single: bool,
) -> Result<Vec<DhbInvariants>, CliError> {
    let poses = traj.poses();
    if single {
        return Ok(vec![dhb_transform(&poses).map_err(input)?]);
    }
    if window < 3 {
        return Err(CliError::Input(format!(
            "window must be at least 3, got {window}"
        )));
    }
    if window > poses.len() {
        return Err(CliError::Input(format!(
            "window of {window} exceeds trajectory of {} samples",
            poses.len()
        )));
    }
    poses
        .windows(window)
        .map(|w| dhb_transform(w).map_err(input))
        .collect()
}

fn invariants(
    out: &Output,
    trajectory: &Path,
    window: usize,
    single: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let traj = load_trajectory(trajectory)?;
    let blocks = windows(&traj, window, single)?;
    let (path, w) = out.create("invariants.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    let header: Vec<&str> = ["window", "column"]
        .into_iter()
        .chain(CHANNEL_NAMES)
        .collect();
    let wrap = |e: csv::Error| in_file(&path, e);
    csv.write_record(&header).map_err(wrap)?;
    for (wi, inv) in blocks.iter().enumerate() {
        for col in 0..inv.columns() {
            let mut record = vec![wi.to_string(), col.to_string()];
            record.extend((0..CHANNEL_NAMES.len()).map(|ch| format_f64(inv.get(ch, col))));
            csv.write_record(&record).map_err(wrap)?;
        }
    }
    csv.flush().map_err(|e| in_file(&path, e))?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct CompareReport {
    window: usize,
    windows: usize,
    /// Sum of the per-window distances.
    distance: f64,
    max_window_distance: f64,
    per_window: Vec<f64>,
}

fn compare(out: &Output, a: &Path, b: &Path, window: usize) -> Result<Vec<PathBuf>, CliError> {
    let (ta, tb) = (load_trajectory(a)?, load_trajectory(b)?);
    if ta.len() != tb.len() {
        return Err(CliError::Input(format!(
            "trajectories differ in length: {} vs {}",
            ta.len(),
            tb.len()
        )));
    }
    let (wa, wb) = (windows(&ta, window, false)?, windows(&tb, window, false)?);
    let per_window = wa
        .iter()
        .zip(&wb)
        .map(|(x, y)| dhb_distance(x, y).map_err(input))
        .collect::<Result<Vec<_>, _>>()?;
    let report = CompareReport {
        window,
        windows: per_window.len(),
        distance: per_window.iter().sum(),
        max_window_distance: per_window.iter().copied().fold(0.0, f64::max),
        per_window,
    };
    println!("{}", format_f64(report.distance));
    Ok(vec![out.write_json("compare.json", &report)?])
}

#[derive(Serialize)]
struct IkReport {
    status: SolveStatus,
    c1: f64,
    scales: Vec<f64>,
    dt: f64,
    a: Vec<f64>,
    q_next: Vec<f64>,
    saturated: Vec<usize>,
    dropped: Vec<usize>,
    kkt_residual: f64,
    position_error_before: f64,
    position_error_after: f64,
    orientation_error_before: f64,
    orientation_error_after: f64,
}

fn parse_target(values: &[f64]) -> Result<Pose, CliError> {
    match values.len() {
        3 => Ok(Pose::from_translation(Vector3::new(
            values[0], values[1], values[2],
        ))),
        7 => Pose::from_parts(
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5], values[6]],
        )
        .map_err(input),
        n => Err(CliError::Input(format!(
            "target needs 3 or 7 numbers, got {n}"
        ))),
    }
}

fn pose_errors(target: &Pose, current: &Pose) -> (f64, f64) {
    (
        (target.translation() - current.translation()).norm(),
        log_so3(&(target.rotation() * current.rotation().inverse())).norm(),
    )
}

fn ik_solve(
    cli: &Cli,
    out: &Output,
    model: &Path,
    target: &[f64],
    q0: Option<&[f64]>,
    qdot: Option<&[f64]>,
) -> Result<Vec<PathBuf>, CliError> {
    let model = load_model(model)?;
    let target = parse_target(target)?;
    let mut config = load_config(cli.config.as_ref())?;
    if let Some(q) = q0 {
        config.q0 = Some(q.to_vec());
    }
    let resolved = config.resolve(&model)?;
    let n = model.dof();
    let qdot = match qdot {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n),
    };
    let state = JointState::new(&model, resolved.q0.clone(), qdot).map_err(input)?;
    let tasks =
        build_tasks(&model, &state.q, &target, &resolved.q_bias, &resolved.gains).map_err(input)?;
    let (lower, upper) = velocity_bounds(&model, &state, resolved.dt);
    let constraints = ConstraintSet::from_box(lower, upper);
    let sol = solve_esns(&tasks, &constraints, &resolved.weight).map_err(input)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(CliError::Infeasible(
            "IK infeasible: the velocity bounds admit no motion".into(),
        ));
    }
    let q_next = integrate(&model, &state.q, &sol.a, resolved.dt).map_err(input)?;
    let before = pose_errors(
        &target,
        &forward_kinematics(&model, &state.q).map_err(input)?,
    );
    let after = pose_errors(
        &target,
        &forward_kinematics(&model, &q_next).map_err(input)?,
    );
    let report = IkReport {
        status: sol.status,
        c1: sol.scales[0],
        scales: sol.scales.clone(),
        dt: resolved.dt,
        a: sol.a.iter().copied().collect(),
        q_next: q_next.iter().copied().collect(),
        saturated: sol.saturated,
        dropped: sol.dropped,
        kkt_residual: sol.kkt_residual,
        position_error_before: before.0,
        position_error_after: after.0,
        orientation_error_before: before.1,
        orientation_error_after: after.1,
    };
    println!("{}", serde_json::to_string(&report).map_err(input)?);
    Ok(vec![out.write_json("ik_solution.json", &report)?])
}

#[derive(Serialize)]
struct LossReport {
    steps: Vec<LossBreakdown>,
    mean: LossBreakdown,
}

fn loss_eval(out: &Output, params: &Path, episode: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(params).map_err(|e| in_file(params, e))?;
    let params_value = GmmParams::from_json_str(&text).map_err(|e| in_file(params, e))?;
    let file = File::open(episode).map_err(|e| in_file(episode, e))?;
    let steps = read_episode(BufReader::new(file)).map_err(|e| in_file(episode, e))?;
    let breakdowns = steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.evaluate(&params_value)
                .map_err(|e| in_file(episode, format!("step {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = LossReport {
        mean: mean_breakdown(&breakdowns),
        steps: breakdowns,
    };
    println!("{}", serde_json::to_string(&report.mean).map_err(input)?);
    Ok(vec![out.write_json("losses.json", &report)?])
}

fn embodiments(
    cli: &Cli,
    out: &Output,
    models: &[PathBuf],
    configs: &[PathBuf],
    trajectory: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if !configs.is_empty() && configs.len() != models.len() {
        return Err(CliError::Input(format!(
            "{} model configs given for {} models",
            configs.len(),
            models.len()
        )));
    }
    let shared = load_config(cli.config.as_ref())?;
    let embodiments = models
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let config = match configs.get(i) {
                Some(c) => load_config(Some(c))?,
                None => shared.clone(),
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Embodiment {
                name,
                model: load_model(path)?,
                config,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let commands = load_trajectory(trajectory)?;
    let rows = compare_embodiments(&embodiments, &commands)?;
    for row in &rows {
        if let Err(e) = &row.outcome {
            log::warn!("{}: {e}", row.name);
        }
    }
    let (path, w) = out.create("comparison.csv")?;
    write_comparison_csv(&rows, w).map_err(|e| in_file(&path, e))?;
    Ok(vec![path])
}

fn fixture(
    cli: &Cli,
    out: &Output,
    kind: FixtureKind,
    name: Option<&str>,
    transform: Option<TransformKind>,
    samples: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let default_name = match kind {
        FixtureKind::Circle => "circle.jsonl",
        FixtureKind::Line => "line.jsonl",
        FixtureKind::Stationary => "stationary.jsonl",
        FixtureKind::Asymmetric => "asymmetric.jsonl",
        FixtureKind::Zigzag => "zigzag.jsonl",
        FixtureKind::RandomWalk => "random_walk.jsonl",
        FixtureKind::Episode => "episode.jsonl",
        FixtureKind::Gmm => "gmm.json",
    };
    let name = name.unwrap_or(default_name);
    if samples < 3 {
        return Err(CliError::Input("fixtures need at least 3 samples".into()));
    }
    let traj = match kind {
        FixtureKind::Circle => fixtures::circle(
            Vector3::new(0.55, 0.1, 0.0),
            0.1,
            0.1,
            30.0,
            10.0,
            Pose::identity(),
        ),
        FixtureKind::Line => fixtures::line(
            Pose::identity(),
            Vector3::new(0.01, 0.005, 0.0),
            samples,
            0.1,
        ),
        FixtureKind::Stationary => fixtures::stationary(
            Pose::from_translation(Vector3::new(0.65, 0.1, 0.0)),
            samples,
            0.1,
        ),
        FixtureKind::Asymmetric => fixtures::asymmetric(samples, 0.1),
        FixtureKind::Zigzag => Ok(zigzag(samples)),
        FixtureKind::RandomWalk => fixtures::random_walk(&mut rng, samples, 0.1, 0.02),
        FixtureKind::Episode | FixtureKind::Gmm => {
            if transform.is_some() {
                return Err(CliError::Input(
                    "--transform applies to trajectory fixtures only".into(),
                ));
            }
            let text = if kind == FixtureKind::Gmm {
                serde_json::to_string_pretty(&random_gmm(&mut rng)).map_err(input)? + "\n"
            } else {
                random_episode(&mut rng, samples)?
            };
            return Ok(vec![out.write_text(name, &text)?]);
        }
    }
    .map_err(input)?;
    let traj = match transform {
        None => traj,
        Some(TransformKind::Random) => traj.transformed(&fixtures::random_rigid(&mut rng, 2.0)),
        Some(TransformKind::HalfTurn) => traj.transformed(&Pose::new(
            Vector3::new(3.0, -2.0, 1.0),
            UnitQuaternion::new_unchecked(Quaternion::new(0.0, 0.0, 0.0, 1.0)),
        )),
    };
    let (path, mut w) = out.create(name)?;
    traj.write_jsonl(&mut w).map_err(|e| in_file(&path, e))?;
    Ok(vec![finish(path, w)?])
}

/// Polyline with dyadic coordinates and no rotation.
fn zigzag(n: usize) -> GripperTrajectory {
    let poses: Vec<Pose> = (0..n)
        .map(|k| {
            let p = Vector3::new(
                k as f64 / 8.0,
                ((k * k) % 5) as f64 / 16.0,
                ((3 * k) % 7) as f64 / 32.0,
            );
            Pose::from_translation(p)
        })
        .collect();
    GripperTrajectory::from_poses(&poses, 0.0, 0.125).expect("increasing timestamps")
}

fn random_gmm(rng: &mut ChaCha8Rng) -> GmmParams {
    let modes = (0..crate::losses::DEFAULT_MODES)
        .map(|_| GmmMode {
            logit: rng.random_range(-1.0..1.0),
            mean: std::array::from_fn(|_| rng.random_range(-0.02..0.02)),
            std: std::array::from_fn(|_| rng.random_range(0.005..0.05)),
        })
        .collect();
    GmmParams::new(modes).expect("valid mixture")
}

fn random_episode(rng: &mut ChaCha8Rng, samples: usize) -> Result<String, CliError> {
    let history_len = crate::losses::DEFAULT_HISTORY;
    let walk =
        fixtures::random_walk(rng, samples.max(history_len + 2), 0.1, 0.02).map_err(input)?;
    let poses = walk.poses();
    let mut text = String::new();
    for end in history_len..poses.len() {
        let history = &poses[end - history_len..end];
        let demo = history[history_len - 1]
            .difference(&poses[end])
            .map_err(input)?;
        let noise: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.005..0.005));
        let mut predicted = demo.to_array();
        for (p, n) in predicted.iter_mut().zip(noise) {
            *p += n;
        }
        let step = EpisodeStep {
            history: history.iter().map(PoseRecord::from_pose).collect(),
            predicted: Steps::One(predicted),
            demo: Steps::One(DifferentialPose::to_array(&demo)),
            grasp_logit: rng.random_range(-4.0..4.0),
            grasp_label: u8::from(rng.random_bool(0.5)),
        };
        text += &serde_json::to_string(&step).map_err(input)?;
        text.push('\n');
    }
    Ok(text)
}
