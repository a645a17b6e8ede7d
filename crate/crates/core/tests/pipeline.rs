mod common;

use nalgebra::{DVector, Vector3};
use retarget_core::dhb::{dhb_distance, dhb_transform};
use retarget_core::fixtures;
use retarget_core::kinematics::{forward_kinematics, RobotModel};
use retarget_core::retarget::{
    compare_embodiments, run_pipeline, Embodiment, Gain, LatencyModel, PipelineConfig,
    RetargetError,
};
use retarget_core::se3::{GripperTrajectory, Pose};

use common::*;

/// End-of-hold lag of a proportional tracker on a circle: per tick the error
/// shrinks by `1 − K dt`, and each hold starts with the setpoint advanced by
/// one chord. Solving the rotating fixed point gives
/// `|e| = ρ · 2r sin(ω/2) / |1 − ρ e^{−iω}|` with `ρ = (1 − K dt)^ticks`.
fn circle_lag_oracle(k: f64, ik_rate: f64, policy_rate: f64, radius: f64, frequency: f64) -> f64 {
    let ticks = (ik_rate / policy_rate).round() as i32;
    let rho = (1.0 - k / ik_rate).powi(ticks);
    let omega = 2.0 * std::f64::consts::PI * frequency / policy_rate;
    let chord = 2.0 * radius * (omega / 2.0).sin();
    let denom = ((1.0 - rho * omega.cos()).powi(2) + (rho * omega.sin()).powi(2)).sqrt();
    rho * chord / denom
}

fn setpoint_at_q0(model: &RobotModel, q0: &DVector<f64>, n: usize) -> GripperTrajectory {
    let pose = forward_kinematics(model, q0).unwrap();
    fixtures::stationary(pose, n, 0.1).unwrap()
}

#[test]
fn stationary_commands_hold_still() {
    for name in [
        "planar2",
        "planar3",
        "mobile_manipulator",
        "floating_base",
        "arm7",
    ] {
        let model = model(name);
        let q0 = DVector::from_fn(model.dof(), |i, _| match model.limits()[i].position {
            Some((lo, hi)) => lo + 0.4 * (hi - lo),
            None => 0.1,
        });
        let commands = setpoint_at_q0(&model, &q0, 20);
        let config = PipelineConfig {
            q0: Some(q0.iter().copied().collect()),
            ..Default::default()
        };
        let report = run_pipeline(&model, &config, &commands).unwrap();
        assert!(report.summary.max_position_error < 1e-6, "{name}");
        assert!(report.summary.max_orientation_error < 1e-6, "{name}");
        assert!(report.ticks.iter().all(|t| t.c1 == 1.0), "{name}");
        assert_eq!(report.summary.limit_violations, 0);
    }
}

#[test]
fn circle_lag_matches_discrete_oracle() {
    let (model, config, commands) = circle_setup(30.0);
    let report = run_pipeline(&model, &config, &commands).unwrap();
    let oracle = circle_lag_oracle(10.0, 100.0, 10.0, CIRCLE_RADIUS, CIRCLE_FREQUENCY);
    let steady = report.summary.steady_mean_position_error;
    assert!(
        (steady - oracle).abs() < 0.05 * oracle,
        "steady {steady} vs oracle {oracle}"
    );
    assert!(report.summary.steady_max_position_error < 1.05 * oracle);
    assert_eq!(report.summary.limit_violations, 0);
    // acceleration limits clip the first tick of a few holds
    assert!(report.summary.scaled_fraction < 0.05);
}

#[test]
fn delay_increases_tracking_error() {
    let (model, config, commands) = circle_setup(20.0);
    let base = run_pipeline(&model, &config, &commands).unwrap();
    let mut previous = base.summary.tick_mean_position_error;
    for delay in [2, 5, 8] {
        let delayed = PipelineConfig {
            latency: LatencyModel {
                tau: Gain::Uniform(0.0),
                delay,
            },
            ..config.clone()
        };
        let report = run_pipeline(&model, &delayed, &commands).unwrap();
        assert!(
            report.summary.tick_mean_position_error > previous,
            "delay {delay}"
        );
        previous = report.summary.tick_mean_position_error;
    }
}

#[test]
fn gain_sweep_follows_the_oracle() {
    let (model, config, _) = circle_setup(0.0);
    // slow enough that no limit binds up to K dt = 1
    let commands = fixtures::circle(
        Vector3::from(CIRCLE_CENTER),
        CIRCLE_RADIUS,
        0.02,
        30.0,
        10.0,
        Pose::identity(),
    )
    .unwrap();
    let mut previous = f64::INFINITY;
    let mut previous_tick = f64::INFINITY;
    for k in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let cfg = PipelineConfig {
            k_grip: Gain::Uniform(k),
            settle_time: 15.0,
            ..config.clone()
        };
        let summary = run_pipeline(&model, &cfg, &commands).unwrap().summary;
        let err = summary.steady_mean_position_error;
        assert!(err < previous, "k = {k}: {err} ≥ {previous}");
        assert!(summary.tick_mean_position_error < previous_tick);
        previous = err;
        previous_tick = summary.tick_mean_position_error;
    }
    // past K dt = 1 the per-tick factor 1 − K dt turns negative and grows in size
    let overshoot = PipelineConfig {
        k_grip: Gain::Uniform(150.0),
        settle_time: 15.0,
        ..config.clone()
    };
    let err = run_pipeline(&model, &overshoot, &commands)
        .unwrap()
        .summary
        .steady_mean_position_error;
    assert!(err > previous);
}

/// Commands that drive every joint into its limits at full speed.
fn aggressive(model: &RobotModel, q0: &DVector<f64>) -> GripperTrajectory {
    let start = forward_kinematics(model, q0).unwrap();
    let poses: Vec<Pose> = (0..40)
        .map(|i| {
            let s = i as f64 / 10.0;
            let offset = Vector3::new(0.6 * s.sin(), 0.5 * (1.3 * s).sin(), 0.3 * (0.7 * s).sin());
            let spin = Vector3::new(0.2 * s, 1.5 * s, 2.5 * s);
            start.compose(&Pose::from_rotation_vector(offset, spin))
        })
        .collect();
    GripperTrajectory::from_poses(&poses, 0.0, 0.1).unwrap()
}

#[test]
fn latency_never_breaks_joint_limits() {
    for name in ["planar3", "mobile_manipulator", "floating_base", "arm7"] {
        let model = model(name);
        let q0 = DVector::from_fn(model.dof(), |i, _| match model.limits()[i].position {
            Some((lo, hi)) => hi - 0.05 * (hi - lo),
            None => 0.0,
        });
        let commands = aggressive(&model, &q0);
        for delay in [0, 3, 10] {
            for tau in [0.0, 0.05, 0.1] {
                let config = PipelineConfig {
                    q0: Some(q0.iter().copied().collect()),
                    latency: LatencyModel {
                        tau: Gain::Uniform(tau),
                        delay,
                    },
                    ..Default::default()
                };
                let report = run_pipeline(&model, &config, &commands).unwrap();
                assert_eq!(
                    report.summary.limit_violations, 0,
                    "{name} delay {delay} tau {tau}"
                );
                for tick in &report.ticks {
                    let q = DVector::from_column_slice(&tick.q);
                    assert!(
                        model.limit_violations(&q, 0.0).is_empty(),
                        "{name} tick {}",
                        tick.tick
                    );
                }
            }
        }
    }
}

#[test]
fn every_setpoint_gets_its_share_of_ticks() {
    let (model, config, commands) = circle_setup(3.0);
    for (policy_rate, ik_rate) in [(10.0, 100.0), (10.0, 50.0), (5.0, 100.0)] {
        let cfg = PipelineConfig {
            policy_rate,
            ik_rate,
            ..config.clone()
        };
        let report = run_pipeline(&model, &cfg, &commands).unwrap();
        let ratio = (ik_rate / policy_rate) as usize;
        assert_eq!(report.ticks.len(), commands.len() * ratio);
        let duration = commands.len() as f64 / policy_rate;
        assert!((report.ticks.len() as f64 - duration * ik_rate).abs() <= 1.0);
        for (i, tick) in report.ticks.iter().enumerate() {
            assert_eq!(tick.tick, i);
        }
    }
    let bad = PipelineConfig {
        ik_rate: 95.0,
        ..config
    };
    assert!(matches!(
        run_pipeline(&model, &bad, &commands),
        Err(RetargetError::Config(_))
    ));
}

#[test]
fn reruns_are_bitwise_identical() {
    let (model, mut config, commands) = circle_setup(5.0);
    config.latency = LatencyModel {
        tau: Gain::Uniform(0.03),
        delay: 2,
    };
    let a = run_pipeline(&model, &config, &commands).unwrap();
    let b = run_pipeline(&model, &config, &commands).unwrap();
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    a.write_ticks_jsonl(&mut ja).unwrap();
    b.write_ticks_jsonl(&mut jb).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(a.summary_json(), b.summary_json());
}

#[test]
fn wall_keeps_the_gripper_inside() {
    let (model, mut config, commands) = circle_setup(12.0);
    config.walls = vec![retarget_core::retarget::Wall {
        normal: [0.0, 1.0, 0.0],
        lower: f64::NEG_INFINITY,
        upper: 0.15,
    }];
    let report = run_pipeline(&model, &config, &commands).unwrap();
    for e in &report.tracking {
        assert!(e.realized.translation().y <= 0.15 + 1e-3);
    }
    assert!(report.summary.scaled_fraction > 0.0);
}

#[test]
fn identical_embodiments_give_identical_rows() {
    let (model, config, commands) = circle_setup(6.0);
    let emb = Embodiment {
        name: "a".into(),
        model,
        config,
    };
    let rows = compare_embodiments(
        &[
            emb.clone(),
            Embodiment {
                name: "b".into(),
                ..emb
            },
        ],
        &commands,
    )
    .unwrap();
    assert_eq!(rows[0].outcome, rows[1].outcome);
    assert!(rows[0].outcome.is_ok());
}

#[test]
fn slower_joints_track_worse() {
    let model = model("planar3");
    let q0 = fixtures::planar3_ik(PLANAR3_LINKS, 0.65, 0.1, 0.0).unwrap();
    let config = PipelineConfig {
        q0: Some(q0.iter().copied().collect()),
        ..Default::default()
    };
    // a fast circle: 0.5 Hz at 0.1 m radius
    let commands = fixtures::circle(
        Vector3::new(0.55, 0.1, 0.0),
        0.1,
        0.5,
        6.0,
        10.0,
        Pose::identity(),
    )
    .unwrap();
    let slow = model.with_velocity_scale(0.15).unwrap();
    let rows = compare_embodiments(
        &[
            Embodiment {
                name: "base".into(),
                model,
                config: config.clone(),
            },
            Embodiment {
                name: "slow".into(),
                model: slow,
                config,
            },
        ],
        &commands,
    )
    .unwrap();
    let base = rows[0].outcome.as_ref().unwrap();
    let slow = rows[1].outcome.as_ref().unwrap();
    assert!(slow.mean_position_error >= base.mean_position_error);
    assert!(slow.scaled_fraction > 0.0);
    assert!(slow.dhb_distance > base.dhb_distance);
}

#[test]
fn failing_embodiment_still_reports_the_others() {
    let (model, config, commands) = circle_setup(3.0);
    let broken = PipelineConfig {
        q0: Some(vec![0.0; 2]),
        ..config.clone()
    };
    let rows = compare_embodiments(
        &[
            Embodiment {
                name: "ok".into(),
                model: model.clone(),
                config,
            },
            Embodiment {
                name: "broken".into(),
                model,
                config: broken,
            },
        ],
        &commands,
    )
    .unwrap();
    assert!(rows[0].outcome.is_ok());
    assert!(rows[1].outcome.is_err());
}

#[test]
fn exact_tracking_has_zero_invariant_distance() {
    let model = model("planar3");
    let q0 = fixtures::planar3_ik(PLANAR3_LINKS, 0.65, 0.1, 0.0).unwrap();
    let commands = setpoint_at_q0(&model, &q0, 12);
    let config = PipelineConfig {
        q0: Some(q0.iter().copied().collect()),
        ..Default::default()
    };
    let report = run_pipeline(&model, &config, &commands).unwrap();
    let a = dhb_transform(&commands.poses()).unwrap();
    let b = dhb_transform(&report.realized_trajectory().poses()).unwrap();
    assert_eq!(dhb_distance(&a, &a).unwrap(), 0.0);
    assert!(dhb_distance(&a, &b).unwrap() < 1e-20);
}
