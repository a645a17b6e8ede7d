#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use retarget_core::ik::{CartesianRow, ConstraintSet, TaskSpec};
use retarget_core::kinematics::{forward_kinematics, integrate, RobotModel};
use retarget_core::se3::log_rotation_matrix;

pub const MODELS: [&str; 5] = [
    "planar2",
    "planar3",
    "mobile_manipulator",
    "floating_base",
    "arm7",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| normal(rng))
}

pub struct Instance {
    pub tasks: Vec<TaskSpec>,
    pub constraints: ConstraintSet,
    pub weight: DVector<f64>,
}

/// A feasible gripper-like task plus a posture task on up to six joints. About
/// half the instances get bounds tighter than the unconstrained velocity, a few
/// get a box that excludes zero, and some get a wall row.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=n.min(6));
    let j1 = gaussian_matrix(rng, m, n);
    let x1 = gaussian_vector(rng, m);
    let x2 = gaussian_vector(rng, n) * 0.5;
    let weight = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));

    let tight = rng.random_bool(0.5);
    let reach = j1.clone().svd(true, true).solve(&x1, 1e-12).unwrap();
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for i in 0..n {
        let size = reach[i].abs().max(x2[i].abs()) + 0.1;
        let (lo, hi) = if tight && rng.random_bool(0.6) {
            (
                -size * rng.random_range(0.1..0.9),
                size * rng.random_range(0.1..0.9),
            )
        } else {
            (
                -size * rng.random_range(1.5..3.0),
                size * rng.random_range(1.5..3.0),
            )
        };
        lower[i] = lo;
        upper[i] = hi;
        if rng.random_bool(0.08) {
            // braking band that excludes zero, sometimes collapsed to a point
            let p = rng.random_range(-size..size);
            let w = if rng.random_bool(0.5) {
                0.0
            } else {
                0.1 * size
            };
            lower[i] = p;
            upper[i] = p + w;
        }
    }
    let mut constraints = ConstraintSet::from_box(lower, upper);
    if rng.random_bool(0.25) {
        let row = RowDVector::from_fn(n, |_, _| normal(rng));
        let reach_along = (&row * &reach)[0].abs();
        // centred on the box midpoint so the instance stays feasible
        let center = (&constraints.lower + &constraints.upper) * 0.5;
        let mid = (&row * center)[0];
        constraints.cartesian.push(CartesianRow {
            row,
            lower: mid - reach_along * rng.random_range(0.2..1.5) - 0.05,
            upper: mid + reach_along * rng.random_range(0.2..1.5) + 0.05,
        });
    }
    Instance {
        tasks: vec![
            TaskSpec::new(1, j1, x1),
            TaskSpec::new(2, DMatrix::identity(n, n), x2),
        ],
        constraints,
        weight,
    }
}

pub fn model(name: &str) -> retarget_core::kinematics::RobotModel {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("models")
        .join(format!("{name}.json"));
    retarget_core::kinematics::RobotModel::from_json_file(&path).expect("example model loads")
}

pub const PLANAR3_LINKS: [f64; 3] = [0.4, 0.3, 0.2];
pub const CIRCLE_CENTER: [f64; 3] = [0.55, 0.1, 0.0];
pub const CIRCLE_RADIUS: f64 = 0.1;
pub const CIRCLE_FREQUENCY: f64 = 0.1;

/// Planar arm on the circle fixture, starting on its first setpoint.
pub fn circle_setup(
    duration: f64,
) -> (
    retarget_core::kinematics::RobotModel,
    retarget_core::retarget::PipelineConfig,
    retarget_core::se3::GripperTrajectory,
) {
    use nalgebra::Vector3;
    use retarget_core::fixtures;
    let model = model("planar3");
    let center = Vector3::from(CIRCLE_CENTER);
    let commands = fixtures::circle(
        center,
        CIRCLE_RADIUS,
        CIRCLE_FREQUENCY,
        duration,
        10.0,
        retarget_core::se3::Pose::identity(),
    )
    .unwrap();
    let q0 = fixtures::planar3_ik(PLANAR3_LINKS, center.x + CIRCLE_RADIUS, center.y, 0.0).unwrap();
    let config = retarget_core::retarget::PipelineConfig {
        q0: Some(q0.iter().copied().collect()),
        settle_time: 5.0,
        ..Default::default()
    };
    (model, config, commands)
}

pub fn random_configuration(model: &RobotModel, rng: &mut impl Rng) -> DVector<f64> {
    let rot = model.rotational_floating_mask();
    let mut q = DVector::from_fn(model.dof(), |i, _| match model.limits()[i].position {
        Some((lo, hi)) => rng.random_range(lo..hi),
        None => rng.random_range(-2.0..2.0),
    });
    // keep floating rotation vectors inside the principal ball
    for i in (0..model.dof()).filter(|&i| rot[i]) {
        q[i] = rng.random_range(-1.5..1.5);
    }
    q
}

/// Column-by-column central differences of the gripper pose, stepping each
/// coordinate through `integrate` so floating rotations move on SO(3).
pub fn finite_difference_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    h: f64,
) -> nalgebra::DMatrix<f64> {
    let n = model.dof();
    let mut jac = nalgebra::DMatrix::zeros(6, n);
    for c in 0..n {
        let mut e = DVector::zeros(n);
        e[c] = h;
        let plus = forward_kinematics(model, &integrate(model, q, &e, 1.0).unwrap()).unwrap();
        let minus = forward_kinematics(model, &integrate(model, q, &-e, 1.0).unwrap()).unwrap();
        let lin = (plus.translation() - minus.translation()) / (2.0 * h);
        let ang =
            log_rotation_matrix(&(plus.rotation_matrix() * minus.rotation_matrix().transpose()))
                / (2.0 * h);
        jac.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, c).copy_from(&ang);
    }
    jac
}
