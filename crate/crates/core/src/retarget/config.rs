use std::cmp::Ordering;
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::RetargetError;
use crate::ik::TaskGains;
use crate::kinematics::RobotModel;

/// One gain for every axis, or one per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Uniform(f64),
    PerAxis(Vec<f64>),
}

impl Gain {
    pub fn resolve(&self, len: usize, name: &str) -> Result<Vec<f64>, RetargetError> {
        let values = match self {
            Gain::Uniform(g) => vec![*g; len],
            Gain::PerAxis(v) if v.len() == len => v.clone(),
            Gain::PerAxis(v) => {
                return Err(RetargetError::Config(format!(
                    "{name} has {} entries, expected {len}",
                    v.len()
                )))
            }
        };
        if values.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(RetargetError::Config(format!(
                "{name} must be finite and non-negative"
            )));
        }
        Ok(values)
    }
}

/// Joint-level response to commanded velocities: a pure delay of `delay` IK
/// ticks followed by a first-order lag with time constant `tau` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub tau: Gain,
    pub delay: usize,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            tau: Gain::Uniform(0.0),
            delay: 0,
        }
    }
}

/// Slab `lower ≤ normal · p ≤ upper` on the gripper position, root frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub normal: [f64; 3],
    #[serde(default = "neg_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf")]
    pub upper: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl Wall {
    pub fn unit_normal(&self) -> Vector3<f64> {
        Vector3::from(self.normal).normalize()
    }
}

/// Pipeline settings, read from TOML or JSON.
///
/// ```toml
/// policy_rate = 10.0      # setpoints per second
/// ik_rate = 100.0         # IK ticks per second, a multiple of policy_rate
/// k_grip = 10.0           # or six values: linear xyz, angular xyz
/// k_bias = 1.0            # or one value per DOF
/// weight = 1.0            # diagonal of H, scalar or per DOF
/// q0 = [0.0, 0.5, 0.5]    # initial configuration, zeros when omitted
/// q_bias = [0.0, 0.5, 0.5]  # posture target, q0 when omitted
/// settle_time = 10.0      # setpoints before this time are excluded from steady-state metrics
///
/// [latency]
/// tau = 0.0               # seconds, scalar or per DOF
/// delay = 0               # IK ticks
///
/// [[walls]]
/// normal = [0.0, 0.0, 1.0]
/// lower = 0.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub policy_rate: f64,
    pub ik_rate: f64,
    pub k_grip: Gain,
    pub k_bias: Gain,
    pub weight: Gain,
    pub q0: Option<Vec<f64>>,
    pub q_bias: Option<Vec<f64>>,
    pub settle_time: f64,
    pub latency: LatencyModel,
    pub walls: Vec<Wall>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            policy_rate: 10.0,
            ik_rate: 100.0,
            k_grip: Gain::Uniform(10.0),
            k_bias: Gain::Uniform(1.0),
            weight: Gain::Uniform(1.0),
            q0: None,
            q_bias: None,
            settle_time: 0.0,
            latency: LatencyModel::default(),
            walls: Vec::new(),
        }
    }
}

/// A configuration checked against a model, with every vector resolved.
#[derive(Clone, Debug)]
pub(crate) struct Resolved {
    pub ratio: usize,
    pub dt: f64,
    pub gains: TaskGains,
    pub weight: DVector<f64>,
    pub q0: DVector<f64>,
    pub q_bias: DVector<f64>,
    pub tau: Vec<f64>,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RetargetError> {
        toml::from_str(text).map_err(|e| RetargetError::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, RetargetError> {
        serde_json::from_str(text).map_err(|e| RetargetError::Config(e.to_string()))
    }

    /// JSON when the extension is `.json`, TOML otherwise.
    pub fn from_file(path: &Path) -> Result<Self, RetargetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RetargetError::Config(format!("{}: {e}", path.display())))?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// IK ticks per setpoint.
    pub fn ticks_per_setpoint(&self) -> Result<usize, RetargetError> {
        if !(self.policy_rate > 0.0 && self.ik_rate > 0.0) || !self.ik_rate.is_finite() {
            return Err(RetargetError::Config("rates must be positive".into()));
        }
        let ratio = self.ik_rate / self.policy_rate;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
            return Err(RetargetError::Config(format!(
                "ik_rate {} is not a multiple of policy_rate {}",
                self.ik_rate, self.policy_rate
            )));
        }
        Ok(rounded as usize)
    }

    pub(crate) fn resolve(&self, model: &RobotModel) -> Result<Resolved, RetargetError> {
        let n = model.dof();
        let ratio = self.ticks_per_setpoint()?;
        let grip = self.k_grip.resolve(6, "k_grip")?;
        let bias = self.k_bias.resolve(n, "k_bias")?;
        let weight = self.weight.resolve(n, "weight")?;
        if weight.iter().any(|w| *w <= 0.0) {
            return Err(RetargetError::Config("weight must be positive".into()));
        }
        let tau = self.latency.tau.resolve(n, "latency.tau")?;
        let vector = |v: &Option<Vec<f64>>, name: &str, default: DVector<f64>| match v {
            None => Ok(default),
            Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => {
                Ok(DVector::from_vec(v.clone()))
            }
            Some(v) => Err(RetargetError::Config(format!(
                "{name} needs {n} finite entries, got {}",
                v.len()
            ))),
        };
        let q0 = vector(&self.q0, "q0", DVector::zeros(n))?;
        let outside = model.limit_violations(&q0, 0.0);
        if !outside.is_empty() {
            return Err(RetargetError::Config(format!(
                "q0 violates limits of DOF {outside:?}"
            )));
        }
        let q_bias = vector(&self.q_bias, "q_bias", q0.clone())?;
        for w in &self.walls {
            if Vector3::from(w.normal).norm().partial_cmp(&0.0) != Some(Ordering::Greater)
                || w.lower.is_nan()
                || w.upper.is_nan()
                || w.lower > w.upper
            {
                return Err(RetargetError::Config(
                    "wall needs a nonzero normal and lower ≤ upper".into(),
                ));
            }
        }
        let mut grip_arr = [0.0; 6];
        grip_arr.copy_from_slice(&grip);
        Ok(Resolved {
            ratio,
            dt: 1.0 / self.ik_rate,
            gains: TaskGains {
                grip: grip_arr,
                bias: DVector::from_vec(bias),
            },
            weight: DVector::from_vec(weight),
            q0,
            q_bias,
            tau,
        })
    }
}
