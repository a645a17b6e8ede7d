//! Imitation-learning loss terms, evaluated on given values (no training).
//!
//! The total loss is the unweighted sum of a Gaussian-mixture negative
//! log-likelihood on the next differential pose, an L2 loss between DHB
//! invariants of the history extended by the predicted and by the demonstrated
//! steps, and a binary cross-entropy on the grasp logit.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dhb::{dhb_distance, dhb_transform_with_predictions, DhbError};
use crate::kinematics::PoseRecord;
use crate::se3::{DifferentialPose, Pose, Se3Error};

pub const DEFAULT_MODES: usize = 5;
pub const STD_FLOOR: f64 = 1e-4;
pub const DEFAULT_HISTORY: usize = 10;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("invalid mixture: {0}")]
    InvalidParams(String),
    #[error("prediction has {predicted} steps, demonstration has {demo}")]
    LengthMismatch { predicted: usize, demo: usize },
    #[error("sequence losses need at least one step")]
    EmptySequence,
    #[error(transparent)]
    Dhb(#[from] DhbError),
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmMode {
    pub logit: f64,
    /// `[dtx, dty, dtz, drx, dry, drz]`.
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

/// Diagonal Gaussian mixture over differential poses. Standard deviations
/// below [`STD_FLOOR`] are raised to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmRecord")]
pub struct GmmParams {
    modes: Vec<GmmMode>,
}

#[derive(Deserialize)]
struct GmmRecord {
    modes: Vec<GmmMode>,
}

impl TryFrom<GmmRecord> for GmmParams {
    type Error = LossError;

    fn try_from(r: GmmRecord) -> Result<Self, LossError> {
        GmmParams::new(r.modes)
    }
}

impl GmmParams {
    pub fn new(mut modes: Vec<GmmMode>) -> Result<Self, LossError> {
        if modes.is_empty() {
            return Err(LossError::InvalidParams(
                "at least one mode is required".into(),
            ));
        }
        for (k, m) in modes.iter_mut().enumerate() {
            let finite = m.logit.is_finite() && m.mean.iter().chain(&m.std).all(|v| v.is_finite());
            if !finite || m.std.iter().any(|s| *s <= 0.0) {
                return Err(LossError::InvalidParams(format!(
                    "mode {k} needs finite values and positive standard deviations"
                )));
            }
            for s in &mut m.std {
                *s = s.max(STD_FLOOR);
            }
        }
        Ok(Self { modes })
    }

    /// `k` equally weighted modes at the origin with a shared deviation.
    pub fn isotropic(k: usize, std: f64) -> Result<Self, LossError> {
        Self::new(vec![
            GmmMode {
                logit: 0.0,
                mean: [0.0; 6],
                std: [std; 6],
            };
            k
        ])
    }

    pub fn modes(&self) -> &[GmmMode] {
        &self.modes
    }

    pub fn from_json_str(text: &str) -> Result<Self, LossError> {
        serde_json::from_str(text).map_err(|source| LossError::Parse { line: 1, source })
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_normal(x: &[f64; 6], mode: &GmmMode) -> f64 {
    (0..6)
        .map(|i| {
            let z = (x[i] - mode.mean[i]) / mode.std[i];
            -mode.std[i].ln() - HALF_LN_TAU - 0.5 * z * z
        })
        .sum()
}

/// Negative log-likelihood of `target` under the mixture.
pub fn gmm_nll(params: &GmmParams, target: &DifferentialPose) -> f64 {
    let x = target.to_array();
    let log_norm = log_sum_exp(params.modes.iter().map(|m| m.logit));
    -log_sum_exp(
        params
            .modes
            .iter()
            .map(|m| m.logit - log_norm + log_normal(&x, m)),
    )
}

/// Binary cross-entropy on a logit, `max(z, 0) − z·y + ln(1 + e^{−|z|})`.
pub fn grasp_ce(logit: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Invariant-space distance between the history extended by the predicted step
/// and by the demonstrated step.
pub fn invariant_loss_step(
    history: &[Pose],
    predicted: &DifferentialPose,
    demo: &DifferentialPose,
) -> Result<f64, LossError> {
    invariant_loss_sequence(
        history,
        std::slice::from_ref(predicted),
        std::slice::from_ref(demo),
    )
}

/// Receding-horizon form of [`invariant_loss_step`] over `P + 1` steps.
pub fn invariant_loss_sequence(
    history: &[Pose],
    predicted: &[DifferentialPose],
    demo: &[DifferentialPose],
) -> Result<f64, LossError> {
    if predicted.len() != demo.len() {
        return Err(LossError::LengthMismatch {
            predicted: predicted.len(),
            demo: demo.len(),
        });
    }
    if predicted.is_empty() {
        return Err(LossError::EmptySequence);
    }
    let a = dhb_transform_with_predictions(history, predicted)?;
    let b = dhb_transform_with_predictions(history, demo)?;
    Ok(dhb_distance(&a, &b)?)
}

/// Central-difference gradient of [`invariant_loss_step`] with respect to the
/// translation of the predicted step.
pub fn invariant_translation_gradient(
    history: &[Pose],
    predicted: &DifferentialPose,
    demo: &DifferentialPose,
    h: f64,
) -> Result<[f64; 3], LossError> {
    let mut grad = [0.0; 3];
    for (i, g) in grad.iter_mut().enumerate() {
        let (mut plus, mut minus) = (*predicted, *predicted);
        plus.dtranslation[i] += h;
        minus.dtranslation[i] -= h;
        *g = (invariant_loss_step(history, &plus, demo)?
            - invariant_loss_step(history, &minus, demo)?)
            / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub invar: f64,
    pub ce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(nll: f64, invar: f64, ce: f64) -> Self {
        Self {
            nll,
            invar,
            ce,
            total: nll + invar + ce,
        }
    }
}

/// All three terms for one step. The likelihood is of the first demonstrated
/// step; the invariant term covers every step.
pub fn total_loss(
    params: &GmmParams,
    history: &[Pose],
    predicted: &[DifferentialPose],
    demo: &[DifferentialPose],
    grasp_logit: f64,
    grasp_label: bool,
) -> Result<LossBreakdown, LossError> {
    let invar = invariant_loss_sequence(history, predicted, demo)?;
    let nll = gmm_nll(params, &demo[0]);
    Ok(LossBreakdown::new(
        nll,
        invar,
        grasp_ce(grasp_logit, grasp_label),
    ))
}

/// One or several differential steps, each `[dtx, dty, dtz, drx, dry, drz]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Steps {
    One([f64; 6]),
    Many(Vec<[f64; 6]>),
}

impl Steps {
    pub fn to_differentials(&self) -> Vec<DifferentialPose> {
        match self {
            Steps::One(s) => vec![DifferentialPose::from_array(*s)],
            Steps::Many(v) => v.iter().map(|s| DifferentialPose::from_array(*s)).collect(),
        }
    }
}

/// A line of an episode file.
///
/// ```json
/// {"history": [{"p": [0, 0, 0], "q": [1, 0, 0, 0]}, ...],
///  "predicted": [0.01, 0, 0, 0, 0, 0], "demo": [0.01, 0, 0, 0, 0, 0.02],
///  "grasp_logit": 1.5, "grasp_label": 1}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeStep {
    pub history: Vec<PoseRecord>,
    pub predicted: Steps,
    pub demo: Steps,
    pub grasp_logit: f64,
    pub grasp_label: u8,
}

impl EpisodeStep {
    pub fn evaluate(&self, params: &GmmParams) -> Result<LossBreakdown, LossError> {
        let history = self
            .history
            .iter()
            .map(|r| Pose::from_parts(r.p, r.q))
            .collect::<Result<Vec<_>, _>>()?;
        total_loss(
            params,
            &history,
            &self.predicted.to_differentials(),
            &self.demo.to_differentials(),
            self.grasp_logit,
            self.grasp_label != 0,
        )
    }
}

/// Parses an episode file. Blank lines are skipped; errors name the 1-based line.
pub fn read_episode<R: BufRead>(reader: R) -> Result<Vec<EpisodeStep>, LossError> {
    let mut steps = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let step: EpisodeStep = serde_json::from_str(&line).map_err(|source| LossError::Parse {
            line: i + 1,
            source,
        })?;
        if step.grasp_label > 1 {
            return Err(LossError::Parse {
                line: i + 1,
                source: serde::de::Error::custom("grasp_label must be 0 or 1"),
            });
        }
        steps.push(step);
    }
    Ok(steps)
}

/// Mean of each term over the steps; all zeros for an empty slice.
pub fn mean_breakdown(items: &[LossBreakdown]) -> LossBreakdown {
    if items.is_empty() {
        return LossBreakdown::new(0.0, 0.0, 0.0);
    }
    let n = items.len() as f64;
    LossBreakdown::new(
        items.iter().map(|b| b.nll).sum::<f64>() / n,
        items.iter().map(|b| b.invar).sum::<f64>() / n,
        items.iter().map(|b| b.ce).sum::<f64>() / n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn standard_normal_at_its_mode() {
        let p = GmmParams::isotropic(1, 1.0).unwrap();
        let nll = gmm_nll(&p, &DifferentialPose::zero());
        assert!((nll - 3.0 * std::f64::consts::TAU.ln()).abs() < 1e-12);
        assert!((nll - 5.513631).abs() < 1e-6);
    }

    #[test]
    fn floor_applies() {
        let p = GmmParams::isotropic(DEFAULT_MODES, 1e-9).unwrap();
        assert!(p.modes().iter().all(|m| m.std == [STD_FLOOR; 6]));
        assert!(GmmParams::new(Vec::new()).is_err());
        assert!(GmmParams::isotropic(1, 0.0).is_err());
    }

    #[test]
    fn far_target_stays_finite() {
        let p = GmmParams::isotropic(3, 1e-4).unwrap();
        let far = DifferentialPose::new(Vector3::new(5.0, 0.0, 0.0), Vector3::zeros());
        let nll = gmm_nll(&p, &far);
        assert!(nll.is_finite() && nll > 1e8);
    }

    #[test]
    fn cross_entropy_cases() {
        assert!((grasp_ce(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((grasp_ce(0.0, false) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(grasp_ce(20.0, true) <= 1e-8);
        assert!(grasp_ce(-800.0, true).is_finite());
    }

    #[test]
    fn breakdown_sums() {
        let b = LossBreakdown::new(0.1, 0.2, 0.3);
        assert_eq!(b.total, 0.1 + 0.2 + 0.3);
    }

    #[test]
    fn episode_line_numbers() {
        let good = r#"{"history": [{"p": [0,0,0]}, {"p": [0.1,0,0]}, {"p": [0.2,0,0]}], "predicted": [0.1,0,0,0,0,0], "demo": [0.1,0,0,0,0,0], "grasp_logit": 0, "grasp_label": 1}"#;
        let text = format!("{good}\n\n{{bad\n");
        match read_episode(text.as_bytes()) {
            Err(LossError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let steps = read_episode(good.as_bytes()).unwrap();
        let b = steps[0]
            .evaluate(&GmmParams::isotropic(1, 1.0).unwrap())
            .unwrap();
        assert_eq!(b.invar, 0.0);
    }
}
