//! DHB motion invariants of a pose window.
//!
//! A window of `T` poses is reduced to relative positions and (unwrapped)
//! rotation vectors with respect to its first pose. Their consecutive
//! differences drive two moving frames, one for the linear stream and one for
//! the angular stream. Each of the `T − 2` output columns holds, per stream, the
//! step magnitude and the sine / double-angle sine of the two frame rotation
//! angles between consecutive frames:
//!
//! ```text
//! [m_p, sin θ¹_p, sin 2θ¹_p, sin θ²_p, sin 2θ²_p, m_r, sin θ¹_r, sin 2θ¹_r, sin θ²_r, sin 2θ²_r]
//! ```
//!
//! Degenerate steps (norm below [`DEGENERACY_EPS`]) and collinear consecutive
//! steps never produce NaN: frames are carried forward from the previous step
//! and the affected rotation angles are zero.

use std::io::Write;

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::se3::{relative_positions_orientations, DifferentialPose, Pose, Se3Error};

pub const DEGENERACY_EPS: f64 = 1e-8;
pub const CHANNELS: usize = 10;

pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "m_p",
    "sin_theta1_p",
    "sin_2theta1_p",
    "sin_theta2_p",
    "sin_2theta2_p",
    "m_r",
    "sin_theta1_r",
    "sin_2theta1_r",
    "sin_theta2_r",
    "sin_2theta2_r",
];

#[derive(Debug, Error)]
pub enum DhbError {
    #[error("window of {len} poses is too short (need at least 3)")]
    WindowTooShort { len: usize },
    #[error("invariant shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error(transparent)]
    Se3(#[from] Se3Error),
}

/// 10 × (T − 2) invariant descriptor; see the module docs for the row order.
#[derive(Clone, Debug, PartialEq)]
pub struct DhbInvariants {
    channels: DMatrix<f64>,
}

impl DhbInvariants {
    pub fn channels(&self) -> &DMatrix<f64> {
        &self.channels
    }

    pub fn columns(&self) -> usize {
        self.channels.ncols()
    }

    pub fn row(&self, channel: usize) -> Vec<f64> {
        self.channels.row(channel).iter().copied().collect()
    }

    pub fn get(&self, channel: usize, column: usize) -> f64 {
        self.channels[(channel, column)]
    }

    /// Builds a descriptor from raw channel data (10 rows).
    pub fn from_matrix(channels: DMatrix<f64>) -> Option<Self> {
        (channels.nrows() == CHANNELS).then_some(Self { channels })
    }

    /// Header row of channel names, then one row per column.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CHANNEL_NAMES)?;
        for col in 0..self.columns() {
            w.write_record((0..CHANNELS).map(|ch| format_f64(self.channels[(ch, col)])))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct StreamInvariants {
    magnitude: Vec<f64>,
    theta1: Vec<f64>,
    theta2: Vec<f64>,
}

fn unit_axis(i: usize) -> Vector3<f64> {
    let mut e = Vector3::zeros();
    e[i] = 1.0;
    e
}

fn dominant_axis(v: &Vector3<f64>) -> Vector3<f64> {
    let i = v.iamax();
    unit_axis(i) * v[i].signum()
}

/// Unit vector perpendicular to `x`, built with the basis axis least aligned with it.
fn fallback_perpendicular(x: &Vector3<f64>) -> Vector3<f64> {
    let i = x.iamin();
    x.cross(&unit_axis(i)).normalize()
}

fn stream_invariants(deltas: &[Vector3<f64>]) -> StreamInvariants {
    let n = deltas.len();
    let degenerate: Vec<bool> = deltas.iter().map(|d| d.norm() < DEGENERACY_EPS).collect();

    let seed_axis = deltas
        .iter()
        .zip(&degenerate)
        .find(|(_, &deg)| !deg)
        .map(|(d, _)| dominant_axis(d))
        .unwrap_or_else(Vector3::x);

    let mut xs: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for (d, &deg) in deltas.iter().zip(&degenerate) {
        let x = if !deg {
            d / d.norm()
        } else {
            xs.last().copied().unwrap_or(seed_axis)
        };
        xs.push(x);
    }

    // ys[k] for k in 0..n; the last one has no successor step and is carried.
    let mut ys: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let cross = if k + 1 < n {
            xs[k].cross(&xs[k + 1])
        } else {
            Vector3::zeros()
        };
        let mut y = if cross.norm() >= DEGENERACY_EPS {
            cross.normalize()
        } else {
            ys.last()
                .copied()
                .unwrap_or_else(|| fallback_perpendicular(&xs[k]))
        };
        if let Some(prev) = ys.last() {
            if y.dot(prev) < 0.0 {
                y = -y;
            }
        }
        ys.push(y);
    }

    let cols = n.saturating_sub(1);
    let mut out = StreamInvariants {
        magnitude: Vec::with_capacity(cols),
        theta1: Vec::with_capacity(cols),
        theta2: Vec::with_capacity(cols),
    };
    for k in 0..cols {
        out.magnitude.push(deltas[k].norm());
        if degenerate[k] || degenerate[k + 1] {
            out.theta1.push(0.0);
            out.theta2.push(0.0);
            continue;
        }
        let (x0, x1, y0, y1) = (&xs[k], &xs[k + 1], &ys[k], &ys[k + 1]);
        out.theta1.push(x0.cross(x1).dot(y0).atan2(x0.dot(x1)));
        out.theta2.push(y0.cross(y1).dot(x1).atan2(y0.dot(y1)));
    }
    out
}

/// DHB transform of a window of `T ≥ 3` poses, producing `T − 2` columns.
pub fn dhb_transform(window: &[Pose]) -> Result<DhbInvariants, DhbError> {
    if window.len() < 3 {
        return Err(DhbError::WindowTooShort { len: window.len() });
    }
    let (positions, orientations) = relative_positions_orientations(window)?;
    let dp: Vec<Vector3<f64>> = positions.windows(2).map(|w| w[1] - w[0]).collect();
    let dr: Vec<Vector3<f64>> = orientations.windows(2).map(|w| w[1] - w[0]).collect();
    let linear = stream_invariants(&dp);
    let angular = stream_invariants(&dr);

    let cols = window.len() - 2;
    let mut channels = DMatrix::zeros(CHANNELS, cols);
    for (offset, stream) in [(0usize, &linear), (5usize, &angular)] {
        for k in 0..cols {
            let (t1, t2) = (stream.theta1[k], stream.theta2[k]);
            channels[(offset, k)] = stream.magnitude[k];
            channels[(offset + 1, k)] = t1.sin();
            channels[(offset + 2, k)] = (2.0 * t1).sin();
            channels[(offset + 3, k)] = t2.sin();
            channels[(offset + 4, k)] = (2.0 * t2).sin();
        }
    }
    Ok(DhbInvariants { channels })
}

/// Sum of squared channel-wise differences.
pub fn dhb_distance(a: &DhbInvariants, b: &DhbInvariants) -> Result<f64, DhbError> {
    let (sa, sb) = (a.channels.shape(), b.channels.shape());
    if sa != sb {
        return Err(DhbError::ShapeMismatch {
            left: sa,
            right: sb,
        });
    }
    Ok((&a.channels - &b.channels).norm_squared())
}

/// Extends `history` by applying each step in turn to the last pose.
pub fn extend_window(history: &[Pose], steps: &[DifferentialPose]) -> Vec<Pose> {
    let mut window = Vec::with_capacity(history.len() + steps.len());
    window.extend_from_slice(history);
    for step in steps {
        let last = window.last().copied().unwrap_or_default();
        window.push(last.apply(step));
    }
    window
}

/// Transform of `history` followed by one predicted step.
pub fn dhb_transform_with_prediction(
    history: &[Pose],
    predicted: &DifferentialPose,
) -> Result<DhbInvariants, DhbError> {
    dhb_transform_with_predictions(history, std::slice::from_ref(predicted))
}

/// Transform of `history` followed by a sequence of predicted steps.
pub fn dhb_transform_with_predictions(
    history: &[Pose],
    predicted: &[DifferentialPose],
) -> Result<DhbInvariants, DhbError> {
    if history.len() < 3 {
        return Err(DhbError::WindowTooShort { len: history.len() });
    }
    dhb_transform(&extend_window(history, predicted))
}
