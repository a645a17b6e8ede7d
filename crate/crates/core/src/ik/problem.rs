use nalgebra::{DMatrix, DVector, RowDVector};

use super::IkError;

/// Singular values of a reduced task at or below this are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-4;

/// Slack allowed on every box and Cartesian row of a returned solution.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    /// 1 is the highest priority.
    pub priority: usize,
    pub jacobian: DMatrix<f64>,
    pub xdot_des: DVector<f64>,
    /// A non-scalable task is imposed at full speed or dropped.
    pub scalable: bool,
}

impl TaskSpec {
    pub fn new(priority: usize, jacobian: DMatrix<f64>, xdot_des: DVector<f64>) -> Self {
        Self {
            priority,
            jacobian,
            xdot_des,
            scalable: true,
        }
    }
}

/// `lower ≤ row · a ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianRow {
    pub row: RowDVector<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub cartesian: Vec<CartesianRow>,
}

impl ConstraintSet {
    pub fn from_box(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self {
            lower,
            upper,
            cartesian: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Whether some row has `lower > upper`.
    pub fn is_inverted(&self) -> bool {
        self.lower.iter().zip(self.upper.iter()).any(|(l, u)| l > u)
            || self.cartesian.iter().any(|c| c.lower > c.upper)
    }

    /// Largest violation of any row by `a`, zero when `a` is feasible.
    pub fn max_violation(&self, a: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..a.len() {
            worst = worst.max(a[i] - self.upper[i]).max(self.lower[i] - a[i]);
        }
        for c in &self.cartesian {
            let v = (&c.row * a)[0];
            worst = worst.max(v - c.upper).max(c.lower - v);
        }
        worst
    }

    /// One-sided rows `G a ≤ h`: per joint the upper then the lower bound, then
    /// the Cartesian rows in the same order. Infinite bounds produce no row.
    pub(crate) fn inequalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut rows: Vec<(RowDVector<f64>, f64)> = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut e = RowDVector::zeros(n);
            e[i] = 1.0;
            if self.upper[i].is_finite() {
                rows.push((e.clone(), self.upper[i]));
            }
            if self.lower[i].is_finite() {
                rows.push((-e, -self.lower[i]));
            }
        }
        for c in &self.cartesian {
            if c.upper.is_finite() {
                rows.push((c.row.clone(), c.upper));
            }
            if c.lower.is_finite() {
                rows.push((-c.row.clone(), -c.lower));
            }
        }
        stack_rows(n, rows)
    }

    pub(crate) fn validate(&self, n: usize) -> Result<(), IkError> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(IkError::DimensionMismatch {
                expected: n,
                got: self.lower.len().max(self.upper.len()),
            });
        }
        if self
            .lower
            .iter()
            .chain(self.upper.iter())
            .any(|v| v.is_nan())
        {
            return Err(IkError::NonFinite("box bounds"));
        }
        for c in &self.cartesian {
            if c.row.len() != n {
                return Err(IkError::DimensionMismatch {
                    expected: n,
                    got: c.row.len(),
                });
            }
            if c.row.iter().any(|v| !v.is_finite()) || c.lower.is_nan() || c.upper.is_nan() {
                return Err(IkError::NonFinite("Cartesian row"));
            }
        }
        Ok(())
    }

    /// Box-clamped zero velocity.
    pub(crate) fn clamped_zero(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            0.0_f64.clamp(self.lower[i], self.upper[i])
        })
    }

    pub(crate) fn saturated_joints(&self, a: &DVector<f64>) -> Vec<usize> {
        (0..a.len())
            .filter(|&i| {
                (a[i] - self.upper[i]).abs() <= FEASIBILITY_TOL
                    || (a[i] - self.lower[i]).abs() <= FEASIBILITY_TOL
            })
            .collect()
    }
}

pub(crate) fn stack_rows(
    cols: usize,
    rows: Vec<(RowDVector<f64>, f64)>,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut g = DMatrix::zeros(rows.len(), cols);
    let mut h = DVector::zeros(rows.len());
    for (k, (r, b)) in rows.into_iter().enumerate() {
        g.row_mut(k).copy_from(&r);
        h[k] = b;
    }
    (g, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// Every task ran at full speed.
    Optimal,
    /// At least one task was slowed down.
    Saturated,
    /// The constraint set admits no velocity at all.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution {
    pub a: DVector<f64>,
    /// One scale per task, in priority order.
    pub scales: Vec<f64>,
    pub status: SolveStatus,
    /// Joints whose velocity sits on a box bound.
    pub saturated: Vec<usize>,
    /// Tasks skipped because no scale in `[0, 1]` fits the constraints; their
    /// scale reads 0.
    pub dropped: Vec<usize>,
    /// Stationarity and feasibility residual of the final weighted solve.
    pub kkt_residual: f64,
}

impl IkSolution {
    pub(crate) fn infeasible(n: usize, tasks: usize) -> Self {
        Self {
            a: DVector::zeros(n),
            scales: vec![0.0; tasks],
            status: SolveStatus::Infeasible,
            saturated: Vec::new(),
            dropped: (0..tasks).collect(),
            kkt_residual: f64::INFINITY,
        }
    }

    pub(crate) fn finish(
        a: DVector<f64>,
        scales: Vec<f64>,
        dropped: Vec<usize>,
        constraints: &ConstraintSet,
        kkt: f64,
    ) -> Self {
        let status = if scales.iter().all(|&c| c >= 1.0 - 1e-12) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Saturated
        };
        Self {
            saturated: constraints.saturated_joints(&a),
            a,
            scales,
            status,
            dropped,
            kkt_residual: kkt,
        }
    }
}

/// A task restricted to the directions it can still influence.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTask {
    /// `Uᵀ J`, one row per retained singular direction.
    pub rows: DMatrix<f64>,
    /// `Uᵀ ẋ`.
    pub rhs: DVector<f64>,
    /// Basis of the null space left for lower levels.
    pub null: DMatrix<f64>,
}

impl ReducedTask {
    pub fn rank(&self) -> usize {
        self.rows.nrows()
    }
}

/// Projects a task onto the range of `J Z`, with `Z` the null-space basis left
/// by higher priorities. Singular values at or below [`SINGULAR_CUTOFF`] count
/// as zero; their directions stay free for lower levels.
pub fn reduce_task(jacobian: &DMatrix<f64>, xdot: &DVector<f64>, z: &DMatrix<f64>) -> ReducedTask {
    let (m, n) = jacobian.shape();
    let r = z.ncols();
    if m == 0 || r == 0 {
        return ReducedTask {
            rows: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
            null: z.clone(),
        };
    }
    let jz = jacobian * z;
    let p = m.max(r);
    let mut padded = DMatrix::zeros(p, r);
    padded.rows_mut(0, m).copy_from(&jz);
    let svd = padded.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");

    let mut range = Vec::new();
    let mut null = Vec::new();
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > SINGULAR_CUTOFF {
            range.push(u.column(k).rows(0, m).into_owned());
        } else {
            null.push(z * v_t.row(k).transpose());
        }
    }
    let mut rows = DMatrix::zeros(range.len(), n);
    let mut rhs = DVector::zeros(range.len());
    for (k, uk) in range.iter().enumerate() {
        rows.row_mut(k).copy_from(&(uk.transpose() * jacobian));
        rhs[k] = uk.dot(xdot);
    }
    let null = if null.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null)
    };
    ReducedTask { rows, rhs, null }
}

/// Orthonormal basis of `{x : A x = 0}` for a matrix with independent rows.
pub(crate) fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, n) = a.shape();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    let mut square = DMatrix::zeros(n.max(k), n);
    for i in 0..k {
        let row = a.row(i);
        let norm = row.norm();
        if norm > 0.0 {
            square.row_mut(i).copy_from(&(row / norm));
        }
    }
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= 1e-10)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Checks dimensions and orders tasks by priority. Returns the sort order.
pub(crate) fn validate_tasks(tasks: &[TaskSpec], n: usize) -> Result<Vec<usize>, IkError> {
    for t in tasks {
        if t.jacobian.ncols() != n {
            return Err(IkError::DimensionMismatch {
                expected: n,
                got: t.jacobian.ncols(),
            });
        }
        if t.xdot_des.len() != t.jacobian.nrows() {
            return Err(IkError::DimensionMismatch {
                expected: t.jacobian.nrows(),
                got: t.xdot_des.len(),
            });
        }
        if t.jacobian
            .iter()
            .chain(t.xdot_des.iter())
            .any(|v| !v.is_finite())
        {
            return Err(IkError::NonFinite("task"));
        }
    }
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| tasks[i].priority);
    for w in order.windows(2) {
        if tasks[w[0]].priority == tasks[w[1]].priority {
            return Err(IkError::DuplicatePriority(tasks[w[0]].priority));
        }
    }
    Ok(order)
}

pub(crate) fn validate_weight(h: &DVector<f64>, n: usize) -> Result<(), IkError> {
    if h.len() != n {
        return Err(IkError::DimensionMismatch {
            expected: n,
            got: h.len(),
        });
    }
    match h.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        Some(&w) => Err(IkError::BadWeight(w)),
        None => Ok(()),
    }
}
