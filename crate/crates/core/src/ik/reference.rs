//! Brute-force solver for the same prioritized problem as the eSNS solver.
//!
//! Scales come from enumerating every vertex of each level's feasible
//! polytope, and the final weighted solve enumerates every candidate active
//! set and keeps the KKT points. Exponential in the joint count, exact up to
//! the tolerances below.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::problem::{
    null_space, reduce_task, validate_tasks, validate_weight, ConstraintSet, IkSolution, TaskSpec,
};
use super::IkError;

pub const REFERENCE_MAX_DOF: usize = 12;

const VERTEX_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;

/// `{origin + basis · y}`.
struct Affine {
    origin: DVector<f64>,
    basis: DMatrix<f64>,
}

fn solution_set(eq: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<Affine> {
    let n = eq.ncols();
    if eq.nrows() == 0 {
        return Some(Affine {
            origin: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
        });
    }
    let origin = eq.clone().svd(true, true).solve(rhs, 1e-14).ok()?;
    let residual = (eq * &origin - rhs).amax();
    (residual <= VERTEX_TOL * (1.0 + rhs.amax())).then(|| Affine {
        origin,
        basis: null_space(eq),
    })
}

/// Rows `G x ≤ h` scaled to unit normals and pulled back to `y`.
fn pulled_back(g: &DMatrix<f64>, h: &DVector<f64>, set: &Affine) -> (DMatrix<f64>, DVector<f64>) {
    let mut gy = g * &set.basis;
    let mut hy = h - g * &set.origin;
    for r in 0..g.nrows() {
        let norm = g.row(r).norm();
        if norm > 0.0 {
            gy.row_mut(r).unscale_mut(norm);
            hy[r] /= norm;
        }
    }
    (gy, hy)
}

fn well_conditioned(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let s = m.clone().singular_values();
    let max = s.max();
    max > 0.0 && s.min() > 1e-10 * max
}

fn within(gy: &DMatrix<f64>, hy: &DVector<f64>, y: &DVector<f64>) -> bool {
    (gy * y - hy).iter().all(|&v| v <= VERTEX_TOL)
}

/// Calls `visit` with every feasible vertex of `{y : gy y ≤ hy}`.
fn for_each_vertex(gy: &DMatrix<f64>, hy: &DVector<f64>, mut visit: impl FnMut(&DVector<f64>)) {
    let d = gy.ncols();
    if d == 0 {
        let y = DVector::zeros(0);
        if within(gy, hy, &y) {
            visit(&y);
        }
        return;
    }
    for subset in (0..gy.nrows()).combinations(d) {
        let a = gy.select_rows(subset.iter());
        if !well_conditioned(&a) {
            continue;
        }
        let b = DVector::from_iterator(d, subset.iter().map(|&r| hy[r]));
        let Some(y) = a.lu().solve(&b) else { continue };
        if within(gy, hy, &y) {
            visit(&y);
        }
    }
}

/// Largest `c` over the vertices of a level's polytope in `(a, c)`.
fn best_scale(
    eq: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
) -> Option<f64> {
    let set = solution_set(eq, eq_rhs)?;
    let (gy, hy) = pulled_back(g, h, &set);
    let c_index = eq.ncols() - 1;
    let mut best: Option<f64> = None;
    for_each_vertex(&gy, &hy, |y| {
        let c = set.origin[c_index] + set.basis.row(c_index).dot(&y.transpose());
        best = Some(best.map_or(c, |b: f64| b.max(c)));
    });
    best
}

struct KktPoint {
    a: DVector<f64>,
    objective: f64,
    residual: f64,
}

/// Minimum of `½ aᵀHa` over the affine set and `G a ≤ h`, by trying every
/// active set and keeping the KKT points.
fn weighted_minimum(
    set: &Affine,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    weight: &DVector<f64>,
) -> Option<KktPoint> {
    let (gy, hy) = pulled_back(g, h, set);
    let hess = DMatrix::from_diagonal(weight);
    let d = set.basis.ncols();
    let q = set.basis.transpose() * &hess * &set.basis;
    let q0 = set.basis.transpose() * &hess * &set.origin;
    let mut best: Option<KktPoint> = None;
    for size in 0..=d.min(gy.nrows()) {
        for subset in (0..gy.nrows()).combinations(size) {
            let a_s = gy.select_rows(subset.iter());
            if !well_conditioned(&a_s) {
                continue;
            }
            let dim = d + size;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (d, d)).copy_from(&q);
            kkt.view_mut((0, d), (d, size)).copy_from(&a_s.transpose());
            kkt.view_mut((d, 0), (size, d)).copy_from(&a_s);
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, d).copy_from(&(-&q0));
            for (k, &r) in subset.iter().enumerate() {
                rhs[d + k] = hy[r];
            }
            let sol = if dim == 0 {
                DVector::zeros(0)
            } else {
                let Some(sol) = kkt.lu().solve(&rhs) else {
                    continue;
                };
                sol
            };
            let y = sol.rows(0, d).into_owned();
            let lambda = sol.rows(d, size).into_owned();
            if lambda.iter().any(|&l| l < -DUAL_TOL) || !within(&gy, &hy, &y) {
                continue;
            }
            let stationarity = (&q * &y + &q0 + a_s.transpose() * &lambda).amax();
            let primal = (&gy * &y - &hy).iter().fold(0.0_f64, |m, &v| m.max(v));
            let dual = lambda.iter().fold(0.0_f64, |m, &l| m.max(-l));
            let a = &set.origin + &set.basis * &y;
            let objective = 0.5 * a.dot(&hess.diagonal().component_mul(&a));
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(KktPoint {
                    a,
                    objective,
                    residual: stationarity + primal + dual,
                });
            }
        }
    }
    best
}

fn check_size(constraints: &ConstraintSet) -> Result<usize, IkError> {
    let n = constraints.dim();
    if n > REFERENCE_MAX_DOF {
        return Err(IkError::TooLarge {
            max: REFERENCE_MAX_DOF,
            got: n,
        });
    }
    constraints.validate(n)?;
    if constraints
        .lower
        .iter()
        .chain(constraints.upper.iter())
        .any(|v| v.is_infinite())
    {
        return Err(IkError::NonFinite("box bounds"));
    }
    Ok(n)
}

/// Solves the prioritized task-scaling problem by enumeration. Meant as an
/// oracle for small instances (at most [`REFERENCE_MAX_DOF`] joints, finite box).
pub fn solve_reference_qp(
    tasks: &[TaskSpec],
    constraints: &ConstraintSet,
    weight: &DVector<f64>,
) -> Result<IkSolution, IkError> {
    let n = check_size(constraints)?;
    validate_weight(weight, n)?;
    let order = validate_tasks(tasks, n)?;
    if constraints.is_inverted() {
        return Ok(IkSolution::infeasible(n, tasks.len()));
    }
    let (g, h) = constraints.inequalities();

    let mut kept_rows: Vec<DVector<f64>> = Vec::new();
    let mut kept_rhs: Vec<f64> = Vec::new();
    let mut z = DMatrix::identity(n, n);
    let mut scales = vec![0.0; tasks.len()];
    let mut dropped = Vec::new();
    for &ti in &order {
        let task = &tasks[ti];
        let red = reduce_task(&task.jacobian, &task.xdot_des, &z);
        if red.rank() == 0 {
            scales[ti] = 1.0;
            continue;
        }
        let (n_kept, rank) = (kept_rows.len(), red.rank());
        let mut eq = DMatrix::zeros(n_kept + rank, n + 1);
        let mut eq_rhs = DVector::zeros(n_kept + rank);
        for (k, row) in kept_rows.iter().enumerate() {
            eq.view_mut((k, 0), (1, n)).copy_from(&row.transpose());
            eq_rhs[k] = kept_rhs[k];
        }
        eq.view_mut((n_kept, 0), (rank, n)).copy_from(&red.rows);
        eq.view_mut((n_kept, n), (rank, 1)).copy_from(&(-&red.rhs));
        let m = g.nrows();
        let mut g_ext = DMatrix::zeros(m + 2, n + 1);
        g_ext.view_mut((0, 0), (m, n)).copy_from(&g);
        g_ext[(m, n)] = 1.0;
        g_ext[(m + 1, n)] = -1.0;
        let mut h_ext = DVector::zeros(m + 2);
        h_ext.rows_mut(0, m).copy_from(&h);
        h_ext[m] = 1.0;
        h_ext[m + 1] = if task.scalable { 0.0 } else { -1.0 };

        let Some(c) = best_scale(&eq, &eq_rhs, &g_ext, &h_ext) else {
            dropped.push(ti);
            continue;
        };
        let c = c.clamp(0.0, 1.0);
        scales[ti] = c;
        for k in 0..rank {
            kept_rows.push(red.rows.row(k).transpose());
            kept_rhs.push(c * red.rhs[k]);
        }
        z = red.null;
    }

    let mut eq = DMatrix::zeros(kept_rows.len(), n);
    for (k, row) in kept_rows.iter().enumerate() {
        eq.row_mut(k).copy_from(&row.transpose());
    }
    let eq_rhs = DVector::from_vec(kept_rhs);
    let Some(set) = solution_set(&eq, &eq_rhs) else {
        return Ok(IkSolution::infeasible(n, tasks.len()));
    };
    match weighted_minimum(&set, &g, &h, weight) {
        Some(p) => Ok(IkSolution::finish(
            p.a,
            scales,
            dropped,
            constraints,
            p.residual,
        )),
        None => Ok(IkSolution::infeasible(n, tasks.len())),
    }
}

/// Whether the top-priority `task` admits `J a = c ẋ` (on its reachable
/// directions) inside `constraints`.
pub fn scale_is_feasible(
    task: &TaskSpec,
    constraints: &ConstraintSet,
    c: f64,
) -> Result<bool, IkError> {
    let n = check_size(constraints)?;
    validate_tasks(std::slice::from_ref(task), n)?;
    if constraints.is_inverted() {
        return Ok(false);
    }
    let red = reduce_task(&task.jacobian, &task.xdot_des, &DMatrix::identity(n, n));
    let Some(set) = solution_set(&red.rows, &(&red.rhs * c)) else {
        return Ok(false);
    };
    let (g, h) = constraints.inequalities();
    let (gy, hy) = pulled_back(&g, &h, &set);
    let mut found = false;
    for_each_vertex(&gy, &hy, |_| found = true);
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::SolveStatus;

    #[test]
    fn one_dof_double_speed() {
        let t = TaskSpec::new(
            1,
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 4.0),
        );
        let cons = ConstraintSet::from_box(
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 1.0),
        );
        let sol = solve_reference_qp(
            std::slice::from_ref(&t),
            &cons,
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert!((sol.scales[0] - 0.5).abs() < 1e-12);
        assert!((sol.a[0] - 1.0).abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-8);
        assert!(scale_is_feasible(&t, &cons, 0.5).unwrap());
        assert!(!scale_is_feasible(&t, &cons, 0.5001).unwrap());
    }

    #[test]
    fn inverted_box() {
        let t = TaskSpec::new(
            1,
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        );
        let cons = ConstraintSet::from_box(
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        );
        let sol = solve_reference_qp(&[t], &cons, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_large_problems() {
        let cons = ConstraintSet::from_box(
            DVector::from_element(13, -1.0),
            DVector::from_element(13, 1.0),
        );
        assert!(matches!(
            solve_reference_qp(&[], &cons, &DVector::from_element(13, 1.0)),
            Err(IkError::TooLarge { .. })
        ));
    }
}
