use nalgebra::{DMatrix, DVector, RowDVector};

use super::active_set::{find_feasible, minimize, Constraints, Objective};
use super::problem::{
    reduce_task, stack_rows, validate_tasks, validate_weight, ConstraintSet, IkSolution, TaskSpec,
};
use super::IkError;

/// Task-scaling solver that saturates constraints in the null space of each
/// priority level.
///
/// Per level it first finds the largest feasible scale, moving inside the null
/// space of the saturated rows and stopping at the first row that blocks.
/// Rows leave the saturated set once they no longer hold the scale back. A
/// last pass picks the `H`-smallest velocity that keeps every level's scaled
/// task exact.
///
/// An instance keeps its scratch buffers between calls and is not meant to be
/// shared by concurrent callers.
#[derive(Clone, Debug)]
pub struct EsnsSolver {
    iteration_factor: usize,
    kept: Vec<(RowDVector<f64>, f64)>,
}

impl Default for EsnsSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl EsnsSolver {
    pub fn new() -> Self {
        Self {
            iteration_factor: 20,
            kept: Vec::new(),
        }
    }

    fn max_iterations(&self, vars: usize, rows: usize) -> usize {
        self.iteration_factor * (vars + rows + 1)
    }

    pub fn solve(
        &mut self,
        tasks: &[TaskSpec],
        constraints: &ConstraintSet,
        weight: &DVector<f64>,
    ) -> Result<IkSolution, IkError> {
        let n = constraints.dim();
        constraints.validate(n)?;
        validate_weight(weight, n)?;
        let order = validate_tasks(tasks, n)?;
        if constraints.is_inverted() {
            return Ok(IkSolution::infeasible(n, tasks.len()));
        }

        let (g, h) = constraints.inequalities();
        let no_eq = DMatrix::zeros(0, n);
        let no_rhs = DVector::zeros(0);
        let bounds_only = Constraints {
            eq: &no_eq,
            eq_rhs: &no_rhs,
            ineq: &g,
            ineq_rhs: &h,
        };
        let cap = self.max_iterations(n + 2, g.nrows() + 2);
        let Some(mut a) = find_feasible(&bounds_only, &constraints.clamped_zero(), cap) else {
            return Ok(IkSolution::infeasible(n, tasks.len()));
        };

        self.kept.clear();
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
            let Some((a_next, c)) = self.max_scale(&red.rows, &red.rhs, task.scalable, &g, &h, &a)
            else {
                dropped.push(ti);
                continue;
            };
            a = a_next;
            scales[ti] = c;
            for k in 0..red.rank() {
                self.kept
                    .push((red.rows.row(k).into_owned(), c * red.rhs[k]));
            }
            z = red.null;
        }

        let (eq, eq_rhs) = stack_rows(n, self.kept.clone());
        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &g,
            ineq_rhs: &h,
        };
        let hessian = DMatrix::from_diagonal(weight);
        let linear = DVector::zeros(n);
        let objective = Objective {
            hessian: Some(&hessian),
            linear: &linear,
        };
        let opt = match minimize(&objective, &cons, a.clone(), cap) {
            Ok(opt) => opt,
            Err(_) => return Ok(IkSolution::infeasible(n, tasks.len())),
        };
        let kkt = opt.kkt_residual + constraints.max_violation(&opt.x).max(0.0);
        Ok(IkSolution::finish(opt.x, scales, dropped, constraints, kkt))
    }

    /// Largest `c` with `T a = c t` on top of the kept equalities. `None` when
    /// no admissible `c` fits.
    fn max_scale(
        &self,
        rows: &DMatrix<f64>,
        rhs: &DVector<f64>,
        scalable: bool,
        g: &DMatrix<f64>,
        h: &DVector<f64>,
        a: &DVector<f64>,
    ) -> Option<(DVector<f64>, f64)> {
        let n = a.len();
        let n_kept = self.kept.len();
        let rank = rows.nrows();
        let mut eq = DMatrix::zeros(n_kept + rank, n + 1);
        let mut eq_rhs = DVector::zeros(n_kept + rank);
        for (k, (row, b)) in self.kept.iter().enumerate() {
            eq.view_mut((k, 0), (1, n)).copy_from(row);
            eq_rhs[k] = *b;
        }
        eq.view_mut((n_kept, 0), (rank, n)).copy_from(rows);
        eq.view_mut((n_kept, n), (rank, 1)).copy_from(&(-rhs));

        let m = g.nrows();
        let mut ineq = DMatrix::zeros(m + 2, n + 1);
        ineq.view_mut((0, 0), (m, n)).copy_from(g);
        ineq[(m, n)] = 1.0;
        ineq[(m + 1, n)] = -1.0;
        let c_floor = if scalable { 0.0 } else { 1.0 };
        let mut ineq_rhs = DVector::zeros(m + 2);
        ineq_rhs.rows_mut(0, m).copy_from(h);
        ineq_rhs[m] = 1.0;
        ineq_rhs[m + 1] = -c_floor;

        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &ineq,
            ineq_rhs: &ineq_rhs,
        };
        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(a);
        start[n] = c_floor;
        let cap = self.max_iterations(n + 2, m + 4);
        let feasible = find_feasible(&cons, &start, cap)?;

        let mut linear = DVector::zeros(n + 1);
        linear[n] = -1.0;
        let objective = Objective {
            hessian: None,
            linear: &linear,
        };
        let opt = minimize(&objective, &cons, feasible, cap).ok()?;
        let c = opt.x[n].clamp(c_floor, 1.0);
        Some((opt.x.rows(0, n).into_owned(), c))
    }
}

/// Solves the prioritized task-scaling problem with a fresh [`EsnsSolver`].
///
/// `weight` is the diagonal of `H`. An inverted or empty constraint set gives a
/// solution with [`SolveStatus::Infeasible`](super::SolveStatus::Infeasible).
pub fn solve_esns(
    tasks: &[TaskSpec],
    constraints: &ConstraintSet,
    weight: &DVector<f64>,
) -> Result<IkSolution, IkError> {
    EsnsSolver::new().solve(tasks, constraints, weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ik::SolveStatus;

    fn one_dof(xdot: f64, vmax: f64) -> (Vec<TaskSpec>, ConstraintSet) {
        (
            vec![TaskSpec::new(
                1,
                DMatrix::from_element(1, 1, 1.0),
                DVector::from_element(1, xdot),
            )],
            ConstraintSet::from_box(
                DVector::from_element(1, -vmax),
                DVector::from_element(1, vmax),
            ),
        )
    }

    #[test]
    fn in_range_task_runs_at_full_speed() {
        let (tasks, cons) = one_dof(0.4, 1.0);
        let sol = solve_esns(&tasks, &cons, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.scales, vec![1.0]);
        assert!((sol.a[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn double_speed_halves_the_scale() {
        for sign in [1.0, -1.0] {
            let (tasks, cons) = one_dof(sign * 3.0, 1.5);
            let sol = solve_esns(&tasks, &cons, &DVector::from_element(1, 1.0)).unwrap();
            assert_eq!(sol.status, SolveStatus::Saturated);
            assert!((sol.scales[0] - 0.5).abs() < 1e-12);
            assert!((sol.a[0] - sign * 1.5).abs() < 1e-12);
            assert_eq!(sol.saturated, vec![0]);
        }
    }

    #[test]
    fn inverted_box_is_infeasible() {
        let (tasks, mut cons) = one_dof(1.0, 1.0);
        cons.lower[0] = 2.0;
        let sol = solve_esns(&tasks, &cons, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn second_task_uses_the_null_space() {
        // task 1 pins a0 + a1; task 2 asks for a1 = 1 and a2 = -1
        let t1 = TaskSpec::new(
            1,
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
            DVector::from_element(1, 0.5),
        );
        let j2 = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let t2 = TaskSpec::new(2, j2, DVector::from_vec(vec![1.0, -1.0]));
        let cons = ConstraintSet::from_box(
            DVector::from_element(3, -10.0),
            DVector::from_element(3, 10.0),
        );
        let sol = solve_esns(&[t2, t1], &cons, &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(sol.scales, vec![1.0, 1.0]);
        let expected = DVector::from_vec(vec![-0.5, 1.0, -1.0]);
        assert!((sol.a - expected).norm() < 1e-12);
    }

    #[test]
    fn weight_shapes_the_redundant_solution() {
        // a0 + a1 = 1 with H = diag(1, 4): a = H⁻¹Jᵀ(JH⁻¹Jᵀ)⁻¹ = (0.8, 0.2)
        let t = TaskSpec::new(
            1,
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        );
        let cons = ConstraintSet::from_box(
            DVector::from_element(2, -5.0),
            DVector::from_element(2, 5.0),
        );
        let sol = solve_esns(&[t], &cons, &DVector::from_vec(vec![1.0, 4.0])).unwrap();
        assert!((sol.a - DVector::from_vec(vec![0.8, 0.2])).norm() < 1e-12);
        assert!(sol.kkt_residual < 1e-10);
    }
}
