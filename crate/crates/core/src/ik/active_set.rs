//! Primal active-set method for small dense LPs and strictly convex QPs:
//!
//! ```text
//! minimize  ½ xᵀ Q x + gᵀ x   subject to  E x = e,  G x ≤ h
//! ```
//!
//! Each step moves inside the null space of the working rows, towards the
//! subspace minimizer for a QP or along the projected descent direction for an
//! LP. The first row met on the way joins the working set (lowest index on
//! ties); a row with a negative multiplier leaves it (lowest index first).

use nalgebra::{DMatrix, DVector};

use super::problem::null_space;

pub(crate) struct Constraints<'a> {
    pub eq: &'a DMatrix<f64>,
    pub eq_rhs: &'a DVector<f64>,
    pub ineq: &'a DMatrix<f64>,
    pub ineq_rhs: &'a DVector<f64>,
}

pub(crate) struct Objective<'a> {
    /// `None` for a linear program.
    pub hessian: Option<&'a DMatrix<f64>>,
    pub linear: &'a DVector<f64>,
}

impl Objective<'_> {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.hessian {
            Some(q) => q * x + self.linear,
            None => self.linear.clone(),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Optimum {
    pub x: DVector<f64>,
    /// Norm of the stationarity residual plus any negative multiplier.
    pub kkt_residual: f64,
}

#[derive(Debug)]
pub(crate) enum Failure {
    Unbounded,
    IterationLimit,
}

pub(crate) fn minimize(
    objective: &Objective<'_>,
    cons: &Constraints<'_>,
    x0: DVector<f64>,
    max_iterations: usize,
) -> Result<Optimum, Failure> {
    let n = x0.len();
    let n_eq = cons.eq.nrows();
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let row_norms: Vec<f64> = (0..cons.ineq.nrows())
        .map(|r| cons.ineq.row(r).norm())
        .collect();

    for _ in 0..max_iterations {
        let mut active = DMatrix::zeros(n_eq + working.len(), n);
        active.rows_mut(0, n_eq).copy_from(cons.eq);
        for (k, &r) in working.iter().enumerate() {
            active.row_mut(n_eq + k).copy_from(&cons.ineq.row(r));
        }
        let z = null_space(&active);
        let grad = objective.gradient(&x);
        let d = direction(objective, &z, &grad);
        let d_norm = d.norm();

        if d_norm <= 1e-12 * (1.0 + x.norm()) {
            let lambda = multipliers(&active, &grad);
            let tol = 1e-10 * (1.0 + grad.norm());
            let leaving = working
                .iter()
                .enumerate()
                .filter(|(k, _)| lambda[n_eq + k] < -tol)
                .min_by_key(|(_, &r)| r)
                .map(|(k, _)| k);
            match leaving {
                Some(k) => {
                    working.remove(k);
                    continue;
                }
                None => {
                    let stationarity = (&grad + active.transpose() * &lambda).norm();
                    let dual = (0..working.len())
                        .map(|k| (-lambda[n_eq + k]).max(0.0))
                        .fold(0.0, f64::max);
                    return Ok(Optimum {
                        x,
                        kkt_residual: stationarity + dual,
                    });
                }
            }
        }

        let mut alpha = if objective.hessian.is_some() {
            1.0
        } else {
            f64::INFINITY
        };
        let mut blocking = None;
        for (r, &norm) in row_norms.iter().enumerate() {
            if working.contains(&r) {
                continue;
            }
            let row = cons.ineq.row(r);
            let rate = row.dot(&d.transpose());
            if rate <= 1e-13 * norm * d_norm {
                continue;
            }
            let slack = (cons.ineq_rhs[r] - row.dot(&x.transpose())).max(0.0);
            let step = slack / rate;
            if step < alpha {
                alpha = step;
                blocking = Some(r);
            }
        }
        if !alpha.is_finite() {
            return Err(Failure::Unbounded);
        }
        x += alpha * d;
        if let Some(r) = blocking {
            snap_to_row(&mut x, cons, r);
            working.push(r);
        }
    }
    Err(Failure::IterationLimit)
}

/// Places `x` exactly on a row that touches a single coordinate.
fn snap_to_row(x: &mut DVector<f64>, cons: &Constraints<'_>, r: usize) {
    let row = cons.ineq.row(r);
    let mut nonzero = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
    if let (Some((j, &coef)), None) = (nonzero.next(), nonzero.next()) {
        x[j] = cons.ineq_rhs[r] / coef;
    }
}

fn direction(objective: &Objective<'_>, z: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    if z.ncols() == 0 {
        return DVector::zeros(grad.len());
    }
    let reduced_grad = z.transpose() * grad;
    match objective.hessian {
        None => -(z * reduced_grad),
        Some(q) => {
            let reduced = z.transpose() * q * z;
            let step = reduced
                .cholesky()
                .map(|c| c.solve(&reduced_grad))
                .unwrap_or_else(|| reduced_grad.clone());
            -(z * step)
        }
    }
}

/// Least-squares solution of `Aᵀ λ = −∇f`.
fn multipliers(active: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    if active.nrows() == 0 {
        return DVector::zeros(0);
    }
    active
        .transpose()
        .svd(true, true)
        .solve(&(-grad), 1e-14)
        .expect("singular vectors requested")
}

/// A point satisfying `cons`, found by shrinking the residuals of `x0` to zero
/// along an auxiliary variable. `None` when no such point exists.
pub(crate) fn find_feasible(
    cons: &Constraints<'_>,
    x0: &DVector<f64>,
    max_iterations: usize,
) -> Option<DVector<f64>> {
    let n = x0.len();
    let eq_res = cons.eq * x0 - cons.eq_rhs;
    let ineq_res = (cons.ineq * x0 - cons.ineq_rhs).map(|v| v.max(0.0));
    if eq_res.iter().all(|v| v.abs() <= 1e-14) && ineq_res.iter().all(|&v| v <= 0.0) {
        return Some(x0.clone());
    }

    let m_eq = cons.eq.nrows();
    let m_in = cons.ineq.nrows();
    let mut eq = DMatrix::zeros(m_eq, n + 1);
    eq.columns_mut(0, n).copy_from(cons.eq);
    eq.set_column(n, &(-&eq_res));
    let mut ineq = DMatrix::zeros(m_in + 2, n + 1);
    ineq.view_mut((0, 0), (m_in, n)).copy_from(cons.ineq);
    ineq.view_mut((0, n), (m_in, 1)).copy_from(&(-&ineq_res));
    ineq[(m_in, n)] = -1.0;
    ineq[(m_in + 1, n)] = 1.0;
    let mut ineq_rhs = DVector::zeros(m_in + 2);
    ineq_rhs.rows_mut(0, m_in).copy_from(cons.ineq_rhs);
    ineq_rhs[m_in + 1] = 1.0;

    let mut linear = DVector::zeros(n + 1);
    linear[n] = 1.0;
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = 1.0;

    let aux = Constraints {
        eq: &eq,
        eq_rhs: cons.eq_rhs,
        ineq: &ineq,
        ineq_rhs: &ineq_rhs,
    };
    let objective = Objective {
        hessian: None,
        linear: &linear,
    };
    let opt = minimize(&objective, &aux, start, max_iterations).ok()?;
    (opt.x[n] <= 1e-11).then(|| opt.x.rows(0, n).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    }

    #[test]
    fn lp_on_a_square() {
        // maximize x + 2y on the unit square
        let (eq, eq_rhs) = empty(2);
        let ineq = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let ineq_rhs = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &ineq,
            ineq_rhs: &ineq_rhs,
        };
        let linear = DVector::from_vec(vec![-1.0, -2.0]);
        let obj = Objective {
            hessian: None,
            linear: &linear,
        };
        let opt = minimize(&obj, &cons, DVector::from_vec(vec![0.2, 0.3]), 50).unwrap();
        assert!((opt.x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn qp_projection_with_equality() {
        // closest point to (2, 2) on x + y = 1 with x ≤ 0.25
        let eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let eq_rhs = DVector::from_element(1, 1.0);
        let ineq = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let ineq_rhs = DVector::from_element(1, 0.25);
        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &ineq,
            ineq_rhs: &ineq_rhs,
        };
        let q = DMatrix::identity(2, 2);
        let linear = DVector::from_vec(vec![-2.0, -2.0]);
        let obj = Objective {
            hessian: Some(&q),
            linear: &linear,
        };
        let opt = minimize(&obj, &cons, DVector::from_vec(vec![0.0, 1.0]), 50).unwrap();
        assert!((opt.x - DVector::from_vec(vec![0.25, 0.75])).norm() < 1e-14);
        assert!(opt.kkt_residual < 1e-12);
    }

    #[test]
    fn phase_one_finds_and_rejects() {
        let eq = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let eq_rhs = DVector::from_element(1, 0.5);
        let ineq = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let ineq_rhs = DVector::from_vec(vec![1.0, 0.0]);
        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &ineq,
            ineq_rhs: &ineq_rhs,
        };
        let x = find_feasible(&cons, &DVector::from_vec(vec![3.0, -2.0]), 50).unwrap();
        assert!(((&eq * &x)[0] - 0.5).abs() < 1e-12 && x[0] <= 1.0 + 1e-12 && x[1] >= -1e-12);

        let tight = DVector::from_vec(vec![0.25, 0.0]);
        let cons = Constraints {
            eq: &eq,
            eq_rhs: &eq_rhs,
            ineq: &ineq,
            ineq_rhs: &tight,
        };
        assert!(find_feasible(&cons, &DVector::zeros(2), 50).is_none());
    }
}
