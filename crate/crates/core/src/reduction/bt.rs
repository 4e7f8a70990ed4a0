//! Balanced truncation with the coupled Gramians.

use log::warn;
use nalgebra::SymmetricEigen;

use super::{check_orders, is_stable, project, Method, ReductionResult};
use crate::error::{LssError, Result};
use crate::gramians;
use crate::model::{self, LssModel, Matrix};

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-14;

/// Square-root factor `L` with `P = L L^T` from the symmetric eigensystem;
/// negative rounding eigenvalues are dropped to zero.
fn sqrt_factor(p: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(p.clone());
    let mut l = eig.eigenvectors;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Balanced truncation per mode: `L_Q^T L_P = U S V^T`,
/// `X_q = L_P V_r S_r^{-1/2}`, `Y_q = L_Q U_r S_r^{-1/2}`.
pub fn balanced_truncation(model: &LssModel, orders: &[usize]) -> Result<ReductionResult> {
    model::require_stable(model)?;
    check_orders(model, orders)?;
    let set = gramians::gramians(model)?;
    if !set.converged {
        return Err(LssError::Divergence {
            iterations: set.iterations,
            what: "coupled Gramians did not converge".into(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut singular_values = Vec::new();
    let mut used = Vec::new();
    for (q, &r) in orders.iter().enumerate() {
        let lp = sqrt_factor(&set.p[q]);
        let lq = sqrt_factor(&set.q[q]);
        let svd = (lq.transpose() * &lp).svd(true, true);
        let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
        // nalgebra does not sort singular values
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let top = sv.first().copied().unwrap_or(0.0);
        let rank = sv.iter().take_while(|&&s| s > RANK_TOL * top && s > 0.0).count();
        let r_used = r.min(rank);
        if r_used == 0 {
            return Err(LssError::Numerical(format!("mode {} has zero Gramian product", q + 1)));
        }
        if r_used < r {
            warn!("mode {}: Gramian product has rank {rank}, order clipped from {r} to {r_used}", q + 1);
        }
        let n = model.states(q);
        let mut x = Matrix::zeros(n, r_used);
        let mut y = Matrix::zeros(n, r_used);
        for (j, &i) in order.iter().take(r_used).enumerate() {
            let w = 1.0 / svd.singular_values[i].sqrt();
            x.set_column(j, &(&lp * vt.row(i).transpose() * w));
            y.set_column(j, &(&lq * u.column(i) * w));
        }
        xs.push(x);
        ys.push(y);
        singular_values.push(sv);
        used.push(r_used);
    }
    let reduced = project(model, &xs, &ys)?;
    Ok(ReductionResult {
        method: Method::BalancedTruncation,
        reduced_stable: is_stable(&reduced),
        reduced,
        x: xs,
        y: ys,
        history: Vec::new(),
        checks: Vec::new(),
        iterations: set.iterations,
        converged: true,
        seed: None,
        restarts_used: 0,
        singular_values,
        orders: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_singular_value() {
        let mode = Mode::new(m1(-1.0), m1(1.0), m1(1.0));
        let model = LssModel::new(vec![mode.clone(), mode], vec![((0, 1), m1(0.5)), ((1, 0), m1(0.5))]).unwrap();
        let res = balanced_truncation(&model, &[1, 1]).unwrap();
        assert_relative_eq!(res.singular_values[0][0], 4.0 / 7.0, epsilon = 1e-10);
        assert_relative_eq!(res.singular_values[1][0], 4.0 / 7.0, epsilon = 1e-10);
        let err = crate::h2::h2_error(&model, &res.reduced).unwrap();
        assert!(err.error.norm <= 1e-10);
    }

    #[test]
    fn rank_deficient_order_is_clipped() {
        // second state is unreachable and unobservable
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let mode = Mode::new(a, b, c);
        let model = LssModel::new(vec![mode.clone(), mode], vec![]).unwrap();
        let res = balanced_truncation(&model, &[2, 2]).unwrap();
        assert_eq!(res.orders, vec![1, 1]);
    }

    #[test]
    fn sqrt_factor_reproduces_matrix() {
        let p = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = sqrt_factor(&p);
        assert!((&l * l.transpose() - p).amax() < 1e-14);
    }
}
