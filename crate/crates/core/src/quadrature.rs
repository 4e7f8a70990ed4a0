//! Gauss–Laguerre rules for integrals over `[0, inf)`.

use nalgebra::SymmetricEigen;

use crate::error::{LssError, Result};
use crate::model::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    /// `ln w_i`; the plain weights underflow for large rules.
    pub log_weights: Vec<f64>,
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

impl GaussLaguerre {
    /// `n`-point rule: nodes from the Jacobi matrix eigenvalues, polished by
    /// Newton steps on `L_n`, weights `x / ((n+1)^2 L_{n+1}(x)^2)`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 300 {
            return Err(LssError::validation(format!("Gauss-Laguerre order must be in 1..=300, got {n}")));
        }
        let mut jacobi = Matrix::zeros(n, n);
        for i in 0..n {
            jacobi[(i, i)] = (2 * i + 1) as f64;
            if i + 1 < n {
                jacobi[(i, i + 1)] = (i + 1) as f64;
                jacobi[(i + 1, i)] = (i + 1) as f64;
            }
        }
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);
        let nf = n as f64;
        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (ln, lm) = laguerre_pair(n, *x);
                let deriv = nf * (ln - lm) / *x;
                if deriv == 0.0 || !deriv.is_finite() {
                    break;
                }
                let dx = ln / deriv;
                *x -= dx;
                if dx.abs() <= 4.0 * f64::EPSILON * x.abs() {
                    break;
                }
            }
        }
        let log_weights = nodes
            .iter()
            .map(|&x| {
                let (l_next, _) = laguerre_pair(n + 1, x);
                x.ln() - 2.0 * ((nf + 1.0) * l_next.abs()).ln()
            })
            .collect();
        Ok(GaussLaguerre { nodes, log_weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weights for integrating `f` directly: `w_i e^{x_i}`, so that
    /// `int_0^inf f(t) dt ~ sum_i w_i e^{x_i} f(x_i)`.
    pub fn unweighted(&self) -> Vec<f64> {
        self.nodes.iter().zip(&self.log_weights).map(|(x, lw)| (lw + x).exp()).collect()
    }
}
