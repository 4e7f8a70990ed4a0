//! Projection-based reduction of switched systems.

mod bilinear;
mod bt;
mod swirka;

pub use bilinear::{bilinear_embed, BilinearEmbedding, EmbeddingPreconditions};
pub use bt::balanced_truncation;
pub use swirka::{initial_guess, swirka, swirka_with, SwirkaOptions};

use crate::error::{LssError, Result};
use crate::linalg;
use crate::model::{self, LssModel, Matrix, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SwIrka,
    BalancedTruncation,
}

/// Per-iteration diagnostics of an Sw-IRKA run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationCheck {
    /// Relative size of the off-diagonal blocks of the full block residual
    /// for the block-diagonal `X_D` and `Y_D` (max of the two).
    pub structure: f64,
    /// `max_q ||Y_q^T X_q - I||_max` after bi-orthogonalization.
    pub biorthogonality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub method: Method,
    pub reduced: LssModel,
    pub x: Vec<Matrix>,
    pub y: Vec<Matrix>,
    /// Eigenvalue offsets per iteration (Sw-IRKA) of the returned attempt.
    pub history: Vec<f64>,
    pub checks: Vec<IterationCheck>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    pub restarts_used: usize,
    /// Every reduced mode has spectral abscissa below zero.
    pub reduced_stable: bool,
    /// Balancing singular values per mode (balanced truncation only).
    pub singular_values: Vec<Vec<f64>>,
    /// Orders actually used; may be below the request after rank clipping.
    pub orders: Vec<usize>,
}

impl ReductionResult {
    pub fn final_offset(&self) -> Option<f64> {
        self.history.last().copied()
    }
}

pub(crate) fn check_orders(model: &LssModel, orders: &[usize]) -> Result<()> {
    if orders.len() != model.num_modes() {
        return Err(LssError::validation(format!("{} orders given for {} modes", orders.len(), model.num_modes())));
    }
    let bad: Vec<String> = orders
        .iter()
        .enumerate()
        .filter(|&(q, &r)| r == 0 || r > model.states(q))
        .map(|(q, &r)| format!("mode {}: order {r} not in 1..={}", q + 1, model.states(q)))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(LssError::Validation(bad))
    }
}

/// Petrov–Galerkin projection: `Y_q^T A_q X_q`, `Y_q^T B_q`, `C_q X_q` and
/// `Y_s^T K_{q,s} X_q`.
pub fn project(model: &LssModel, x: &[Matrix], y: &[Matrix]) -> Result<LssModel> {
    let m = model.num_modes();
    if x.len() != m || y.len() != m {
        return Err(LssError::validation("one pair of bases per mode is required"));
    }
    for q in 0..m {
        let n = model.states(q);
        if x[q].nrows() != n || y[q].shape() != x[q].shape() {
            return Err(LssError::validation(format!("bases for mode {} have inconsistent shapes", q + 1)));
        }
    }
    let modes = model
        .modes()
        .iter()
        .zip(x.iter().zip(y))
        .map(|(mode, (xq, yq))| {
            let yt = yq.transpose();
            Mode::new(&yt * &mode.a * xq, &yt * &mode.b, &mode.c * xq)
        })
        .collect();
    let mut couplings = Vec::new();
    for q in 0..m {
        for s in 0..m {
            if q != s {
                couplings.push(((q, s), y[s].transpose() * model.coupling(q, s) * &x[q]));
            }
        }
    }
    LssModel::new(modes, couplings)
}

pub(crate) fn is_stable(model: &LssModel) -> bool {
    model::check_stability(model).map(|a| a.iter().all(|&v| v < 0.0)).unwrap_or(false)
}

/// Sorted union of the reduced mode spectra.
pub(crate) fn sorted_spectrum(model: &LssModel) -> Result<Vec<num_complex::Complex64>> {
    let mut all = Vec::with_capacity(model.total_states());
    for mode in model.modes() {
        all.extend(linalg::eigenvalues(&mode.a)?);
    }
    Ok(linalg::sort_eigenvalues(all))
}
