//! Embedding of a two-mode switched system with identity resets into a
//! bilinear system driven by `u`, the mode indicator `v` (0 in mode 1, 1 in
//! mode 2) and their product:
//!
//! `x' = A x + N_2 x v + B_1 u + B_3 (v u)`.

use crate::error::{LssError, Result};
use crate::model::{self, LssModel, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingPreconditions {
    pub two_modes: bool,
    pub equal_states: bool,
    pub equal_inputs: bool,
    pub identity_couplings: bool,
}

impl EmbeddingPreconditions {
    pub fn check(model: &LssModel) -> Self {
        let two_modes = model.num_modes() == 2;
        let (equal_states, equal_inputs, identity_couplings) = if two_modes {
            let (m1, m2) = (model.mode(0), model.mode(1));
            let equal_states = m1.states() == m2.states();
            let n = m1.states();
            let ident = Matrix::identity(n, n);
            let identity = equal_states && *model.coupling(0, 1) == ident && *model.coupling(1, 0) == ident;
            (equal_states, m1.inputs() == m2.inputs(), identity)
        } else {
            (false, false, false)
        };
        EmbeddingPreconditions { two_modes, equal_states, equal_inputs, identity_couplings }
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.two_modes {
            out.push("exactly two modes required".to_string());
        }
        if !self.equal_states {
            out.push("n_1 != n_2".to_string());
        }
        if !self.equal_inputs {
            out.push("m_1 != m_2".to_string());
        }
        if !self.identity_couplings {
            out.push("couplings are not identity".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearEmbedding {
    pub a: Matrix,
    /// State multipliers for the inputs `u`, `v` and `v u`; only `n[1]` is
    /// nonzero.
    pub n: [Matrix; 3],
    /// Input maps for `u`, `v` and `v u`; `b[1]` is zero.
    pub b: [Matrix; 3],
    pub preconditions: EmbeddingPreconditions,
}

impl BilinearEmbedding {
    /// `A x + N_2 x v + B_1 u + B_3 v u` for indicator `v`.
    pub fn derivative(&self, x: &Vector, u: &Vector, indicator: f64) -> Vector {
        &self.a * x + &self.n[1] * x * indicator + &self.b[0] * u + &self.b[2] * u * indicator
    }
}

pub fn bilinear_embed(model: &LssModel) -> Result<BilinearEmbedding> {
    model::ensure_valid(model)?;
    let pre = EmbeddingPreconditions::check(model);
    let failed = pre.failures();
    if !failed.is_empty() {
        return Err(LssError::EmbeddingUndefined(failed));
    }
    let (m1, m2) = (model.mode(0), model.mode(1));
    let n = m1.states();
    Ok(BilinearEmbedding {
        a: m1.a.clone(),
        n: [Matrix::zeros(n, n), &m2.a - &m1.a, Matrix::zeros(n, n)],
        b: [m1.b.clone(), Matrix::zeros(n, 1), &m2.b - &m1.b],
        preconditions: pre,
    })
}
