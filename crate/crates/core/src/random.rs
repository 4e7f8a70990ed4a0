//! Seeded random matrices and models for tests, examples and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gramians;
use crate::linalg;
use crate::model::{LssModel, Matrix, Mode};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let qr = gaussian(n, n, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = Matrix::from_diagonal(&r.diagonal().map(|d| if d < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// Gaussian matrix shifted so that its spectral abscissa is `-margin`.
pub fn shifted_stable<R: Rng + ?Sized>(n: usize, margin: f64, rng: &mut R) -> Matrix {
    let g = gaussian(n, n, rng) / (n as f64).sqrt();
    let abscissa = linalg::spectral_abscissa(&g).expect("Schur of a Gaussian matrix");
    g - Matrix::identity(n, n) * (abscissa + margin)
}

/// Stable matrix `Q (D + N) Q^T` with real and complex-pair eigenvalues of
/// real part in `[-3, -0.5]`, orthogonal `Q` and a strictly upper triangular
/// perturbation `N` of entry scale `non_normality`.
pub fn stable_matrix<R: Rng + ?Sized>(n: usize, non_normality: f64, rng: &mut R) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let re = -rng.random_range(0.5..3.0);
        if i + 1 < n && rng.random_bool(0.4) {
            let im = rng.random_range(0.2..4.0);
            d[(i, i)] = re;
            d[(i + 1, i + 1)] = re;
            d[(i, i + 1)] = im;
            d[(i + 1, i)] = -im;
            i += 2;
        } else {
            d[(i, i)] = re;
            i += 1;
        }
    }
    if non_normality > 0.0 {
        for r in 0..n {
            for c in r + 2..n {
                d[(r, c)] += non_normality * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let q = orthogonal(n, rng);
    &q * d * q.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomModelSpec {
    pub states: Vec<usize>,
    pub inputs: usize,
    pub outputs: usize,
    /// Coupling norm as a fraction of the existence bound `sqrt(2 alpha)/beta`.
    pub coupling_fraction: f64,
    pub non_normality: f64,
}

impl RandomModelSpec {
    pub fn two_mode(n: usize) -> Self {
        RandomModelSpec { states: vec![n, n], inputs: 1, outputs: 1, coupling_fraction: 0.5, non_normality: 0.0 }
    }
}

/// Random stable model whose couplings are scaled so that the largest
/// coupling norm is `coupling_fraction` times the existence bound.
pub fn random_model<R: Rng + ?Sized>(spec: &RandomModelSpec, rng: &mut R) -> Result<LssModel> {
    let norm_scale = |m: Matrix| {
        let s = linalg::spectral_norm(&m);
        if s > 0.0 {
            m / s
        } else {
            m
        }
    };
    let modes: Vec<Mode> = spec
        .states
        .iter()
        .map(|&n| {
            Mode::new(
                stable_matrix(n, spec.non_normality, rng),
                gaussian(n, spec.inputs, rng),
                gaussian(spec.outputs, n, rng),
            )
        })
        .collect();
    let m = modes.len();
    let mut couplings = Vec::new();
    for q in 0..m {
        for s in 0..m {
            if q != s {
                let k = norm_scale(gaussian(spec.states[s], spec.states[q], rng));
                couplings.push(((q, s), k));
            }
        }
    }
    let unit = LssModel::new(modes, couplings)?;
    let report = gramians::existence_check(&unit)?;
    let scale = spec.coupling_fraction * report.bound;
    unit.map_couplings(|_, _, k| k * scale)
}
