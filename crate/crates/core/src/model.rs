//! Linear switched system data model.
//!
//! Modes are indexed from zero in the library API. Coupling `K[(q, s)]` maps
//! the state of mode `q` into mode `s` at a switch from `q` to `s`, so it has
//! shape `n_s x n_q`.

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{LssError, Result};
use crate::linalg;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// One linear subsystem `x' = A x + B u, y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl Mode {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Self {
        Mode { a, b, c }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    TooFewModes(usize),
    Shape { what: String, expected: (usize, usize), found: (usize, usize) },
    MissingCoupling { from: usize, to: usize },
    NonFinite { what: String },
    InitialState { expected: usize, found: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::TooFewModes(m) => write!(f, "at least 2 modes are required, got {m}"),
            Diagnostic::Shape { what, expected, found } => {
                write!(f, "{what} has shape {}x{}, expected {}x{}", found.0, found.1, expected.0, expected.1)
            }
            Diagnostic::MissingCoupling { from, to } => {
                write!(f, "coupling {}->{} is missing and the state dimensions differ", from + 1, to + 1)
            }
            Diagnostic::NonFinite { what } => write!(f, "{what} has non-finite entries"),
            Diagnostic::InitialState { expected, found } => {
                write!(f, "initial state has length {found}, expected {expected}")
            }
        }
    }
}

/// A continuous-time linear switched system with reset maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LssModel {
    modes: Vec<Mode>,
    // row-major M x M table, diagonal unused; `None` only for invalid models
    couplings: Vec<Option<Matrix>>,
    explicit: Vec<bool>,
    initial_state: Option<Vector>,
}

impl LssModel {
    /// Builds and validates a model. Couplings not listed default to the
    /// identity, which is only defined between modes of equal dimension.
    pub fn new(modes: Vec<Mode>, couplings: Vec<((usize, usize), Matrix)>) -> Result<Self> {
        let model = Self::new_unchecked(modes, couplings)?;
        let diags = validate_model(&model);
        if diags.is_empty() {
            Ok(model)
        } else {
            Err(LssError::Validation(diags.iter().map(|d| d.to_string()).collect()))
        }
    }

    /// Builds a model without shape checks. Only fails on out-of-range or
    /// self-loop coupling keys, which cannot be represented at all.
    pub fn new_unchecked(modes: Vec<Mode>, couplings: Vec<((usize, usize), Matrix)>) -> Result<Self> {
        let m = modes.len();
        let mut table: Vec<Option<Matrix>> = vec![None; m * m];
        let mut explicit = vec![false; m * m];
        for ((q, s), k) in couplings {
            if q >= m || s >= m {
                return Err(LssError::validation(format!(
                    "coupling {}->{} refers to a mode outside 1..={m}",
                    q + 1,
                    s + 1
                )));
            }
            if q == s {
                return Err(LssError::validation(format!(
                    "coupling {}->{} between identical modes is not allowed",
                    q + 1,
                    s + 1
                )));
            }
            table[q * m + s] = Some(k);
            explicit[q * m + s] = true;
        }
        for q in 0..m {
            for s in 0..m {
                if q != s && table[q * m + s].is_none() {
                    let (nq, ns) = (modes[q].states(), modes[s].states());
                    if nq == ns {
                        table[q * m + s] = Some(Matrix::identity(ns, nq));
                    }
                }
            }
        }
        Ok(LssModel { modes, couplings: table, explicit, initial_state: None })
    }

    pub fn with_initial_state(mut self, x0: Vector) -> Result<Self> {
        let n = self.modes.first().map(Mode::states).unwrap_or(0);
        if x0.len() != n {
            return Err(LssError::Validation(vec![
                Diagnostic::InitialState { expected: n, found: x0.len() }.to_string()
            ]));
        }
        self.initial_state = Some(x0);
        Ok(self)
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, q: usize) -> &Mode {
        &self.modes[q]
    }

    pub fn states(&self, q: usize) -> usize {
        self.modes[q].states()
    }

    pub fn total_states(&self) -> usize {
        self.modes.iter().map(Mode::states).sum()
    }

    /// Coupling used when switching from mode `from` to mode `to`.
    ///
    /// # Panics
    /// If `from == to` or the coupling is undefined (invalid model).
    pub fn coupling(&self, from: usize, to: usize) -> &Matrix {
        assert_ne!(from, to, "no coupling between identical modes");
        self.couplings[from * self.num_modes() + to].as_ref().expect("coupling undefined; model failed validation")
    }

    pub fn coupling_opt(&self, from: usize, to: usize) -> Option<&Matrix> {
        if from == to {
            return None;
        }
        self.couplings[from * self.num_modes() + to].as_ref()
    }

    /// Whether the coupling was given explicitly rather than defaulted.
    pub fn is_explicit_coupling(&self, from: usize, to: usize) -> bool {
        from != to && self.explicit[from * self.num_modes() + to]
    }

    /// All ordered pairs `(from, to)` with `from != to`.
    pub fn coupling_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.num_modes();
        (0..m).flat_map(move |q| (0..m).filter(move |&s| s != q).map(move |s| (q, s)))
    }

    pub fn initial_state(&self) -> Option<&Vector> {
        self.initial_state.as_ref()
    }

    /// Returns a copy with every coupling replaced through `f(from, to, K)`.
    /// Couplings become explicit.
    pub fn map_couplings(&self, mut f: impl FnMut(usize, usize, &Matrix) -> Matrix) -> Result<Self> {
        let pairs: Vec<_> = self.coupling_pairs().map(|(q, s)| ((q, s), f(q, s, self.coupling(q, s)))).collect();
        let mut out = LssModel::new(self.modes.clone(), pairs)?;
        out.initial_state = self.initial_state.clone();
        Ok(out)
    }

    pub fn map_modes(&self, mut f: impl FnMut(usize, &Mode) -> Mode) -> Result<Self> {
        let modes = self.modes.iter().enumerate().map(|(q, m)| f(q, m)).collect();
        let pairs = self
            .coupling_pairs()
            .filter(|&(q, s)| self.is_explicit_coupling(q, s))
            .map(|(q, s)| ((q, s), self.coupling(q, s).clone()))
            .collect();
        LssModel::new(modes, pairs)
    }
}

/// Returns one diagnostic per violated structural invariant.
pub fn validate_model(model: &LssModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let m = model.num_modes();
    if m < 2 {
        out.push(Diagnostic::TooFewModes(m));
    }
    for (q, mode) in model.modes.iter().enumerate() {
        let n = mode.a.nrows();
        let label = q + 1;
        if mode.a.ncols() != n {
            out.push(Diagnostic::Shape { what: format!("A_{label}"), expected: (n, n), found: mode.a.shape() });
        }
        if mode.b.nrows() != n {
            out.push(Diagnostic::Shape {
                what: format!("B_{label}"),
                expected: (n, mode.b.ncols()),
                found: mode.b.shape(),
            });
        }
        if mode.c.ncols() != n {
            out.push(Diagnostic::Shape {
                what: format!("C_{label}"),
                expected: (mode.c.nrows(), n),
                found: mode.c.shape(),
            });
        }
        for (name, mat) in [("A", &mode.a), ("B", &mode.b), ("C", &mode.c)] {
            if !linalg::is_finite(mat) {
                out.push(Diagnostic::NonFinite { what: format!("{name}_{label}") });
            }
        }
    }
    for (q, s) in model.coupling_pairs() {
        let (nq, ns) = (model.states(q), model.states(s));
        match model.coupling_opt(q, s) {
            None => out.push(Diagnostic::MissingCoupling { from: q, to: s }),
            Some(k) => {
                if k.shape() != (ns, nq) {
                    out.push(Diagnostic::Shape {
                        what: format!("K_{},{}", q + 1, s + 1),
                        expected: (ns, nq),
                        found: k.shape(),
                    });
                }
                if !linalg::is_finite(k) {
                    out.push(Diagnostic::NonFinite { what: format!("K_{},{}", q + 1, s + 1) });
                }
            }
        }
    }
    if let Some(x0) = &model.initial_state {
        let n = model.modes.first().map(Mode::states).unwrap_or(0);
        if x0.len() != n {
            out.push(Diagnostic::InitialState { expected: n, found: x0.len() });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            out.push(Diagnostic::NonFinite { what: "initial state".into() });
        }
    }
    out
}

pub(crate) fn ensure_valid(model: &LssModel) -> Result<()> {
    let diags = validate_model(model);
    if diags.is_empty() {
        Ok(())
    } else {
        Err(LssError::Validation(diags.iter().map(|d| d.to_string()).collect()))
    }
}

/// Spectral abscissa `max Re(lambda(A_q))` of every mode.
pub fn check_stability(model: &LssModel) -> Result<Vec<f64>> {
    ensure_valid(model)?;
    model.modes.iter().map(|m| linalg::spectral_abscissa(&m.a)).collect()
}

/// Fails with [`LssError::UnstableMode`] for the first mode whose abscissa is
/// not strictly negative.
pub fn require_stable(model: &LssModel) -> Result<()> {
    for (q, abscissa) in check_stability(model)?.into_iter().enumerate() {
        if abscissa >= 0.0 {
            return Err(LssError::UnstableMode { mode: q + 1, abscissa });
        }
    }
    Ok(())
}

/// Block-diagonal stacking of the per-mode matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAssembly {
    pub a_d: Matrix,
    pub b_d: Matrix,
    pub c_d: Matrix,
    /// `K_{q,s}` sits in block row `s`, block column `q`.
    pub k_offdiag: Matrix,
    pub state_ranges: Vec<Range<usize>>,
    pub input_ranges: Vec<Range<usize>>,
    pub output_ranges: Vec<Range<usize>>,
}

impl BlockAssembly {
    pub fn a_block(&self, q: usize) -> Matrix {
        let r = &self.state_ranges[q];
        self.a_d.view((r.start, r.start), (r.len(), r.len())).into_owned()
    }

    pub fn b_block(&self, q: usize) -> Matrix {
        let (r, c) = (&self.state_ranges[q], &self.input_ranges[q]);
        self.b_d.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    pub fn c_block(&self, q: usize) -> Matrix {
        let (r, c) = (&self.output_ranges[q], &self.state_ranges[q]);
        self.c_d.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    /// The coupling from `from` to `to`, read back from `k_offdiag`.
    pub fn k_block(&self, from: usize, to: usize) -> Matrix {
        let (r, c) = (&self.state_ranges[to], &self.state_ranges[from]);
        self.k_offdiag.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }
}

pub fn assemble_blocks(model: &LssModel) -> Result<BlockAssembly> {
    ensure_valid(model)?;
    let ranges = |dims: Vec<usize>| {
        let mut start = 0;
        dims.into_iter()
            .map(|d| {
                let r = start..start + d;
                start += d;
                r
            })
            .collect::<Vec<_>>()
    };
    let state_ranges = ranges(model.modes.iter().map(Mode::states).collect());
    let input_ranges = ranges(model.modes.iter().map(Mode::inputs).collect());
    let output_ranges = ranges(model.modes.iter().map(Mode::outputs).collect());
    let a_d = linalg::block_diag(model.modes.iter().map(|m| &m.a));
    let b_d = linalg::block_diag(model.modes.iter().map(|m| &m.b));
    let c_d = linalg::block_diag(model.modes.iter().map(|m| &m.c));
    let n = model.total_states();
    let mut k_offdiag = Matrix::zeros(n, n);
    for (q, s) in model.coupling_pairs() {
        let (r, c) = (&state_ranges[s], &state_ranges[q]);
        k_offdiag.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(model.coupling(q, s));
    }
    Ok(BlockAssembly { a_d, b_d, c_d, k_offdiag, state_ranges, input_ranges, output_ranges })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Absorbed {
    pub model: LssModel,
    /// Set when there was no nonzero initial state to absorb.
    pub noop: bool,
}

/// Moves a nonzero initial state into an extra input column of the first
/// active mode, `B_{q1} <- [B_{q1} x0]`, and zeroes the initial state.
pub fn absorb_initial_state(model: &LssModel, first_mode: usize) -> Result<Absorbed> {
    ensure_valid(model)?;
    if first_mode >= model.num_modes() {
        return Err(LssError::validation(format!("mode {} does not exist", first_mode + 1)));
    }
    let x0 = match model.initial_state() {
        Some(x0) if x0.iter().any(|&v| v != 0.0) => x0.clone(),
        _ => {
            let mut unchanged = model.clone();
            unchanged.initial_state = None;
            return Ok(Absorbed { model: unchanged, noop: true });
        }
    };
    if x0.len() != model.states(first_mode) {
        return Err(LssError::Validation(vec![Diagnostic::InitialState {
            expected: model.states(first_mode),
            found: x0.len(),
        }
        .to_string()]));
    }
    let mut out = model.clone();
    let b = &model.modes[first_mode].b;
    let mut widened = b.clone().insert_column(b.ncols(), 0.0);
    widened.set_column(b.ncols(), &x0);
    out.modes[first_mode].b = widened;
    out.initial_state = None;
    Ok(Absorbed { model: out, noop: false })
}

/// Ordered sequence of `(mode, dwell time)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    events: Vec<(usize, f64)>,
}

impl SwitchingSignal {
    pub fn new(events: Vec<(usize, f64)>) -> Result<Self> {
        let mut problems = Vec::new();
        if events.is_empty() {
            problems.push("switching signal has no events".to_string());
        }
        for (i, &(q, t)) in events.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                problems.push(format!("dwell time {i} is {t}, must be positive and finite"));
            }
            if i > 0 && events[i - 1].0 == q {
                problems.push(format!("events {} and {i} repeat mode {}", i - 1, q + 1));
            }
        }
        if problems.is_empty() {
            Ok(SwitchingSignal { events })
        } else {
            Err(LssError::Validation(problems))
        }
    }

    pub fn events(&self) -> &[(usize, f64)] {
        &self.events
    }

    /// Cumulative switch instants `T_1..T_k`; the last one is the horizon.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.events
            .iter()
            .map(|&(_, t)| {
                acc += t;
                acc
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.events.iter().map(|&(_, t)| t).sum()
    }

    /// Active mode at time `t`: mode `q_i` on `(T_{i-1}, T_i]`, and `q_1` at 0.
    /// Times past the horizon report the last mode.
    pub fn mode_at(&self, t: f64) -> usize {
        let mut acc = 0.0;
        for &(q, dwell) in &self.events {
            acc += dwell;
            if t <= acc {
                return q;
            }
        }
        self.events.last().map(|e| e.0).expect("non-empty signal")
    }

    pub fn max_mode(&self) -> usize {
        self.events.iter().map(|e| e.0).max().unwrap_or(0)
    }
}
