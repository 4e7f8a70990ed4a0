//! Time-domain simulation of switched systems and generalized kernels.
//!
//! On `(T_{i-1}, T_i]` the system evolves with mode `q_i`; at `T_i` the state
//! jumps to `K_{q_i, q_{i+1}} x(T_i)`. A trace stores two samples at every
//! switch instant: the pre-switch sample labelled with the old mode and the
//! post-switch sample labelled with the new one.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{LssError, Result};
use crate::model::{self, LssModel, Matrix, SwitchingSignal, Vector};

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    /// Every channel equal to the constant.
    Constant(f64),
    /// Unit-area rectangular pulse `1/width` on `[0, width)`.
    ImpulseApprox {
        width: f64,
    },
    /// Zero-order hold of the rows; `times` must be increasing.
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// `(1 + sin(pi t)) exp(-t/5)` on every channel.
    Demo,
}

impl InputSignal {
    pub fn demo_value(t: f64) -> f64 {
        (1.0 + (PI * t).sin()) * (-t / 5.0).exp()
    }

    pub fn sampled(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(LssError::validation("sampled input needs one row of values per time"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LssError::validation("sampled input times must be increasing"));
        }
        let width = values[0].len();
        if values.iter().any(|row| row.len() != width) {
            return Err(LssError::validation("sampled input rows have different lengths"));
        }
        Ok(InputSignal::Sampled { times, values })
    }

    /// Number of channels available, `None` when any number works.
    pub fn channels(&self) -> Option<usize> {
        match self {
            InputSignal::Sampled { values, .. } => Some(values[0].len()),
            _ => None,
        }
    }

    /// Input vector with `m` channels at time `t`.
    pub fn eval(&self, t: f64, m: usize) -> Vector {
        match self {
            InputSignal::Zero => Vector::zeros(m),
            InputSignal::Constant(c) => Vector::from_element(m, *c),
            InputSignal::ImpulseApprox { width } => {
                let v = if (0.0..*width).contains(&t) { 1.0 / width } else { 0.0 };
                Vector::from_element(m, v)
            }
            InputSignal::Demo => Vector::from_element(m, Self::demo_value(t)),
            InputSignal::Sampled { times, values } => {
                let idx = times.partition_point(|&s| s <= t).saturating_sub(1);
                Vector::from_iterator(m, values[idx].iter().copied().take(m))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    /// Exact zero-order-hold stepping through the augmented matrix exponential.
    Expm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub active_mode: Vec<usize>,
    /// Index of the pre-switch sample at each switch instant; the post-switch
    /// sample follows at `index + 1`.
    pub switch_indices: Vec<usize>,
}

impl SimulationTrace {
    fn push(&mut self, t: f64, x: &Vector, mode: usize, model: &LssModel) {
        self.times.push(t);
        self.outputs.push(&model.mode(mode).c * x);
        self.states.push(x.clone());
        self.active_mode.push(mode);
    }

    /// Output at the last sample whose time is `<= t` (pre-switch sample at a
    /// switch instant).
    pub fn output_at(&self, t: f64) -> Option<&Vector> {
        let idx = self.times.partition_point(|&s| s < t);
        if idx < self.times.len() && self.times[idx] == t {
            return Some(&self.outputs[idx]);
        }
        idx.checked_sub(1).map(|i| &self.outputs[i])
    }
}

/// `exp(A h)` and `int_0^h exp(A s) ds B` from one augmented exponential.
fn zoh_factors(a: &Matrix, b: &Matrix, h: f64) -> (Matrix, Matrix) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * h));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

fn rk4_step(a: &Matrix, b: &Matrix, input: &InputSignal, t: f64, h: f64, x: &Vector) -> Vector {
    let m = b.ncols();
    let f = |t: f64, x: &Vector| a * x + b * input.eval(t, m);
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Simulates the model along `signal` with fixed steps; every switch time is
/// a grid node (the last substep of each dwell interval is shortened).
pub fn simulate(
    model: &LssModel,
    signal: &SwitchingSignal,
    input: &InputSignal,
    step: f64,
    method: Integrator,
) -> Result<SimulationTrace> {
    model::ensure_valid(model)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(LssError::validation(format!("step must be positive, got {step}")));
    }
    if signal.max_mode() >= model.num_modes() {
        return Err(LssError::validation(format!(
            "switching signal uses mode {} but the model has {} modes",
            signal.max_mode() + 1,
            model.num_modes()
        )));
    }
    if let Some(ch) = input.channels() {
        let need = signal.events().iter().map(|&(q, _)| model.mode(q).inputs()).max().unwrap_or(0);
        if ch < need {
            return Err(LssError::validation(format!("input has {ch} channels, model needs {need}")));
        }
    }
    let first = signal.events()[0].0;
    let mut x = match model.initial_state() {
        Some(x0) if x0.len() == model.states(first) => x0.clone(),
        Some(x0) => {
            return Err(LssError::validation(format!(
                "initial state has length {}, first mode has {} states",
                x0.len(),
                model.states(first)
            )))
        }
        None => Vector::zeros(model.states(first)),
    };

    let mut trace = SimulationTrace {
        times: Vec::new(),
        states: Vec::new(),
        outputs: Vec::new(),
        active_mode: Vec::new(),
        switch_indices: Vec::new(),
    };
    let events = signal.events();
    let mut t0 = 0.0;
    for (i, &(q, dwell)) in events.iter().enumerate() {
        let mode = model.mode(q);
        let t_end = t0 + dwell;
        let count = ((dwell / step) - 1e-9).ceil().max(1.0) as usize;
        let full = match method {
            Integrator::Expm => Some(zoh_factors(&mode.a, &mode.b, step)),
            Integrator::Rk4 => None,
        };
        trace.push(t0, &x, q, model);
        let mut t = t0;
        for j in 1..=count {
            let t_next = if j == count { t_end } else { t0 + j as f64 * step };
            let h = t_next - t;
            x = match (&full, method) {
                (Some((phi, gamma)), Integrator::Expm) if j < count => phi * &x + gamma * input.eval(t, mode.inputs()),
                (_, Integrator::Expm) => {
                    let (phi, gamma) = zoh_factors(&mode.a, &mode.b, h);
                    &phi * &x + gamma * input.eval(t, mode.inputs())
                }
                (_, Integrator::Rk4) => rk4_step(&mode.a, &mode.b, input, t, h, &x),
            };
            t = t_next;
            trace.push(t, &x, q, model);
        }
        if let Some(&(next, _)) = events.get(i + 1) {
            trace.switch_indices.push(trace.times.len() - 1);
            x = model.coupling(q, next) * &x;
        }
        t0 = t_end;
    }
    Ok(trace)
}

/// Impulse response `C_q exp(A_q t) B_q` at every grid time.
pub fn impulse_response(model: &LssModel, q: usize, t_grid: &[f64]) -> Result<Vec<Matrix>> {
    model::ensure_valid(model)?;
    if q >= model.num_modes() {
        return Err(LssError::validation(format!("mode {} does not exist", q + 1)));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(LssError::validation("time grid must be nonnegative and nondecreasing"));
    }
    let mode = model.mode(q);
    Ok(t_grid.iter().map(|&t| &mode.c * (&mode.a * t).exp() * &mode.b).collect())
}

fn check_sequence(model: &LssModel, seq: &[usize]) -> Result<()> {
    if seq.is_empty() {
        return Err(LssError::validation("switching sequence is empty"));
    }
    if let Some(&q) = seq.iter().find(|&&q| q >= model.num_modes()) {
        return Err(LssError::validation(format!("mode {} does not exist", q + 1)));
    }
    if seq.windows(2).any(|w| w[0] == w[1]) {
        return Err(LssError::validation("consecutive modes in a switching sequence must differ"));
    }
    Ok(())
}

/// Generalized kernel for the sequence `seq = (d_1, .., d_k)`, listed from
/// the last active mode `d_1` back to the first active mode `d_k`:
///
/// `C_{d_1} e^{A_{d_1} t_1} K_{d_2,d_1} e^{A_{d_2} t_2} ... K_{d_k,d_{k-1}} e^{A_{d_k} t_k} B_{d_k}`.
pub fn kernel_eval(model: &LssModel, seq: &[usize], times: &[f64]) -> Result<Matrix> {
    model::ensure_valid(model)?;
    check_sequence(model, seq)?;
    if times.len() != seq.len() || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(LssError::validation("need one nonnegative dwell time per sequence entry"));
    }
    let exps: Vec<Matrix> = seq.iter().zip(times).map(|(&q, &t)| (&model.mode(q).a * t).exp()).collect();
    let refs: Vec<&Matrix> = exps.iter().collect();
    Ok(kernel_product(model, seq, &refs))
}

/// Kernel product with caller-supplied exponentials `exps[i] = e^{A_{d_i} t_i}`.
/// The sequence is assumed admissible.
pub fn kernel_product(model: &LssModel, seq: &[usize], exps: &[&Matrix]) -> Matrix {
    let k = seq.len();
    let last = seq[k - 1];
    let mut acc = exps[k - 1] * &model.mode(last).b;
    for i in (0..k - 1).rev() {
        acc = exps[i] * (model.coupling(seq[i + 1], seq[i]) * acc);
    }
    &model.mode(seq[0]).c * acc
}

/// All admissible sequences of length `k` over `num_modes` modes.
pub fn admissible_sequences(num_modes: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..num_modes).map(|q| vec![q]).collect();
    for _ in 1..k {
        out = out
            .into_iter()
            .flat_map(|seq| {
                let last = *seq.last().expect("non-empty");
                (0..num_modes).filter(move |&q| q != last).map(move |q| {
                    let mut s = seq.clone();
                    s.push(q);
                    s
                })
            })
            .collect();
    }
    out
}

/// Random switching signal on `[0, horizon]` starting in `start`: between one
/// and ten switch times drawn uniformly, next modes drawn uniformly among the
/// other modes.
pub fn random_switching<R: Rng + ?Sized>(
    num_modes: usize,
    horizon: f64,
    start: usize,
    rng: &mut R,
) -> Result<SwitchingSignal> {
    if num_modes < 2 || start >= num_modes {
        return Err(LssError::validation("random switching needs at least two modes and a valid start"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LssError::validation("horizon must be positive"));
    }
    let count = rng.random_range(1..=10usize);
    let mut times: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    let min_gap = 1e-3 * horizon;
    let mut kept: Vec<f64> = Vec::new();
    for t in times {
        let prev = kept.last().copied().unwrap_or(0.0);
        if t - prev >= min_gap && horizon - t >= min_gap {
            kept.push(t);
        }
    }
    kept.push(horizon);
    let mut events = Vec::with_capacity(kept.len());
    let (mut mode, mut prev) = (start, 0.0);
    for t in kept {
        events.push((mode, t - prev));
        prev = t;
        let shift = rng.random_range(1..num_modes);
        mode = (mode + shift) % num_modes;
    }
    SwitchingSignal::new(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_model(k12: f64, k21: f64) -> LssModel {
        let mode = Mode::new(m1(-1.0), m1(1.0), m1(1.0));
        LssModel::new(vec![mode.clone(), mode], vec![((0, 1), m1(k12)), ((1, 0), m1(k21))]).unwrap()
    }

    #[test]
    fn impulse_response_scalar() {
        let model = scalar_model(1.0, 1.0);
        let h = impulse_response(&model, 0, &[0.0, 2f64.ln()]).unwrap();
        assert_relative_eq!(h[0][(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(h[1][(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn impulse_response_zero_input_map() {
        let mode = Mode::new(m1(-1.0), m1(0.0), m1(1.0));
        let model = LssModel::new(vec![mode.clone(), mode], vec![]).unwrap();
        let h = impulse_response(&model, 1, &[0.0, 0.3, 1.0]).unwrap();
        assert!(h.iter().all(|m| m[(0, 0)] == 0.0));
    }

    #[test]
    fn kernel_level_two_scalar() {
        let model = scalar_model(0.5, 0.5);
        let h = kernel_eval(&model, &[0, 1], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(h[(0, 0)], 0.5, epsilon = 1e-15);
        let h = kernel_eval(&model, &[0, 1], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(h[(0, 0)], (-2.0f64).exp() * 0.5, epsilon = 1e-14);
        assert_relative_eq!(h[(0, 0)], 0.067667642, epsilon = 1e-9);
    }

    #[test]
    fn kernel_uses_coupling_into_last_mode() {
        // h_{1,2} = C_1 e^{A_1 t1} K_{2,1} e^{A_2 t2} B_2
        let model = scalar_model(3.0, 0.25);
        let h = kernel_eval(&model, &[0, 1], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(h[(0, 0)], 0.25);
    }

    #[test]
    fn kernel_level_one_is_impulse_response() {
        let model = scalar_model(0.5, 0.5);
        let h = kernel_eval(&model, &[1], &[0.7]).unwrap();
        let r = impulse_response(&model, 1, &[0.7]).unwrap();
        assert_eq!(h, r[0]);
    }

    #[test]
    fn kernel_rejects_repeated_modes() {
        let model = scalar_model(0.5, 0.5);
        assert!(kernel_eval(&model, &[0, 0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn admissible_sequence_counts() {
        assert_eq!(admissible_sequences(2, 3), vec![vec![0, 1, 0], vec![1, 0, 1]]);
        assert_eq!(admissible_sequences(3, 3).len(), 3 * 2 * 2);
    }

    #[test]
    fn demo_input_at_zero() {
        assert_eq!(InputSignal::demo_value(0.0), 1.0);
    }

    #[test]
    fn sampled_input_zero_order_hold() {
        let u = InputSignal::sampled(vec![0.0, 1.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(u.eval(0.5, 2).as_slice(), &[1.0, 2.0]);
        assert_eq!(u.eval(1.0, 1).as_slice(), &[3.0]);
        assert_eq!(u.eval(7.0, 2).as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn grid_contains_switch_times_twice() {
        let model = scalar_model(2.0, 1.0);
        let sig = SwitchingSignal::new(vec![(0, 0.25), (1, 0.3)]).unwrap();
        let tr = simulate(&model, &sig, &InputSignal::Constant(1.0), 0.1, Integrator::Rk4).unwrap();
        let i = tr.switch_indices[0];
        assert_eq!(tr.times[i], 0.25);
        assert_eq!(tr.times[i + 1], 0.25);
        assert_eq!((tr.active_mode[i], tr.active_mode[i + 1]), (0, 1));
        assert_eq!(tr.states[i + 1][0], 2.0 * tr.states[i][0]);
        assert_eq!(*tr.times.last().unwrap(), 0.55);
    }

    #[test]
    fn random_switching_is_admissible() {
        let mut rng = crate::random::seeded(4);
        for _ in 0..20 {
            let s = random_switching(2, 10.0, 0, &mut rng).unwrap();
            assert_eq!(s.events()[0].0, 0);
            assert_relative_eq!(s.duration(), 10.0, epsilon = 1e-12);
        }
    }
}
