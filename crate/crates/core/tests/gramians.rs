use approx::assert_relative_eq;
use swmor::gramians::{self, Levels};
use swmor::linalg::block_diag;
use swmor::lyap;
use swmor::model::assemble_blocks;
use swmor::random::{random_model, seeded, RandomModelSpec};
use swmor::{LssModel, Matrix, Mode};

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

fn min_eig(m: &Matrix) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

fn assert_psd(m: &Matrix) {
    assert_eq!(m, &m.transpose());
    let tr = m.trace().abs().max(f64::MIN_POSITIVE);
    assert!(min_eig(m) >= -1e-10 * tr, "min eigenvalue {}", min_eig(m));
}

#[test]
fn series_and_direct_agree_on_random_models() {
    for seed in 0..20u64 {
        let mut rng = seeded(seed);
        let n1 = 2 + (seed as usize % 9);
        let n2 = 2 + ((seed as usize * 7) % 9);
        let spec =
            RandomModelSpec { states: vec![n1, n2], inputs: 2, outputs: 1, coupling_fraction: 0.6, non_normality: 0.3 };
        let model = random_model(&spec, &mut rng).unwrap();
        assert!(gramians::existence_check(&model).unwrap().satisfied);
        let s = gramians::infinite_gramians_series(&model, 1e-14, 500).unwrap();
        let d = gramians::infinite_gramians_direct(&model, 1e-14, 500).unwrap();
        assert!(s.converged && d.converged);
        for q in 0..2 {
            assert!(rel(&s.p[q], &d.p[q]) <= 1e-8, "seed {seed} P_{q}");
            assert!(rel(&s.q[q], &d.q[q]) <= 1e-8, "seed {seed} Q_{q}");
            assert_psd(&d.p[q]);
            assert_psd(&d.q[q]);
        }
        assert!(d.residuals.max() <= 1e-12, "seed {seed}: residual {}", d.residuals.max());
    }
}

#[test]
fn level_gramians_are_psd_and_first_level_is_linear() {
    let mut rng = seeded(5);
    let model = random_model(&RandomModelSpec::two_mode(6), &mut rng).unwrap();
    let levels = gramians::level_k_gramians(&model, 6).unwrap();
    for q in 0..2 {
        let (p1, q1) = gramians::linear_gramians(&model, q).unwrap();
        assert_eq!(levels[0].p[q], p1);
        assert_eq!(levels[0].q[q], q1);
    }
    for lvl in &levels {
        for m in lvl.p.iter().chain(&lvl.q) {
            assert_psd(m);
        }
        assert!(lvl.residuals.max() <= 1e-10);
    }
}

#[test]
fn direct_iterates_are_monotone_in_trace() {
    let mut rng = seeded(8);
    let model = random_model(&RandomModelSpec::two_mode(8), &mut rng).unwrap();
    let hist = gramians::direct_trace_history(&model, 1e-14, 500).unwrap();
    assert!(hist.len() > 2);
    for w in hist.windows(2) {
        assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn block_equation_solution_is_block_diagonal() {
    // solve A_D P + P A_D^T + K P K^T + B_D B_D^T = 0 as one vectorized system
    for seed in 0..5u64 {
        let mut rng = seeded(100 + seed);
        let spec = RandomModelSpec {
            states: vec![2 + (seed as usize % 2), 3],
            inputs: 1,
            outputs: 2,
            coupling_fraction: 0.7,
            non_normality: 0.2,
        };
        let model = random_model(&spec, &mut rng).unwrap();
        let blocks = assemble_blocks(&model).unwrap();
        let n = model.total_states();
        assert!(n <= 6);
        let eye = Matrix::identity(n, n);
        let at = blocks.a_d.transpose();
        let kt = blocks.k_offdiag.transpose();
        let w = &blocks.b_d * blocks.b_d.transpose();
        let p_d = lyap::solve_vectorized(&[(&blocks.a_d, &eye), (&eye, &at), (&blocks.k_offdiag, &kt)], &w).unwrap();
        let ct = blocks.c_d.transpose();
        let v = &ct * &blocks.c_d;
        let q_d = lyap::solve_vectorized(&[(&at, &eye), (&eye, &blocks.a_d), (&kt, &blocks.k_offdiag)], &v).unwrap();

        let g = gramians::infinite_gramians_direct(&model, 1e-14, 500).unwrap();
        let p_blocks = block_diag(g.p.iter());
        let q_blocks = block_diag(g.q.iter());
        assert!((&p_d - &p_blocks).amax() <= 1e-10 * p_d.amax(), "seed {seed}");
        assert!((&q_d - &q_blocks).amax() <= 1e-10 * q_d.amax(), "seed {seed}");
    }
}

#[test]
fn duality_swaps_gramians() {
    let mut rng = seeded(21);
    let spec =
        RandomModelSpec { states: vec![4, 3], inputs: 2, outputs: 3, coupling_fraction: 0.5, non_normality: 0.4 };
    let model = random_model(&spec, &mut rng).unwrap();
    let dual_modes =
        model.modes().iter().map(|m| Mode::new(m.a.transpose(), m.c.transpose(), m.b.transpose())).collect();
    let dual_couplings = model.coupling_pairs().map(|(q, s)| ((s, q), model.coupling(q, s).transpose())).collect();
    let dual = LssModel::new(dual_modes, dual_couplings).unwrap();
    let g = gramians::infinite_gramians_direct(&model, 1e-14, 500).unwrap();
    let gd = gramians::infinite_gramians_direct(&dual, 1e-14, 500).unwrap();
    for q in 0..2 {
        assert!((&gd.p[q] - &g.q[q]).amax() <= 1e-10 * g.q[q].amax());
        assert!((&gd.q[q] - &g.p[q]).amax() <= 1e-10 * g.p[q].amax());
    }
}

#[test]
fn symmetric_scalar_closed_form() {
    // -2 p1 + p2/4 + 1 = 0, -2 p2 + p1/4 + 1 = 0 solved by Cramer's rule
    let det = 4.0 - 1.0 / 16.0;
    let oracle = (2.0 + 0.25) / det;
    assert_relative_eq!(oracle, 4.0 / 7.0, epsilon = 1e-15);

    let mode =
        Mode::new(Matrix::from_element(1, 1, -1.0), Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0));
    let k = Matrix::from_element(1, 1, 0.5);
    let model = LssModel::new(vec![mode.clone(), mode], vec![((0, 1), k.clone()), ((1, 0), k)]).unwrap();
    let s = gramians::infinite_gramians_series(&model, 1e-12, 200).unwrap();
    let d = gramians::infinite_gramians_direct(&model, 1e-12, 200).unwrap();
    assert!(matches!(s.levels_used, Levels::Finite(_)));
    assert_eq!(d.levels_used, Levels::Infinite);
    for q in 0..2 {
        assert!((s.p[q][(0, 0)] - oracle).abs() <= 1e-10);
        assert!((d.p[q][(0, 0)] - oracle).abs() <= 1e-10);
        assert_eq!(s.q[q], s.p[q]);
    }
}
