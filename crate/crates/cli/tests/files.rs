use std::path::Path;

use proptest::prelude::*;
use swmor::{LssModel, Matrix, Mode, Vector};
use swmor_cli::modelfile::ModelFile;
use swmor_cli::mtx::read_mtx;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn matrix_market_fixture_exact() {
    let m = read_mtx(&fixture("fixture3.mtx")).unwrap();
    #[rustfmt::skip]
    let expected = Matrix::from_row_slice(3, 3, &[
        -1.0, 0.25, -std::f64::consts::FRAC_1_SQRT_2,
        0.0, -2.0, 1.2345678901234567,
        1.0 / 3.0, 0.0, -3.0,
    ]);
    assert_eq!(m, expected);
}

#[test]
fn matrix_market_symmetric_array_fixture() {
    let m = read_mtx(&fixture("fixture3_sym.mtx")).unwrap();
    #[rustfmt::skip]
    let expected = Matrix::from_row_slice(3, 3, &[
        4.0, -1.0, 0.5,
        -1.0, 3.0, -0.25,
        0.5, -0.25, 2.0,
    ]);
    assert_eq!(m, expected);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(finite(), rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

fn model() -> impl Strategy<Value = (LssModel, Option<String>)> {
    (1usize..4, 1usize..4, 1usize..3, 1usize..3, any::<bool>(), any::<bool>())
        .prop_flat_map(|(n1, n2, m, p, couple, x0)| {
            (
                matrix(n1, n1),
                matrix(n1, m),
                matrix(p, n1),
                matrix(n2, n2),
                matrix(n2, m),
                matrix(p, n2),
                matrix(n2, n1),
                matrix(n1, n2),
                prop::collection::vec(finite(), n1),
                Just((n1 == n2, couple, x0)),
                prop::option::of("[a-z \"\\\\]{0,12}"),
            )
        })
        .prop_map(|(a1, b1, c1, a2, b2, c2, k12, k21, x0, (square, couple, with_x0), name)| {
            let mut couplings = vec![((0, 1), k12)];
            if couple || !square {
                couplings.push(((1, 0), k21));
            }
            let mut m = LssModel::new_unchecked(vec![Mode::new(a1, b1, c1), Mode::new(a2, b2, c2)], couplings).unwrap();
            if with_x0 {
                m = m.with_initial_state(Vector::from_vec(x0)).unwrap();
            }
            (m, name)
        })
}

proptest! {
    #[test]
    fn model_file_round_trip((model, name) in model()) {
        let file = ModelFile { name, description: Some("round trip".into()), model };
        let text = file.to_toml().unwrap();
        let back = ModelFile::parse(&text).unwrap();
        prop_assert_eq!(&back.name, &file.name);
        for (a, b) in back.model.modes().iter().zip(file.model.modes()) {
            for (x, y) in [(&a.a, &b.a), (&a.b, &b.b), (&a.c, &b.c)] {
                prop_assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
        for (q, s) in [(0, 1), (1, 0)] {
            prop_assert_eq!(back.model.is_explicit_coupling(q, s), file.model.is_explicit_coupling(q, s));
            let (x, y) = (back.model.coupling(q, s), file.model.coupling(q, s));
            prop_assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        prop_assert_eq!(back.model.initial_state(), file.model.initial_state());
    }
}
