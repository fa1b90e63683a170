use nalgebra::DMatrix;
use proptest::prelude::*;
use rrmar::linalg::{kron, unvec, vec};
use rrmar::model::coefficient_matrices;
use rrmar::{export_long, ingest, pseudo_to_reduced, rrmar_to_pseudo, DatasetSpec, MatrixSeries, RRMarParams};

type Mat = DMatrix<f64>;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v))
}

fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm())
}

/// Loadings with a well-conditioned bottom block so the normalization exists.
fn loading(n: usize, r: usize) -> impl Strategy<Value = Mat> {
    mat(n, r).prop_map(move |mut u| {
        for i in 0..r {
            u[(n - r + i, i)] += 3.0;
        }
        u
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vec_of_triple_product(a in mat(3, 2), b in mat(2, 4), c in mat(4, 2)) {
        let lhs = vec(&(&a * &b * &c));
        let rhs = kron(&c.transpose(), &a) * vec(&b);
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn unvec_inverts_vec(m in mat(4, 3)) {
        prop_assert_eq!(unvec(&vec(&m), 4, 3).unwrap(), m);
    }

    #[test]
    fn normalization_keeps_coefficients(
        u1 in loading(4, 2),
        u2 in loading(3, 1),
        u3 in prop::collection::vec(mat(4, 2), 2),
        u4 in prop::collection::vec(mat(3, 1), 2),
    ) {
        let params = RRMarParams {
            u1, u2, u3, u4,
            sigma1: Mat::identity(4, 4),
            sigma2: Mat::identity(3, 3),
        };
        let pseudo = rrmar_to_pseudo(&params).unwrap();
        let back = pseudo_to_reduced(&pseudo);
        let before = coefficient_matrices(&params.u1, &params.u2, &params.u3, &params.u4);
        let after = coefficient_matrices(&back.u1, &back.u2, &back.u3, &back.u4);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!(close(a, b, 1e-9));
        }
        // δ annihilates the row loading.
        let residual = pseudo.delta().transpose() * &params.u1;
        prop_assert!(residual.norm() < 1e-9 * (1.0 + params.u1.norm()));
    }
}

#[test]
fn long_format_round_trips_through_a_file() {
    let data: Vec<Mat> = (0..6).map(|t| Mat::from_fn(2, 3, |i, j| (t * 7 + i * 3 + j) as f64 / 9.0 - 0.37)).collect();
    let series = MatrixSeries::new(data).unwrap();
    let rows = vec!["GDP".to_string(), "IR".to_string()];
    let cols = vec!["USA".to_string(), "CAN".to_string(), "DEU".to_string()];
    let times: Vec<String> = (1..=6).map(|t| format!("2001Q{t}")).collect();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    export_long(&series, &rows, &cols, &times, std::fs::File::create(&path).unwrap()).unwrap();

    let mut spec = DatasetSpec::new(&path);
    spec.demean = false;
    let back = ingest(&spec).unwrap();
    assert_eq!(back.row_labels, rows);
    assert_eq!(back.col_labels, cols);
    assert_eq!(back.times, times);
    for t in 0..series.len() {
        assert_eq!(back.series.get(t), series.get(t));
    }
}
