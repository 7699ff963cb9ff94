mod common;

use proptest::prelude::*;
use qrep::dynamics::project_simplex;

fn on_simplex(y: &[f64]) -> bool {
    y.iter().all(|&v| v >= 0.0) && (y.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

proptest! {
    #[test]
    fn lands_on_the_simplex(x in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        prop_assert!(on_simplex(&project_simplex(&x)));
    }

    #[test]
    fn agrees_with_qp_oracle(x in prop::collection::vec(-3.0f64..3.0, 1..40)) {
        let ours = project_simplex(&x);
        let oracle = common::projection_oracle(&x);
        for (a, b) in ours.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{ours:?} vs {oracle:?}");
        }
    }

    #[test]
    fn fixes_simplex_points(w in prop::collection::vec(0.01f64..1.0, 1..20)) {
        let s: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|v| v / s).collect();
        let y = project_simplex(&p);
        for (a, b) in y.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ignores_uniform_shifts(x in prop::collection::vec(-5.0f64..5.0, 1..20), c in -5.0f64..5.0) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for (a, b) in project_simplex(&x).iter().zip(&project_simplex(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    // Variational characterisation: <x - P(x), y - P(x)> <= 0 for every simplex point y.
    #[test]
    fn obtuse_angle_condition(
        x in prop::collection::vec(-3.0f64..3.0, 2..15),
        seed in prop::collection::vec(0.0f64..1.0, 15),
    ) {
        let p = project_simplex(&x);
        let raw: Vec<f64> = seed[..x.len()].iter().map(|v| v + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        let y: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let dot: f64 = (0..x.len()).map(|k| (x[k] - p[k]) * (y[k] - p[k])).sum();
        prop_assert!(dot <= 1e-10);
    }
}

#[test]
fn worked_examples() {
    assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    let y = project_simplex(&[1.0, 1.0]);
    assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
    assert_eq!(project_simplex(&[5.0]), vec![1.0]);
}

#[test]
fn qp_oracle_handles_general_quadratics() {
    use nalgebra::{DMatrix, DVector};
    // min (y0 - 1)^2 + 4 (y1 - 1)^2 on the simplex: y0 = 0.2, y1 = 0.8.
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
    let c = DVector::from_vec(vec![-2.0, -8.0]);
    let y = common::simplex_qp(&q, &c);
    assert!((y[0] - 0.2).abs() < 1e-12 && (y[1] - 0.8).abs() < 1e-12);
}
