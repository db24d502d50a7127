#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use varme_core::{ErrorSpec, VarSpec};

/// Stable by construction: every block has infinity norm below `0.9 / r`.
pub fn stable_spec(max_p: usize, max_r: usize) -> impl Strategy<Value = VarSpec> {
    (1..=max_p, 1..=max_r).prop_flat_map(|(p, r)| {
        let bound = 0.9 / (p * r) as f64;
        (
            prop::collection::vec(-bound..bound, p * p * r),
            prop::collection::vec(-1.0..1.0f64, p * p),
            prop::collection::vec(-2.0..2.0f64, p),
        )
            .prop_map(move |(b, l, a)| {
                let b = DMatrix::from_row_slice(p, p * r, &b);
                let l = DMatrix::from_row_slice(p, p, &l);
                let sigma = &l * l.transpose() + DMatrix::identity(p, p) * 0.5;
                VarSpec::from_stacked(DVector::from_vec(a), &b, sigma).unwrap()
            })
    })
}

/// PSD measurement-error covariance of dimension `p`, possibly singular.
pub fn error_spec(p: usize) -> impl Strategy<Value = ErrorSpec> {
    (prop::collection::vec(-0.8..0.8f64, p * p), 0.0..0.5f64).prop_map(move |(l, d)| {
        let l = DMatrix::from_row_slice(p, p, &l);
        ErrorSpec::new(&l * l.transpose() + DMatrix::identity(p, p) * d).unwrap()
    })
}

pub fn spec_with_error(max_p: usize, max_r: usize) -> impl Strategy<Value = (VarSpec, ErrorSpec)> {
    stable_spec(max_p, max_r).prop_flat_map(|s| {
        let p = s.p();
        (Just(s), error_spec(p))
    })
}

pub fn section3(b12: f64, b21: f64) -> (VarSpec, ErrorSpec) {
    let b = DMatrix::from_row_slice(2, 2, &[0.5, b12, b21, 0.5]);
    let sigma = DMatrix::from_row_slice(2, 2, &[10.0, 5.0, 5.0, 5.0]);
    (
        VarSpec::new(DVector::from_vec(vec![1.0, 1.0]), vec![b], sigma).unwrap(),
        ErrorSpec::isotropic(2, 2.0).unwrap(),
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
