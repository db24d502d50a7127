//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use varme_core::{ErrorSpec, VarSpec};

/// Stable `p`-variate VAR(`r`) with a decaying lag profile and equicorrelated shocks.
pub fn banded_spec(p: usize, r: usize) -> VarSpec {
    let blocks = (1..=r)
        .map(|j| {
            let scale = 0.5 / (j * j) as f64;
            DMatrix::from_fn(p, p, |i, k| {
                if i == k {
                    scale
                } else if i.abs_diff(k) == 1 {
                    0.2 * scale
                } else {
                    0.0
                }
            })
        })
        .collect();
    let sigma = DMatrix::from_fn(p, p, |i, k| if i == k { 1.0 } else { 0.3 });
    VarSpec::new(DVector::zeros(p), blocks, sigma).expect("banded spec is valid")
}

pub fn noise(p: usize) -> ErrorSpec {
    ErrorSpec::isotropic(p, 0.12).expect("positive variance")
}
