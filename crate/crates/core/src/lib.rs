//! Vector autoregressions observed with additive measurement error.
//!
//! Fits VAR(r) models to `Z_t = z_t + e_t` with known `Sigma_e`, either ignoring the
//! noise (`usual`) or correcting for it (`corrected`), and tests Granger-causality
//! hypotheses with Wald statistics built on the corrected estimator's asymptotic
//! covariance. Simulation and brute-force oracle tooling sit alongside.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use varme_core::{fit_corrected, granger_contrast, phi_plugin, simulate, wald_test, ErrorSpec, VarSpec};
//!
//! let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.2, 0.5]);
//! let sigma = DMatrix::from_row_slice(2, 2, &[10.0, 5.0, 5.0, 5.0]);
//! let spec = VarSpec::new(DVector::from_vec(vec![1.0, 1.0]), vec![b], sigma)?;
//! let err = ErrorSpec::isotropic(2, 2.0)?;
//!
//! let (_, observed) = simulate(&spec, &err, 500, 42, 0)?;
//! let fit = fit_corrected(&observed, 1, &err)?;
//! let phi = phi_plugin(&fit, &err)?;
//! // Does series 2 Granger-cause series 1?
//! let test = wald_test(&fit, &phi, &granger_contrast(2, 1, 2, 1)?)?;
//! assert!((0.0..=1.0).contains(&test.p_value));
//! # Ok::<(), varme_core::Error>(())
//! ```

// `!(x > t)` comparisons deliberately treat NaN as failing.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics_oracle;
pub mod chisq;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod linalg;
pub mod montecarlo;
pub mod tsmodel;

pub use error::{Error, Result};
pub use estimate::{fit_corrected, fit_usual, EstimatorKind, FitResult};
pub use inference::{
    granger_contrast, phi_exact, phi_for_fit, phi_plugin, wald_test, Contrast, PhiMatrix,
    WaldResult,
};
pub use tsmodel::{simulate, simulate_path, ErrorSpec, TimeSeriesMatrix, VarSpec};
