//! Least-squares and measurement-error-corrected estimators of the VAR coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tsmodel::{stationary_autocov, ErrorSpec, TimeSeriesMatrix, VarSpec};

/// Which estimator produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Conditional ML / OLS on the observed series, ignoring measurement error.
    Usual,
    /// Moment estimator with `I_r (x) Sigma_e` removed from the regressor moments.
    Corrected,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Usual => "usual",
            EstimatorKind::Corrected => "corrected",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regression-sample moments of `Z_t` on `Z*_{t-1} = (Z_{t-1}', ..., Z_{t-r}')'`.
///
/// The regression sample is `t = r+1..n`; every moment divides by `n_eff = n - r`.
#[derive(Debug, Clone)]
pub struct SampleMoments {
    pub p: usize,
    pub r: usize,
    pub n_eff: usize,
    pub zbar: DVector<f64>,
    pub zstar_bar: DVector<f64>,
    /// `pr x pr`
    pub s_zstar: DMatrix<f64>,
    /// `pr x p`
    pub s_zstar_z: DMatrix<f64>,
    /// `lagged_s[h-1]`: cross moment of `Z*_{t-1}` with `Z*_{t-h-1}`, `h = 1..=r`.
    pub lagged_s: Vec<DMatrix<f64>>,
    regressors: DMatrix<f64>,
    responses: DMatrix<f64>,
}

pub fn build_moments(data: &TimeSeriesMatrix, r: usize) -> Result<SampleMoments> {
    if r == 0 {
        return Err(Error::InvalidArgument("order r must be at least 1".into()));
    }
    let (n, p) = (data.n(), data.p());
    if n < r + 1 {
        return Err(Error::InsufficientData {
            needed: r + 1,
            got: n,
        });
    }
    let n_eff = n - r;
    let z = data.values();
    let regressors = DMatrix::from_fn(n_eff, p * r, |i, c| {
        let (lag, k) = (c / p, c % p);
        z[(i + r - 1 - lag, k)]
    });
    let responses = z.rows(r, n_eff).into_owned();

    let zstar_bar = regressors.row_mean().transpose();
    let zbar = responses.row_mean().transpose();
    let xc = DMatrix::from_fn(n_eff, p * r, |i, c| regressors[(i, c)] - zstar_bar[c]);
    let yc = DMatrix::from_fn(n_eff, p, |i, c| responses[(i, c)] - zbar[c]);
    let nf = n_eff as f64;
    let s_zstar = linalg::symmetrize(&(xc.transpose() * &xc / nf));
    let s_zstar_z = xc.transpose() * &yc / nf;

    let lagged_s = (1..=r)
        .map(|h| {
            if h >= n_eff {
                return DMatrix::zeros(p * r, p * r);
            }
            let lead = xc.rows(h, n_eff - h);
            let lagged = xc.rows(0, n_eff - h);
            lead.transpose() * lagged / nf
        })
        .collect();

    Ok(SampleMoments {
        p,
        r,
        n_eff,
        zbar,
        zstar_bar,
        s_zstar,
        s_zstar_z,
        lagged_s,
        regressors,
        responses,
    })
}

/// Numerical health of the regressor moment matrix that was inverted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Smallest eigenvalue of `S_Z*` (usual) or `S_Z* - I_r (x) Sigma_e` (corrected).
    pub min_eigenvalue: f64,
    pub condition_number: f64,
    /// Admissibility threshold used for the corrected estimator.
    pub admissibility_threshold: f64,
    /// Smallest eigenvalue within 10x of the admissibility threshold.
    pub near_inadmissible: bool,
    /// `Sigma_hat` has a negative eigenvalue (values are left as computed).
    pub indefinite_sigma: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: EstimatorKind,
    pub a_hat: DVector<f64>,
    /// `p x pr`, blocks `B_1 .. B_r`.
    pub b_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    /// Effective sample count `n - r`.
    pub n: usize,
    /// `q_hat_t = Z_t - a_hat - B_hat Z*_{t-1}` for the regression sample.
    pub residuals: DMatrix<f64>,
    pub diagnostics: Diagnostics,
    /// Raw regressor moment matrix `S_Z*`.
    pub s_zstar: DMatrix<f64>,
    pub p: usize,
    pub r: usize,
}

impl FitResult {
    /// `B_hat_j`, `j = 1..=r`.
    pub fn block(&self, j: usize) -> DMatrix<f64> {
        linalg::block(&self.b_hat, 0, (j - 1) * self.p, self.p, self.p)
    }

    /// `vec(B_hat')`.
    pub fn coefficient_vector(&self) -> DVector<f64> {
        linalg::vec_transpose(&self.b_hat)
    }
}

/// Conditional ML / OLS fit ignoring measurement error.
pub fn fit_usual(data: &TimeSeriesMatrix, r: usize) -> Result<FitResult> {
    let m = build_moments(data, r)?;
    fit_from_moments(&m, None)
}

/// Measurement-error-corrected fit with known `Sigma_e`.
pub fn fit_corrected(data: &TimeSeriesMatrix, r: usize, err: &ErrorSpec) -> Result<FitResult> {
    err.check_dim(data.p())?;
    let m = build_moments(data, r)?;
    fit_from_moments(&m, Some(err))
}

/// Fit from precomputed moments; `err = None` gives the usual estimator.
pub fn fit_from_moments(m: &SampleMoments, err: Option<&ErrorSpec>) -> Result<FitResult> {
    let (p, r) = (m.p, m.r);
    let pr = p * r;
    let stacked_e = err.map(|e| e.stacked(r));
    let adjusted = match &stacked_e {
        Some(se) => &m.s_zstar - se,
        None => m.s_zstar.clone(),
    };
    let eig = linalg::sym_eigenvalues(&adjusted);
    let (lo, hi) = (eig[0], eig[pr - 1]);
    let threshold = 1e-8 * m.s_zstar.trace() / pr as f64;
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let inverse = match err {
        Some(_) => {
            if !(lo > threshold) {
                return Err(Error::Inadmissible {
                    min_eigenvalue: lo,
                    threshold,
                });
            }
            linalg::spd_inverse(&adjusted)?.0
        }
        None => linalg::spd_inverse(&adjusted)?.0,
    };

    let b_hat = (inverse * &m.s_zstar_z).transpose();
    let a_hat = &m.zbar - &b_hat * &m.zstar_bar;
    let fitted = &m.regressors * b_hat.transpose();
    let residuals = DMatrix::from_fn(m.n_eff, p, |t, k| {
        m.responses[(t, k)] - a_hat[k] - fitted[(t, k)]
    });
    let mut sigma_hat = residuals.transpose() * &residuals / m.n_eff as f64;
    if let (Some(e), Some(se)) = (err, &stacked_e) {
        sigma_hat -= e.matrix();
        sigma_hat -= &b_hat * se * b_hat.transpose();
    }
    let sigma_hat = linalg::symmetrize(&sigma_hat);
    let indefinite_sigma = linalg::min_eigenvalue(&sigma_hat) < 0.0;

    Ok(FitResult {
        kind: if err.is_some() {
            EstimatorKind::Corrected
        } else {
            EstimatorKind::Usual
        },
        a_hat,
        b_hat,
        sigma_hat,
        n: m.n_eff,
        residuals,
        diagnostics: Diagnostics {
            min_eigenvalue: lo,
            condition_number: condition,
            admissibility_threshold: threshold,
            near_inadmissible: err.is_some() && lo < 10.0 * threshold,
            indefinite_sigma,
        },
        s_zstar: m.s_zstar.clone(),
        p,
        r,
    })
}

/// Probability limit of the usual estimator under measurement error:
/// `B [I_pr + (I_r (x) Sigma_e) Gamma_r(0)^{-1}]^{-1}`.
pub fn ols_probability_limit(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
    err.check_dim(spec.p())?;
    let r = spec.r();
    let pr = spec.p() * r;
    let gamma0 = stationary_autocov(spec, r)?.big_gamma(0);
    let gamma0_inv = linalg::general_inverse(&gamma0)?;
    let inner = DMatrix::identity(pr, pr) + err.stacked(r) * gamma0_inv;
    Ok(spec.coefficients() * linalg::general_inverse(&inner)?)
}
