//! Asymptotic covariance of the corrected coefficient estimator, Granger-causality
//! contrasts and Wald tests.
//!
//! Coefficients are indexed through `vec(B')`: coefficient `(k, s)` of the stacked
//! `p x pr` matrix `B` sits at `k * pr + s`, so each equation is a contiguous block
//! of `pr` entries. See [`vec_bt_index`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::chisq::chisq_upper_tail;
use crate::error::{Error, Result};
use crate::estimate::{EstimatorKind, FitResult};
use crate::linalg::{self, kron, kron_commuted};
use crate::tsmodel::{is_stable, stationary_autocov, AutocovarianceSet, ErrorSpec, VarSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiSource {
    /// Evaluated at known model parameters.
    Exact,
    /// Evaluated at the corrected fit's parameters.
    Plugin,
    /// `Sigma_hat (x) S_Z*^{-1}`, the textbook covariance for the usual estimator.
    Classical,
}

/// Asymptotic covariance of `sqrt(n) (vec(B_hat') - vec(B'))`, with its ingredients.
#[derive(Debug, Clone)]
pub struct PhiMatrix {
    pub phi: DMatrix<f64>,
    pub source: PhiSource,
    pub sigma_theta: DMatrix<f64>,
    pub a_r: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
}

impl PhiMatrix {
    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    /// `sqrt(Phi_ii / n)` for every coefficient.
    pub fn standard_errors(&self, n: usize) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            (self.phi[(i, i)].max(0.0) / n as f64).sqrt()
        })
    }
}

/// 0-based position in `vec(B')` of the coefficient on series `column` at lag `lag`
/// in the equation for series `equation` (all three 1-based). This is
/// `(equation-1)*p*r + (lag-1)*p + column - 1`.
pub fn vec_bt_index(
    p: usize,
    r: usize,
    equation: usize,
    lag: usize,
    column: usize,
) -> Result<usize> {
    if !(1..=p).contains(&equation) || !(1..=p).contains(&column) || !(1..=r).contains(&lag) {
        return Err(Error::Index(format!(
            "coefficient (equation {equation}, lag {lag}, column {column}) outside p = {p}, r = {r}"
        )));
    }
    Ok((equation - 1) * p * r + (lag - 1) * p + column - 1)
}

/// `J_l`: `r x r`, ones on the `|l|`-th superdiagonal (`l > 0`) or subdiagonal (`l < 0`);
/// `J_0` is the zero matrix.
pub fn shift_matrix(l: isize, r: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r, r);
    if l == 0 {
        return j;
    }
    let k = l.unsigned_abs();
    for i in 0..r.saturating_sub(k) {
        if l > 0 {
            j[(i, i + k)] = 1.0;
        } else {
            j[(i + k, i)] = 1.0;
        }
    }
    j
}

/// `Sigma_theta = Sigma + Sigma_e + B (I_r (x) Sigma_e) B'`, the covariance of the
/// observed-regression disturbance `q_t + e_t - B e*_{t-1}`.
pub fn sigma_theta(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
    err.check_dim(spec.p())?;
    let b = spec.coefficients();
    let st = spec.sigma() + err.matrix() + &b * err.stacked(spec.r()) * b.transpose();
    Ok(linalg::symmetrize(&st))
}

/// Moving-average weights `Psi_0 = I, Psi_j = sum_{i=1}^{min(j,r)} B_i Psi_{j-i}`.
pub(crate) fn ma_weights(spec: &VarSpec, upto: usize) -> Vec<DMatrix<f64>> {
    let p = spec.p();
    let mut psi = vec![DMatrix::identity(p, p)];
    for j in 1..=upto {
        let mut m = DMatrix::zeros(p, p);
        for i in 1..=j.min(spec.r()) {
            m += spec.block(i) * &psi[j - i];
        }
        psi.push(m);
    }
    psi
}

/// Terms of `A_r` in the covariance `Phi`, grouped by origin.
struct ArAssembly {
    p: usize,
    r: usize,
    b: DMatrix<f64>,
    sigma: DMatrix<f64>,
    sigma_e: DMatrix<f64>,
    stacked_e: DMatrix<f64>,
    sigma_theta: DMatrix<f64>,
    acov: AutocovarianceSet,
    psi: Vec<DMatrix<f64>>,
}

impl ArAssembly {
    fn new(spec: &VarSpec, err: &ErrorSpec) -> Result<Self> {
        let r = spec.r();
        Ok(Self {
            p: spec.p(),
            r,
            b: spec.coefficients(),
            sigma: spec.sigma().clone(),
            sigma_e: err.matrix().clone(),
            stacked_e: err.stacked(r),
            sigma_theta: sigma_theta(spec, err)?,
            acov: stationary_autocov(spec, 2 * r)?,
            psi: ma_weights(spec, r),
        })
    }

    /// `J_{-h} (x) Sigma_e` for `h != 0`: covariance of stacked errors `h` periods apart.
    fn error_overlap(&self, h: isize) -> DMatrix<f64> {
        kron(&shift_matrix(-h, self.r), &self.sigma_e)
    }

    /// Disturbance autocovariance at lag `h`, `1 <= h <= r`:
    /// `-B_h Sigma_e + B (J_{-h} (x) Sigma_e) B'`.
    fn disturbance_autocov(&self, h: usize) -> DMatrix<f64> {
        let p = self.p;
        let bh = linalg::block(&self.b, 0, (h - 1) * p, p, p);
        -(&bh * &self.sigma_e) + &self.b * self.error_overlap(h as isize) * self.b.transpose()
    }

    /// Covariance of the disturbance with the stacked regressor `h >= 1` periods later.
    fn regressor_disturbance_cov(&self, h: usize) -> DMatrix<f64> {
        let (p, r) = (self.p, self.r);
        let mut m = DMatrix::zeros(p * r, p);
        for i in 0..r {
            if h > i {
                let blk = &self.psi[h - 1 - i] * &self.sigma;
                linalg::set_block(&mut m, i * p, 0, &blk);
            }
        }
        if h <= r {
            let cur = linalg::block(&m, (h - 1) * p, 0, p, p) + &self.sigma_e;
            linalg::set_block(&mut m, (h - 1) * p, 0, &cur);
        }
        m - self.error_overlap(h as isize) * self.b.transpose()
    }

    fn assemble(&self) -> DMatrix<f64> {
        let r = self.r;
        let bt = self.b.transpose();
        // h = 0
        let mut a = kron(&self.sigma_theta, &self.stacked_e);
        a += kron_commuted(&(&self.b * &self.stacked_e), &(&self.stacked_e * &bt));
        for h in 1..=r {
            let v = self.disturbance_autocov(h);
            let g = self.acov.big_gamma(h as isize);
            a += kron(&v, &g) + kron(&v.transpose(), &g.transpose());
            if h < r {
                let eo = self.error_overlap(h as isize);
                a += kron(&v, &eo) + kron(&v.transpose(), &eo.transpose());
                let lead = -(&self.b * &eo);
                let lag = self.regressor_disturbance_cov(h);
                let rh = kron_commuted(&lead, &lag);
                a += &rh + kron_commuted(&lag.transpose(), &lead.transpose());
            }
        }
        linalg::symmetrize(&a)
    }
}

fn sandwich(
    gamma0: &DMatrix<f64>,
    sigma_theta: &DMatrix<f64>,
    a_r: &DMatrix<f64>,
    p: usize,
) -> Result<DMatrix<f64>> {
    let g_inv = linalg::spd_inverse(gamma0)
        .map_err(|e| Error::NearUnitRoot(format!("Gamma_r(0) is not invertible: {e}")))?
        .0;
    let left = kron(&DMatrix::identity(p, p), &g_inv);
    let phi = kron(sigma_theta, &g_inv) + &left * a_r * &left;
    Ok(linalg::symmetrize(&phi))
}

fn require_stable(spec: &VarSpec) -> Result<()> {
    let s = is_stable(spec)?;
    if !s.stable {
        return Err(Error::Unstable {
            radius: s.spectral_radius,
        });
    }
    Ok(())
}

/// Exact asymptotic covariance of the corrected estimator at known parameters, any order.
pub fn phi_exact(spec: &VarSpec, err: &ErrorSpec) -> Result<PhiMatrix> {
    err.check_dim(spec.p())?;
    require_stable(spec)?;
    let asm = ArAssembly::new(spec, err)?;
    let a_r = asm.assemble();
    let gamma0 = asm.acov.big_gamma(0);
    let phi = sandwich(&gamma0, &asm.sigma_theta, &a_r, spec.p())?;
    Ok(PhiMatrix {
        phi,
        source: PhiSource::Exact,
        sigma_theta: asm.sigma_theta,
        a_r,
        gamma0,
    })
}

/// `A_1` for a VAR(1), written out directly:
/// `Sigma_theta (x) Sigma_e + [(B Sigma_e) (x) (Sigma_e B')] K - (B Sigma_e) (x) (B gamma(0))
///  - (Sigma_e B') (x) (gamma(0) B')`, where `[.] K` is [`kron_commuted`].
pub fn a1_var1(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
    if spec.r() != 1 {
        return Err(Error::InvalidArgument("a1_var1 requires r = 1".into()));
    }
    err.check_dim(spec.p())?;
    require_stable(spec)?;
    let b = spec.block(1);
    let se = err.matrix();
    let g0 = stationary_autocov(spec, 1)?.gamma(0);
    let st = sigma_theta(spec, err)?;
    let b_se = b * se;
    let se_bt = se * b.transpose();
    let a1 = kron(&st, se) + kron_commuted(&b_se, &se_bt)
        - kron(&b_se, &(b * &g0))
        - kron(&se_bt, &(&g0 * b.transpose()));
    Ok(linalg::symmetrize(&a1))
}

/// VAR(1) covariance through [`a1_var1`]; must agree with [`phi_exact`] for `r = 1`.
pub fn phi_var1(spec: &VarSpec, err: &ErrorSpec) -> Result<PhiMatrix> {
    let a_r = a1_var1(spec, err)?;
    let gamma0 = stationary_autocov(spec, 1)?.gamma(0);
    let st = sigma_theta(spec, err)?;
    let phi = sandwich(&gamma0, &st, &a_r, spec.p())?;
    Ok(PhiMatrix {
        phi,
        source: PhiSource::Exact,
        sigma_theta: st,
        a_r,
        gamma0,
    })
}

/// The covariance formulas in their originally published arrangement.
///
/// Kept for comparison only. They coincide with [`phi_exact`] when `p = r = 1` or
/// `Sigma_e = 0`, and otherwise omit the cross-pairing and overlapping-error terms.
/// The published VAR(1) `A_1` pairs `B Sigma_e` with `gamma(0) B'` where the general
/// display pairs it with `Gamma_1(1) = B gamma(0)`.
pub mod printed {
    use super::*;

    /// `A_r` as published.
    pub fn a_r(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
        err.check_dim(spec.p())?;
        require_stable(spec)?;
        let r = spec.r();
        let b = spec.coefficients();
        let se = err.matrix();
        let stacked = err.stacked(r);
        let st = sigma_theta(spec, err)?;
        let acov = stationary_autocov(spec, 2 * r)?;
        let mut a = kron(&st, &stacked) + kron(&b.transpose(), &(se * &b * &stacked));
        for h in 1..=r {
            let bh = spec.block(h);
            a -= kron(&(bh * se), &acov.big_gamma(h as isize));
            a -= kron(&(se * bh.transpose()), &acov.big_gamma(-(h as isize)));
        }
        for h in (1 - r as isize)..=(r as isize - 1) {
            let inner = &b * kron(&shift_matrix(-h, r), se) * b.transpose();
            a += kron(&inner, &acov.big_gamma(h));
        }
        Ok(a)
    }

    /// `A_1` as published for the VAR(1) special case.
    pub fn a1(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
        if spec.r() != 1 {
            return Err(Error::InvalidArgument("a1 requires r = 1".into()));
        }
        err.check_dim(spec.p())?;
        require_stable(spec)?;
        let b = spec.block(1);
        let se = err.matrix();
        let g0 = stationary_autocov(spec, 1)?.gamma(0);
        let st = sigma_theta(spec, err)?;
        Ok(kron(&st, se) + kron(&b.transpose(), &(se * b * se))
            - (kron(&(b * se), &(&g0 * b.transpose())) + kron(&(se * b.transpose()), &(b * &g0))))
    }

    pub fn phi(spec: &VarSpec, err: &ErrorSpec) -> Result<PhiMatrix> {
        let a_r = a_r(spec, err)?;
        let gamma0 = stationary_autocov(spec, spec.r())?.big_gamma(0);
        let st = sigma_theta(spec, err)?;
        let g_inv = linalg::spd_inverse(&gamma0)?.0;
        let left = kron(&DMatrix::identity(spec.p(), spec.p()), &g_inv);
        // Not symmetrized: the published A_r is not symmetric in general.
        let phi = kron(&st, &g_inv) + &left * &a_r * &left;
        Ok(PhiMatrix {
            phi,
            source: PhiSource::Exact,
            sigma_theta: st,
            a_r,
            gamma0,
        })
    }
}

/// Plug-in covariance: [`phi_exact`] evaluated at `(B_hat, Sigma_hat+)`, with
/// `Sigma_hat+` the PSD clip of the symmetrized `Sigma_hat`. A usual fit is only
/// accepted with `Sigma_e = 0`, the noise level it assumes.
pub fn phi_plugin(fit: &FitResult, err: &ErrorSpec) -> Result<PhiMatrix> {
    if fit.kind == EstimatorKind::Usual && !err.is_zero() {
        return Err(Error::InvalidArgument(
            "a usual fit ignores measurement error; pair it with a zero Sigma_e".into(),
        ));
    }
    err.check_dim(fit.p)?;
    let sigma = linalg::symmetrize(&fit.sigma_hat);
    let eig = SymmetricEigen::new(sigma.clone());
    let trace = sigma.trace();
    let lo = eig.eigenvalues.min();
    if lo < -0.05 * trace.abs() {
        return Err(Error::IndefiniteSigma {
            min_eigenvalue: lo,
            trace,
        });
    }
    let clipped = if lo < 0.0 {
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
        linalg::symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
    } else {
        sigma
    };
    let spec = VarSpec::from_stacked(fit.a_hat.clone(), &fit.b_hat, clipped)?;
    let s = is_stable(&spec)?;
    if !s.stable {
        return Err(Error::NonstationaryFit {
            radius: s.spectral_radius,
        });
    }
    let mut phi = phi_exact(&spec, err)?;
    phi.source = PhiSource::Plugin;
    Ok(phi)
}

/// Model-based covariance for either estimator: the corrected fit with the known
/// `Sigma_e`, the usual fit under its own no-noise assumption.
pub fn phi_for_fit(fit: &FitResult, err: &ErrorSpec) -> Result<PhiMatrix> {
    match fit.kind {
        EstimatorKind::Corrected => phi_plugin(fit, err),
        EstimatorKind::Usual => phi_plugin(fit, &ErrorSpec::zero(fit.p)),
    }
}

/// `Sigma_hat (x) S_Z*^{-1}` from a fit's own moments.
pub fn phi_classical(fit: &FitResult) -> Result<PhiMatrix> {
    let (g_inv, _) = linalg::spd_inverse(&fit.s_zstar)?;
    let sigma = linalg::symmetrize(&fit.sigma_hat);
    let pr = fit.p * fit.r;
    Ok(PhiMatrix {
        phi: kron(&sigma, &g_inv),
        source: PhiSource::Classical,
        a_r: DMatrix::zeros(fit.p * pr, fit.p * pr),
        sigma_theta: sigma,
        gamma0: fit.s_zstar.clone(),
    })
}

/// Linear hypothesis `C vec(B') = d`.
#[derive(Debug, Clone, Serialize)]
pub struct Contrast {
    #[serde(serialize_with = "ser_matrix")]
    pub c: DMatrix<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub d: DVector<f64>,
    pub label: String,
}

fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

fn ser_vector<S: serde::Serializer>(
    v: &DVector<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

impl Contrast {
    /// Validates full row rank (smallest singular value above `1e-10` of the largest).
    pub fn new(c: DMatrix<f64>, d: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        if c.nrows() == 0 {
            return Err(Error::DegenerateContrast("contrast has no rows".into()));
        }
        if d.len() != c.nrows() {
            return Err(Error::Dimension(format!(
                "C has {} rows but d has length {}",
                c.nrows(),
                d.len()
            )));
        }
        if c.nrows() > c.ncols() {
            return Err(Error::DegenerateContrast(format!(
                "{} restrictions on {} coefficients",
                c.nrows(),
                c.ncols()
            )));
        }
        let sv = c.clone().singular_values();
        if !(sv.min() > 1e-10 * sv.max()) {
            return Err(Error::DegenerateContrast(format!(
                "C is rank deficient (singular values {:?})",
                sv.as_slice()
            )));
        }
        Ok(Self {
            c,
            d,
            label: label.into(),
        })
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Rows of several contrasts stacked into one joint hypothesis.
    pub fn joint(parts: &[Contrast], label: impl Into<String>) -> Result<Self> {
        let cols = parts.first().map(|c| c.c.ncols()).unwrap_or(0);
        let rows: usize = parts.iter().map(|c| c.m()).sum();
        let mut c = DMatrix::zeros(rows, cols);
        let mut d = DVector::zeros(rows);
        let mut at = 0;
        for part in parts {
            if part.c.ncols() != cols {
                return Err(Error::Dimension("contrasts have different widths".into()));
            }
            linalg::set_block(&mut c, at, 0, &part.c);
            d.rows_mut(at, part.m()).copy_from(&part.d);
            at += part.m();
        }
        Self::new(c, d, label)
    }

    /// Transform `(C, d) -> (T C, T d)`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        Self::new(t * &self.c, t * &self.d, self.label.clone())
    }
}

/// Single-coefficient hypothesis `B_lag[equation, column] = 0` (1-based indices).
pub fn coefficient_contrast(
    p: usize,
    r: usize,
    equation: usize,
    lag: usize,
    column: usize,
) -> Result<Contrast> {
    let idx = vec_bt_index(p, r, equation, lag, column)?;
    let mut c = DMatrix::zeros(1, p * p * r);
    c[(0, idx)] = 1.0;
    Contrast::new(
        c,
        DVector::zeros(1),
        format!("b{equation}{column}_lag{lag} = 0"),
    )
}

/// Series `source` does not Granger-cause series `target`: all `r` lag coefficients of
/// `source` in the `target` equation are zero. Indices are 1-based.
pub fn granger_contrast(p: usize, r: usize, source: usize, target: usize) -> Result<Contrast> {
    if source == target {
        return Err(Error::InvalidArgument(
            "source and target coincide; use an explicit contrast for own-lag tests".into(),
        ));
    }
    let mut c = DMatrix::zeros(r, p * p * r);
    for lag in 1..=r {
        c[(lag - 1, vec_bt_index(p, r, target, lag, source)?)] = 1.0;
    }
    Contrast::new(c, DVector::zeros(r), format!("y{source} -> y{target}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub contrast: Contrast,
    pub n: usize,
}

/// `n (C b - d)' [C Phi C']^{-1} (C b - d)` with a `chi^2(m)` p-value.
pub fn wald_test(fit: &FitResult, phi: &PhiMatrix, contrast: &Contrast) -> Result<WaldResult> {
    let beta = fit.coefficient_vector();
    wald_statistic(&beta, fit.n, phi, contrast)
}

/// [`wald_test`] on a bare coefficient vector.
pub fn wald_statistic(
    beta: &DVector<f64>,
    n: usize,
    phi: &PhiMatrix,
    contrast: &Contrast,
) -> Result<WaldResult> {
    if contrast.c.ncols() != beta.len() || phi.dim() != beta.len() {
        return Err(Error::Dimension(format!(
            "contrast width {}, Phi dimension {}, coefficient count {}",
            contrast.c.ncols(),
            phi.dim(),
            beta.len()
        )));
    }
    let diff = &contrast.c * beta - &contrast.d;
    let middle = &contrast.c * &phi.phi * contrast.c.transpose();
    let (inv, _) = linalg::spd_inverse(&middle)
        .map_err(|e| Error::DegenerateContrast(format!("C Phi C' is not invertible: {e}")))?;
    let statistic = (n as f64 * (diff.transpose() * inv * &diff)[(0, 0)]).max(0.0);
    let df = contrast.m();
    Ok(WaldResult {
        statistic,
        df,
        p_value: chisq_upper_tail(statistic, df),
        contrast: contrast.clone(),
        n,
    })
}

/// Per-coefficient estimate, standard error and p-value for `H0: coefficient = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub equation: usize,
    pub lag: usize,
    pub column: usize,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
}

pub fn coefficient_table(fit: &FitResult, phi: &PhiMatrix) -> Result<Vec<CoefficientRow>> {
    let (p, r) = (fit.p, fit.r);
    let beta = fit.coefficient_vector();
    let se = phi.standard_errors(fit.n);
    let mut rows = Vec::with_capacity(beta.len());
    for equation in 1..=p {
        for lag in 1..=r {
            for column in 1..=p {
                let idx = vec_bt_index(p, r, equation, lag, column)?;
                let c = coefficient_contrast(p, r, equation, lag, column)?;
                let w = wald_statistic(&beta, fit.n, phi, &c)?;
                let name = if r == 1 {
                    format!("b{equation}{column}")
                } else {
                    format!("b{equation}{column}_lag{lag}")
                };
                rows.push(CoefficientRow {
                    name,
                    equation,
                    lag,
                    column,
                    estimate: beta[idx],
                    se: se[idx],
                    p_value: w.p_value,
                });
            }
        }
    }
    Ok(rows)
}

/// Joint `r`-lag Granger test for one ordered pair of series.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeTest {
    pub source: usize,
    pub target: usize,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub significant: bool,
}

/// Granger tests for every ordered pair `source -> target`, `source != target`.
pub fn edge_table(fit: &FitResult, phi: &PhiMatrix, alpha: f64) -> Result<Vec<EdgeTest>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }
    let mut out = Vec::with_capacity(fit.p * (fit.p - 1));
    for source in 1..=fit.p {
        for target in 1..=fit.p {
            if source == target {
                continue;
            }
            let w = wald_test(fit, phi, &granger_contrast(fit.p, fit.r, source, target)?)?;
            out.push(EdgeTest {
                source,
                target,
                statistic: w.statistic,
                df: w.df,
                p_value: w.p_value,
                significant: w.p_value < alpha,
            });
        }
    }
    Ok(out)
}
