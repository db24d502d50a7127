//! Brute-force checks of the corrected estimator's asymptotics.
//!
//! The estimator's sampling error is driven by the mean of
//! `W_t = theta_t (x) X_t + psi`, where `theta_t = q_t + e_t - B e*_{t-1}` and
//! `X_t = z*_{t-1} - mu* + e*_{t-1}`. This module builds `W_t` from raw simulation
//! draws and computes its long-run covariance `T_r` lag by lag, from second moments
//! of linear forms in the underlying shocks. The Gaussian fourth-moment identity turns
//! those into `E[W_t W_{t-h}']`. None of this goes through [`crate::inference`]'s
//! closed-form assembly; [`sandwich_check`] compares the two.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::{phi_exact, shift_matrix};
use crate::linalg::{self, kron, kron_commuted};
use crate::tsmodel::{
    companion_matrix, is_stable, stacked_mean, stationary_autocov, AutocovarianceSet, ErrorSpec,
    TimeSeriesMatrix, VarSpec,
};

/// `W_t` rows for one simulated path.
#[derive(Debug, Clone)]
pub struct WSample {
    /// `n x p^2 r`, one `W_t` per row.
    pub w: DMatrix<f64>,
    /// `[I_p (x) (I_r (x) Sigma_e)] vec(B')`.
    pub psi: DVector<f64>,
}

impl WSample {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.w.row_mean().transpose()
    }

    /// Batch-means standard error of each column mean.
    pub fn mean_standard_errors(&self, batches: usize) -> DVector<f64> {
        DVector::from_fn(self.w.ncols(), |j, _| {
            let col: Vec<f64> = self.w.column(j).iter().copied().collect();
            batch_means_se(&col, batches)
        })
    }

    /// `n Cov(W_bar)` estimated from one path: `sum_{|h| <= max_lag}` of the lag-`h`
    /// sample autocovariances (the mean is known to be zero and is not subtracted).
    pub fn long_run_covariance(&self, max_lag: usize) -> DMatrix<f64> {
        let mut s = self.autocov(0);
        for h in 1..=max_lag {
            let g = self.autocov(h);
            s += &g + g.transpose();
        }
        s
    }

    /// `(1/n) sum_t W_t W_{t-h}'` for `h >= 0`.
    pub fn autocov(&self, h: usize) -> DMatrix<f64> {
        let n = self.n();
        let d = self.w.ncols();
        let mut g = DMatrix::zeros(d, d);
        for t in h..n {
            let a = self.w.row(t);
            let b = self.w.row(t - h);
            g += a.transpose() * b;
        }
        g / n as f64
    }

    /// Batch-means standard errors for the entries of [`WSample::autocov`] at lag `h`.
    pub fn autocov_standard_errors(&self, h: usize, batches: usize) -> DMatrix<f64> {
        let n = self.n();
        let d = self.w.ncols();
        DMatrix::from_fn(d, d, |i, j| {
            let prod: Vec<f64> = (h..n)
                .map(|t| self.w[(t, i)] * self.w[(t - h, j)])
                .collect();
            batch_means_se(&prod, batches)
        })
    }
}

/// Standard error of a mean from `batches` contiguous batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let len = x.len() / batches.max(1);
    if batches < 2 || len == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// `[I_p (x) (I_r (x) Sigma_e)] vec(B')`.
pub fn psi_vector(spec: &VarSpec, err: &ErrorSpec) -> DVector<f64> {
    let p = spec.p();
    let lifted = kron(&DMatrix::identity(p, p), &err.stacked(spec.r()));
    lifted * linalg::vec_transpose(&spec.coefficients())
}

/// `W_t` for `t = r, ..., n-1` from one path's latent series, measurement errors and
/// innovations (`innovations` row `t` is the shock entering `z_t`).
///
/// Each row is `theta_t (x) X_t + psi`; since `E[theta_t (x) X_t] = -psi`, the rows
/// have mean zero. Centering uses the exact stationary mean.
pub fn build_w(
    latent: &TimeSeriesMatrix,
    errors: &DMatrix<f64>,
    innovations: &DMatrix<f64>,
    spec: &VarSpec,
    err: &ErrorSpec,
) -> Result<WSample> {
    let (p, r) = (spec.p(), spec.r());
    err.check_dim(p)?;
    let n = latent.n();
    if latent.p() != p || errors.shape() != (n, p) || innovations.shape() != (n, p) {
        return Err(Error::Dimension(format!(
            "latent {}x{}, errors {}x{}, innovations {}x{}; expected all n x {p}",
            n,
            latent.p(),
            errors.nrows(),
            errors.ncols(),
            innovations.nrows(),
            innovations.ncols()
        )));
    }
    if n <= r {
        return Err(Error::InsufficientData {
            needed: r + 1,
            got: n,
        });
    }
    let mu = stacked_mean(spec)?;
    let psi = psi_vector(spec, err);
    let z = latent.values();
    let pr = p * r;
    let mut w = DMatrix::zeros(n - r, p * pr);
    for t in r..n {
        let mut theta = (innovations.row(t) + errors.row(t)).transpose();
        for j in 1..=r {
            theta -= spec.block(j) * errors.row(t - j).transpose();
        }
        let x = DVector::from_fn(pr, |s, _| {
            let (lag, col) = (s / p, s % p);
            z[(t - 1 - lag, col)] - mu[s] + errors[(t - 1 - lag, col)]
        });
        let row = theta.kronecker(&x) + &psi;
        w.row_mut(t - r).copy_from(&row.transpose());
    }
    Ok(WSample { w, psi })
}

/// A vector-valued linear combination of shocks at time `t`:
/// `sum_m E_m e_{t-m} + sum_m Q_m q_{t-m} + sum_m G_m (z_{t-m} - mu)`.
struct LinearForm {
    e: Vec<(usize, DMatrix<f64>)>,
    q: Vec<(usize, DMatrix<f64>)>,
    z: Vec<(usize, DMatrix<f64>)>,
}

/// Second-moment calculator for linear forms of the latent process and its shocks.
struct Moments {
    p: usize,
    r: usize,
    sigma: DMatrix<f64>,
    sigma_e: DMatrix<f64>,
    acov: AutocovarianceSet,
    /// Impulse responses: `z_t - mu = sum_{j>=0} ma[j] q_{t-j}`.
    ma: Vec<DMatrix<f64>>,
}

impl Moments {
    fn new(spec: &VarSpec, err: &ErrorSpec) -> Result<Self> {
        let r = spec.r();
        let p = spec.p();
        let reach = 3 * r + 2;
        let comp = companion_matrix(spec);
        let mut power = DMatrix::identity(p * r, p * r);
        let mut ma = Vec::with_capacity(reach + 1);
        for _ in 0..=reach {
            ma.push(linalg::block(&power, 0, 0, p, p));
            power = &comp * power;
        }
        Ok(Self {
            p,
            r,
            sigma: spec.sigma().clone(),
            sigma_e: err.matrix().clone(),
            acov: stationary_autocov(spec, reach)?,
            ma,
        })
    }

    /// `E[(z_s - mu) q_u']` for `s - u = k`.
    fn z_q(&self, k: isize) -> DMatrix<f64> {
        if k < 0 {
            DMatrix::zeros(self.p, self.p)
        } else {
            &self.ma[k as usize] * &self.sigma
        }
    }

    /// `E[U_t V_{t-h}']`.
    fn cross(&self, u: &LinearForm, v: &LinearForm, h: isize) -> DMatrix<f64> {
        let rows =
            u.e.first()
                .or(u.q.first())
                .or(u.z.first())
                .map_or(0, |x| x.1.nrows());
        let cols =
            v.e.first()
                .or(v.q.first())
                .or(v.z.first())
                .map_or(0, |x| x.1.nrows());
        let mut out = DMatrix::zeros(rows, cols);
        // u's shock at t - m meets v's shock at t - h - m2 when m == h + m2.
        for (m, a) in &u.e {
            for (m2, b) in &v.e {
                if *m as isize == h + *m2 as isize {
                    out += a * &self.sigma_e * b.transpose();
                }
            }
        }
        for (m, a) in &u.q {
            for (m2, b) in &v.q {
                if *m as isize == h + *m2 as isize {
                    out += a * &self.sigma * b.transpose();
                }
            }
            for (m2, b) in &v.z {
                // E[q_{t-m} (z_{t-h-m2} - mu)'] = E[(z_s - mu) q_u']' with s - u = m - h - m2.
                let k = *m as isize - h - *m2 as isize;
                out += a * self.z_q(k).transpose() * b.transpose();
            }
        }
        for (m, a) in &u.z {
            for (m2, b) in &v.z {
                let lag = h + *m2 as isize - *m as isize;
                out += a * self.acov.gamma(lag) * b.transpose();
            }
            for (m2, b) in &v.q {
                let k = h + *m2 as isize - *m as isize;
                out += a * self.z_q(k) * b.transpose();
            }
        }
        out
    }

    fn disturbance(&self, b: &DMatrix<f64>) -> LinearForm {
        let p = self.p;
        let mut e = vec![(0, DMatrix::identity(p, p))];
        for j in 1..=self.r {
            e.push((j, -linalg::block(b, 0, (j - 1) * p, p, p)));
        }
        LinearForm {
            e,
            q: vec![(0, DMatrix::identity(p, p))],
            z: vec![],
        }
    }

    fn regressor(&self) -> LinearForm {
        let (p, r) = (self.p, self.r);
        let sel = |i: usize| {
            let mut s = DMatrix::zeros(p * r, p);
            linalg::set_block(&mut s, i * p, 0, &DMatrix::identity(p, p));
            s
        };
        LinearForm {
            e: (0..r).map(|i| (i + 1, sel(i))).collect(),
            q: vec![],
            z: (0..r).map(|i| (i + 1, sel(i))).collect(),
        }
    }
}

/// `E[W_t W_{t-h}']` for any integer `h`, via the Gaussian fourth-moment identity.
pub struct LagMoments {
    moments: Moments,
    theta: LinearForm,
    x: LinearForm,
}

impl LagMoments {
    pub fn new(spec: &VarSpec, err: &ErrorSpec) -> Result<Self> {
        err.check_dim(spec.p())?;
        let s = is_stable(spec)?;
        if !s.stable {
            return Err(Error::Unstable {
                radius: s.spectral_radius,
            });
        }
        let moments = Moments::new(spec, err)?;
        let b = spec.coefficients();
        Ok(Self {
            theta: moments.disturbance(&b),
            x: moments.regressor(),
            moments,
        })
    }

    pub fn r(&self) -> usize {
        self.moments.r
    }

    /// Largest `|h|` that [`LagMoments::at`] can evaluate.
    pub fn max_lag(&self) -> usize {
        2 * self.r() + 2
    }

    /// `E[W_t W_{t-h}']`, for `|h| <= max_lag()`.
    pub fn at(&self, h: isize) -> DMatrix<f64> {
        assert!(
            h.unsigned_abs() <= self.max_lag(),
            "lag {h} beyond {}",
            self.max_lag()
        );
        let m = &self.moments;
        let tt = m.cross(&self.theta, &self.theta, h);
        let xx = m.cross(&self.x, &self.x, h);
        let tx = m.cross(&self.theta, &self.x, h);
        let xt = m.cross(&self.x, &self.theta, h);
        kron(&tt, &xx) + kron_commuted(&tx, &xt)
    }

    /// `h = 0`.
    pub fn zero_lag(&self) -> DMatrix<f64> {
        self.at(0)
    }

    /// `1 <= |h| <= r - 1`, where the stacked errors of `t` and `t - h` overlap.
    pub fn interior_lag(&self, h: isize) -> Result<DMatrix<f64>> {
        let r = self.r() as isize;
        if h == 0 || h.abs() >= r {
            return Err(Error::InvalidArgument(format!(
                "interior lag needs 1 <= |h| < {r}, got {h}"
            )));
        }
        Ok(self.at(h))
    }

    /// `|h| = r`.
    pub fn boundary_lag(&self, h: isize) -> Result<DMatrix<f64>> {
        if h.unsigned_abs() != self.r() {
            return Err(Error::InvalidArgument(format!(
                "boundary lag needs |h| = {}, got {h}",
                self.r()
            )));
        }
        Ok(self.at(h))
    }

    /// `|h| > r`: the shock sets of `W_t` and `W_{t-h}` are disjoint apart from the
    /// latent state, whose contribution cancels, so this is zero.
    pub fn beyond_lag(&self, h: isize) -> Result<DMatrix<f64>> {
        if h.unsigned_abs() <= self.r() || h.unsigned_abs() > self.max_lag() {
            return Err(Error::InvalidArgument(format!(
                "beyond lag needs {} < |h| <= {}, got {h}",
                self.r(),
                self.max_lag()
            )));
        }
        Ok(self.at(h))
    }
}

/// `T_r = sum_{h=-r}^{r} E[W_t W_{t-h}']`.
pub fn t_r_closed_form(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
    let lm = LagMoments::new(spec, err)?;
    let r = lm.r() as isize;
    let mut t = lm.zero_lag();
    for h in 1..=r {
        let (pos, neg) = if h < r {
            (lm.interior_lag(h)?, lm.interior_lag(-h)?)
        } else {
            (lm.boundary_lag(h)?, lm.boundary_lag(-h)?)
        };
        t += pos + neg;
    }
    Ok(t)
}

/// Max relative discrepancy between `(I (x) Gamma^{-1}) T_r (I (x) Gamma^{-1})` and
/// [`phi_exact`].
pub fn sandwich_check(spec: &VarSpec, err: &ErrorSpec) -> Result<f64> {
    let t = t_r_closed_form(spec, err)?;
    let g0 = stationary_autocov(spec, spec.r())?.big_gamma(0);
    let g_inv = linalg::spd_inverse(&g0)?.0;
    let left = kron(&DMatrix::identity(spec.p(), spec.p()), &g_inv);
    let phi = &left * t * &left;
    Ok(linalg::rel_diff(&phi, &phi_exact(spec, err)?.phi))
}

/// `vec(B_hat' - B') - (I (x) Gamma_r(0)^{-1}) W_bar`, the remainder of the linearization.
pub fn linearization_remainder(
    coefficient_error: &DVector<f64>,
    w: &WSample,
    spec: &VarSpec,
) -> Result<DVector<f64>> {
    let g0 = stationary_autocov(spec, spec.r())?.big_gamma(0);
    let g_inv = linalg::spd_inverse(&g0)?.0;
    let left = kron(&DMatrix::identity(spec.p(), spec.p()), &g_inv);
    if coefficient_error.len() != left.nrows() {
        return Err(Error::Dimension("coefficient error length mismatch".into()));
    }
    Ok(coefficient_error - left * w.mean())
}

/// The lag-case expectations in their originally published form, kept for comparison
/// with [`LagMoments`]. The boundary case agrees exactly; the zero and interior cases
/// leave out the overlapping-error and cross-pairing contributions.
pub mod printed {
    use super::*;

    fn parts(
        spec: &VarSpec,
        err: &ErrorSpec,
    ) -> Result<(DMatrix<f64>, AutocovarianceSet, DMatrix<f64>)> {
        let theta = crate::inference::sigma_theta(spec, err)?;
        Ok((
            spec.coefficients(),
            stationary_autocov(spec, 2 * spec.r())?,
            theta,
        ))
    }

    pub fn zero_lag(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
        let (b, acov, st) = parts(spec, err)?;
        let stacked = err.stacked(spec.r());
        Ok(kron(&st, &acov.big_gamma(0))
            + kron(&st, &stacked)
            + kron(&b.transpose(), &(err.matrix() * &b * &stacked)))
    }

    /// `1 <= |h| <= r - 1`.
    pub fn interior_lag(spec: &VarSpec, err: &ErrorSpec, h: isize) -> Result<DMatrix<f64>> {
        let (b, acov, _) = parts(spec, err)?;
        let se = err.matrix();
        let bh = spec.block(h.unsigned_abs());
        let overlap = &b * kron(&shift_matrix(-h, spec.r()), se) * b.transpose();
        let own = if h > 0 { bh * se } else { se * bh.transpose() };
        Ok(kron(&(overlap - own), &acov.big_gamma(h)))
    }

    /// `|h| = r`.
    pub fn boundary_lag(spec: &VarSpec, err: &ErrorSpec, h: isize) -> Result<DMatrix<f64>> {
        let (_, acov, _) = parts(spec, err)?;
        let se = err.matrix();
        let br = spec.block(spec.r());
        let own = if h > 0 { br * se } else { se * br.transpose() };
        Ok(-kron(&own, &acov.big_gamma(h)))
    }

    pub fn t_r(spec: &VarSpec, err: &ErrorSpec) -> Result<DMatrix<f64>> {
        let r = spec.r() as isize;
        let mut t = zero_lag(spec, err)?;
        for h in 1..r {
            t += interior_lag(spec, err, h)? + interior_lag(spec, err, -h)?;
        }
        t += boundary_lag(spec, err, r)? + boundary_lag(spec, err, -r)?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(r: usize) -> VarSpec {
        let blocks = (0..r)
            .map(|j| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.4 / (j + 1) as f64, 0.15, -0.2, 0.3 / (j + 1) as f64],
                )
            })
            .collect();
        VarSpec::new(
            DVector::from_vec(vec![1.0, -0.5]),
            blocks,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]),
        )
        .unwrap()
    }

    fn err() -> ErrorSpec {
        ErrorSpec::new(DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.5])).unwrap()
    }

    #[test]
    fn closed_form_matches_inference_assembly() {
        for r in 1..=3 {
            assert!(sandwich_check(&spec(r), &err()).unwrap() < 1e-10, "r = {r}");
        }
    }

    #[test]
    fn lag_moments_vanish_beyond_order() {
        for r in 1..=3 {
            let lm = LagMoments::new(&spec(r), &err()).unwrap();
            for h in (r as isize + 1)..=(r as isize + 3) {
                assert!(lm.beyond_lag(h).unwrap().amax() < 1e-12);
                assert!(lm.beyond_lag(-h).unwrap().amax() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_lags_are_transposes() {
        let lm = LagMoments::new(&spec(3), &err()).unwrap();
        for h in 0..=3 {
            assert!((lm.at(-h) - lm.at(h).transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn published_boundary_case_is_exact() {
        for r in 1..=3 {
            let (s, e) = (spec(r), err());
            let lm = LagMoments::new(&s, &e).unwrap();
            let ri = r as isize;
            for h in [ri, -ri] {
                let d = linalg::rel_diff(
                    &printed::boundary_lag(&s, &e, h).unwrap(),
                    &lm.boundary_lag(h).unwrap(),
                );
                assert!(d < 1e-10, "r = {r}, h = {h}: {d}");
            }
        }
    }

    #[test]
    fn published_interior_and_zero_cases_differ_with_noise() {
        let (s, e) = (spec(2), err());
        let lm = LagMoments::new(&s, &e).unwrap();
        assert!(
            linalg::rel_diff(
                &printed::interior_lag(&s, &e, 1).unwrap(),
                &lm.interior_lag(1).unwrap()
            ) > 1e-3
        );
        assert!(linalg::rel_diff(&printed::zero_lag(&s, &e).unwrap(), &lm.zero_lag()) > 1e-3);
        let z = ErrorSpec::zero(2);
        let lz = LagMoments::new(&s, &z).unwrap();
        assert!(
            linalg::rel_diff(
                &printed::interior_lag(&s, &z, 1).unwrap(),
                &lz.interior_lag(1).unwrap()
            ) < 1e-12
        );
        assert!(
            linalg::rel_diff(
                &printed::t_r(&s, &z).unwrap(),
                &t_r_closed_form(&s, &z).unwrap()
            ) < 1e-12
        );
    }

    #[test]
    fn zero_noise_t_r_is_sigma_kron_gamma() {
        let s = spec(2);
        let t = t_r_closed_form(&s, &ErrorSpec::zero(2)).unwrap();
        let g = stationary_autocov(&s, 2).unwrap().big_gamma(0);
        assert!(linalg::rel_diff(&t, &kron(s.sigma(), &g)) < 1e-12);
    }

    #[test]
    fn scalar_case_recovers_hand_value() {
        let s = VarSpec::new(
            DVector::zeros(1),
            vec![DMatrix::from_element(1, 1, 0.5)],
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let e = ErrorSpec::isotropic(1, 1.0).unwrap();
        let t = t_r_closed_form(&s, &e).unwrap()[(0, 0)];
        let g0 = 4.0 / 3.0;
        assert!((t / (g0 * g0) - 2.71875).abs() < 1e-12);
        assert!((printed::t_r(&s, &e).unwrap()[(0, 0)] - t).abs() < 1e-12);
    }

    #[test]
    fn psi_and_w_reduce_without_noise() {
        let s = spec(1);
        let z = ErrorSpec::zero(2);
        assert_eq!(psi_vector(&s, &z), DVector::zeros(4));
        let path = crate::tsmodel::simulate_path(&s, &z, 50, 3, 100).unwrap();
        let w = build_w(&path.latent, &path.errors, &path.innovations, &s, &z).unwrap();
        let mu = stacked_mean(&s).unwrap();
        let t = 10;
        let x = path.latent.row(t - 1) - &mu;
        let q = path.innovations.row(t).transpose();
        let expected = q.kronecker(&x);
        assert!((w.w.row(t - 1).transpose() - expected).amax() < 1e-12);
    }

    #[test]
    fn stream_length_mismatch_is_rejected() {
        let s = spec(1);
        let e = err();
        let path = crate::tsmodel::simulate_path(&s, &e, 50, 3, 0).unwrap();
        let short = path.errors.rows(0, 40).into_owned();
        assert!(matches!(
            build_w(&path.latent, &short, &path.innovations, &s, &e),
            Err(Error::Dimension(_))
        ));
    }
}
