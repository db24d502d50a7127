//! The latent VAR(r) model, its observation-noise companion, stationary moments and
//! a seeded simulator for the observed series.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Spectral radii at or above `1 - STABILITY_MARGIN` count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// Companion systems up to this size are solved by the Kronecker linear system;
/// larger ones use the doubling iteration.
const KRONECKER_LYAPUNOV_MAX: usize = 12;

/// Latent VAR(r): `z_t = a + B_1 z_{t-1} + ... + B_r z_{t-r} + q_t`, `q_t ~ (0, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    a: DVector<f64>,
    blocks: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
}

impl VarSpec {
    pub fn new(a: DVector<f64>, blocks: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = a.len();
        if p == 0 {
            return Err(Error::Dimension("p must be at least 1".into()));
        }
        if blocks.is_empty() {
            return Err(Error::Dimension("order r must be at least 1".into()));
        }
        for (j, b) in blocks.iter().enumerate() {
            if b.shape() != (p, p) {
                return Err(Error::Dimension(format!(
                    "B_{} is {}x{}, expected {p}x{p}",
                    j + 1,
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        check_covariance(&sigma, p, "Sigma")?;
        Ok(Self { a, blocks, sigma })
    }

    /// Build from the stacked `p x pr` coefficient matrix `(B_1 ... B_r)`.
    pub fn from_stacked(a: DVector<f64>, b: &DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = a.len();
        if p == 0 || b.nrows() != p || !b.ncols().is_multiple_of(p) || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "stacked coefficients are {}x{}, expected {p}x(p*r)",
                b.nrows(),
                b.ncols()
            )));
        }
        let r = b.ncols() / p;
        let blocks = (0..r).map(|j| linalg::block(b, 0, j * p, p, p)).collect();
        Self::new(a, blocks, sigma)
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn intercept(&self) -> &DVector<f64> {
        &self.a
    }

    /// `B_j` for `j = 1..=r`.
    pub fn block(&self, j: usize) -> &DMatrix<f64> {
        &self.blocks[j - 1]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `B = (B_1 ... B_r)`, `p x pr`.
    pub fn coefficients(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut b = DMatrix::zeros(p, p * self.r());
        for (j, bj) in self.blocks.iter().enumerate() {
            linalg::set_block(&mut b, 0, j * p, bj);
        }
        b
    }
}

/// Known measurement-error covariance `Sigma_e` of `Z_t = z_t + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSpec {
    sigma_e: DMatrix<f64>,
}

impl ErrorSpec {
    pub fn new(sigma_e: DMatrix<f64>) -> Result<Self> {
        let p = sigma_e.nrows();
        check_covariance(&sigma_e, p, "Sigma_e")?;
        Ok(Self { sigma_e })
    }

    pub fn zero(p: usize) -> Self {
        Self {
            sigma_e: DMatrix::zeros(p, p),
        }
    }

    /// `variance * I_p`.
    pub fn isotropic(p: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p) * variance)
    }

    pub fn p(&self) -> usize {
        self.sigma_e.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma_e
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_e.iter().all(|v| *v == 0.0)
    }

    /// `I_r (x) Sigma_e`.
    pub fn stacked(&self, r: usize) -> DMatrix<f64> {
        linalg::kron(&DMatrix::identity(r, r), &self.sigma_e)
    }

    pub(crate) fn check_dim(&self, p: usize) -> Result<()> {
        if self.p() != p {
            return Err(Error::Dimension(format!(
                "Sigma_e is {0}x{0} but the model has p = {p}",
                self.p()
            )));
        }
        Ok(())
    }
}

fn check_covariance(m: &DMatrix<f64>, p: usize, what: &str) -> Result<()> {
    if m.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {p}x{p}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Covariance(format!("{what} has non-finite entries")));
    }
    if linalg::asymmetry(m) > 1e-12 {
        return Err(Error::Covariance(format!("{what} is not symmetric")));
    }
    let trace: f64 = m.diagonal().iter().map(|v| v.abs()).sum();
    let lo = linalg::min_eigenvalue(m);
    if lo < -1e-10 * trace.max(f64::MIN_POSITIVE) {
        return Err(Error::Covariance(format!(
            "{what} has negative eigenvalue {lo:.3e}"
        )));
    }
    Ok(())
}

/// Normalization constants recorded by studentization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// An `n x p` series, rows are time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
    normalized: bool,
    scales: Option<Vec<ColumnScale>>,
}

impl TimeSeriesMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if names.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let n = values.nrows();
            return Err(Error::Parse {
                row: i % n + 1,
                column: i / n + 1,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            values,
            names,
            normalized: false,
            scales: None,
        })
    }

    /// Columns named `y1..yp`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(values, names)
    }

    pub fn with_normalization(mut self, scales: Vec<ColumnScale>) -> Self {
        self.normalized = true;
        self.scales = Some(scales);
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scales(&self) -> Option<&[ColumnScale]> {
        self.scales.as_deref()
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }
}

/// Stationary autocovariances `gamma(h) = E[(z_t - mu)(z_{t-h} - mu)']` for `0 <= h <= hmax`.
#[derive(Debug, Clone)]
pub struct AutocovarianceSet {
    r: usize,
    gamma: Vec<DMatrix<f64>>,
}

impl AutocovarianceSet {
    pub fn hmax(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.gamma[0].nrows()
    }

    /// `gamma(h)`, with `gamma(-h) = gamma(h)'`.
    pub fn gamma(&self, h: isize) -> DMatrix<f64> {
        let k = h.unsigned_abs();
        assert!(k <= self.hmax(), "lag {h} beyond hmax {}", self.hmax());
        if h >= 0 {
            self.gamma[k].clone()
        } else {
            self.gamma[k].transpose()
        }
    }

    /// Block-Toeplitz `Gamma_r(h) = E[(z*_{t-1} - mu*)(z*_{t-h-1} - mu*)']`,
    /// block `(i, j)` equal to `gamma(h + j - i)`.
    pub fn big_gamma(&self, h: isize) -> DMatrix<f64> {
        let (p, r) = (self.p(), self.r);
        let mut out = DMatrix::zeros(p * r, p * r);
        for i in 0..r {
            for j in 0..r {
                let g = self.gamma(h + j as isize - i as isize);
                linalg::set_block(&mut out, i * p, j * p, &g);
            }
        }
        out
    }

    /// Largest relative Yule-Walker residual `|gamma(h) - sum_j B_j gamma(h-j)| / |gamma(h)|`
    /// over `1 <= h <= hmax`.
    pub fn yule_walker_residual(&self, spec: &VarSpec) -> f64 {
        let mut worst: f64 = 0.0;
        for h in 1..=self.hmax() as isize {
            let mut pred = DMatrix::zeros(self.p(), self.p());
            for (j, bj) in spec.blocks().iter().enumerate() {
                pred += bj * self.gamma(h - 1 - j as isize);
            }
            let g = self.gamma(h);
            let scale = g.amax().max(self.gamma[0].amax() * 1e-300).max(1e-300);
            worst = worst.max((g - pred).amax() / scale);
        }
        worst
    }
}

/// `pr x pr` companion matrix: `(B_1 ... B_r)` on top, identity blocks on the subdiagonal.
pub fn companion_matrix(spec: &VarSpec) -> DMatrix<f64> {
    let (p, r) = (spec.p(), spec.r());
    let mut a = DMatrix::zeros(p * r, p * r);
    linalg::set_block(&mut a, 0, 0, &spec.coefficients());
    if r > 1 {
        linalg::set_block(&mut a, p, 0, &DMatrix::identity(p * (r - 1), p * (r - 1)));
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stability {
    pub stable: bool,
    pub spectral_radius: f64,
}

pub fn is_stable(spec: &VarSpec) -> Result<Stability> {
    let radius = linalg::spectral_radius(&companion_matrix(spec))?;
    Ok(Stability {
        stable: radius < 1.0 - STABILITY_MARGIN,
        spectral_radius: radius,
    })
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

/// `mu_z = (I_p - sum_j B_j)^{-1} a`.
pub fn stationary_mean(spec: &VarSpec) -> Result<DVector<f64>> {
    require_stable(spec)?;
    let p = spec.p();
    let mut m = DMatrix::identity(p, p);
    for b in spec.blocks() {
        m -= b;
    }
    let rhs = DMatrix::from_column_slice(p, 1, spec.intercept().as_slice());
    let mu = linalg::general_solve(&m, &rhs)
        .map_err(|e| Error::NearUnitRoot(format!("I - sum B_j is singular: {e}")))?;
    Ok(mu.column(0).into_owned())
}

/// `mu_{z*} = 1_r (x) mu_z`.
pub fn stacked_mean(spec: &VarSpec) -> Result<DVector<f64>> {
    let mu = stationary_mean(spec)?;
    let r = spec.r();
    Ok(DVector::from_fn(mu.len() * r, |i, _| mu[i % mu.len()]))
}

/// Exact stationary autocovariances up to lag `hmax` (at least `r`).
pub fn stationary_autocov(spec: &VarSpec, hmax: usize) -> Result<AutocovarianceSet> {
    require_stable(spec)?;
    let (p, r) = (spec.p(), spec.r());
    let hmax = hmax.max(r);
    let companion = companion_matrix(spec);
    let mut sigma_star = DMatrix::zeros(p * r, p * r);
    linalg::set_block(&mut sigma_star, 0, 0, spec.sigma());
    let big0 = linalg::symmetrize(&solve_lyapunov(&companion, &sigma_star)?);

    let mut gamma: Vec<DMatrix<f64>> = (0..r)
        .map(|j| linalg::block(&big0, 0, j * p, p, p))
        .collect();
    gamma[0] = linalg::symmetrize(&gamma[0]);
    for h in r..=hmax {
        let mut g = DMatrix::zeros(p, p);
        for (j, bj) in spec.blocks().iter().enumerate() {
            let lag = h as isize - 1 - j as isize;
            let gj = if lag >= 0 {
                gamma[lag as usize].clone()
            } else {
                gamma[(-lag) as usize].transpose()
            };
            g += bj * gj;
        }
        gamma.push(g);
    }
    Ok(AutocovarianceSet { r, gamma })
}

/// Solves `X = A X A' + Q` for stable `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n <= KRONECKER_LYAPUNOV_MAX {
        let lhs = DMatrix::identity(n * n, n * n) - linalg::kron(a, a);
        let rhs = DMatrix::from_column_slice(n * n, 1, linalg::vec(q).as_slice());
        let x = linalg::general_solve(&lhs, &rhs)
            .map_err(|e| Error::NearUnitRoot(format!("I - A (x) A is singular: {e}")))?;
        return Ok(linalg::unvec(&x.column(0).into_owned(), n, n));
    }
    // Doubling: X_{k+1} = X_k + A_k X_k A_k', A_{k+1} = A_k^2.
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..200 {
        let step = &ak * &x * ak.transpose();
        x += &step;
        if step.amax() <= 1e-16 * x.amax() {
            return Ok(x);
        }
        ak = &ak * &ak;
    }
    Err(Error::NearUnitRoot(
        "doubling iteration for the stationary covariance did not converge".into(),
    ))
}

/// Output of [`simulate_path`], including the raw draws.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub latent: TimeSeriesMatrix,
    pub observed: TimeSeriesMatrix,
    /// `q_t`, `n x p`.
    pub innovations: DMatrix<f64>,
    /// `e_t`, `n x p`.
    pub errors: DMatrix<f64>,
    pub spectral_radius: f64,
}

/// Simulates `n` observations of `z_t` and `Z_t = z_t + e_t`.
///
/// `z_l = 0` for `l <= 0`; `burn_in` leading steps are generated and discarded.
/// Innovations and measurement errors come from separate streams of one seed, so
/// the latent path does not depend on `err`.
pub fn simulate(
    spec: &VarSpec,
    err: &ErrorSpec,
    n: usize,
    seed: u64,
    burn_in: usize,
) -> Result<(TimeSeriesMatrix, TimeSeriesMatrix)> {
    let path = simulate_path(spec, err, n, seed, burn_in)?;
    Ok((path.latent, path.observed))
}

pub fn simulate_path(
    spec: &VarSpec,
    err: &ErrorSpec,
    n: usize,
    seed: u64,
    burn_in: usize,
) -> Result<SimulatedPath> {
    let (p, r) = (spec.p(), spec.r());
    err.check_dim(p)?;
    if n < r + 1 {
        return Err(Error::InsufficientData {
            needed: r + 1,
            got: n,
        });
    }
    let spectral_radius = is_stable(spec)?.spectral_radius;
    let l_q = linalg::psd_factor(spec.sigma(), "Sigma")?;
    let l_e = linalg::psd_factor(err.matrix(), "Sigma_e")?;

    let mut rng_q = ChaCha8Rng::seed_from_u64(seed);
    rng_q.set_stream(0);
    let mut rng_e = ChaCha8Rng::seed_from_u64(seed);
    rng_e.set_stream(1);

    let total = n + burn_in;
    let a = spec.intercept();
    let blocks = spec.blocks();
    // Row-major working buffers.
    let mut z = vec![0.0; total * p];
    let mut q_all = vec![0.0; total * p];
    let mut draw = vec![0.0; p];
    for t in 0..total {
        for d in draw.iter_mut() {
            *d = StandardNormal.sample(&mut rng_q);
        }
        for i in 0..p {
            let mut qi = 0.0;
            for k in 0..p {
                qi += l_q[(i, k)] * draw[k];
            }
            q_all[t * p + i] = qi;
            let mut zi = a[i] + qi;
            for (j, bj) in blocks.iter().enumerate() {
                if t > j {
                    let prev = (t - 1 - j) * p;
                    for k in 0..p {
                        zi += bj[(i, k)] * z[prev + k];
                    }
                }
            }
            z[t * p + i] = zi;
        }
    }

    let mut e = DMatrix::zeros(n, p);
    for t in 0..n {
        for d in draw.iter_mut() {
            *d = StandardNormal.sample(&mut rng_e);
        }
        for i in 0..p {
            let mut v = 0.0;
            for k in 0..p {
                v += l_e[(i, k)] * draw[k];
            }
            e[(t, i)] = v;
        }
    }

    let latent = DMatrix::from_fn(n, p, |t, i| z[(t + burn_in) * p + i]);
    let innovations = DMatrix::from_fn(n, p, |t, i| q_all[(t + burn_in) * p + i]);
    let observed = &latent + &e;
    Ok(SimulatedPath {
        latent: TimeSeriesMatrix::unnamed(latent)?,
        observed: TimeSeriesMatrix::unnamed(observed)?,
        innovations,
        errors: e,
        spectral_radius,
    })
}
