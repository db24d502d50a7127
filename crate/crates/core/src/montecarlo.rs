//! Simulation studies: rejection-rate grids, bias/MSE tables and corrected power.
//!
//! Every replication owns an RNG seeded from `(master seed, cell key, replication)`,
//! where the cell key hashes the cell's coordinates. A cell therefore yields the same
//! draws whichever study it appears in and whatever the thread count. Replications run
//! on the current rayon pool; per-cell results are collected in replication order and
//! reduced sequentially, so floating-point summation order never depends on scheduling.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics_oracle::{build_w, linearization_remainder};
use crate::chisq::chisq_critical_value;
use crate::error::{Error, Result};
use crate::estimate::{build_moments, fit_from_moments, EstimatorKind, FitResult};
use crate::inference::{granger_contrast, phi_classical, phi_plugin, wald_statistic, Contrast};
use crate::linalg;
use crate::tsmodel::{is_stable, simulate_path, ErrorSpec, VarSpec};

pub const MIN_REPS: usize = 100;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Bivariate VAR(1) study design with a grid over the two cross coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimStudyConfig {
    pub intercept: Vec<f64>,
    pub b11: f64,
    pub b22: f64,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_e: Vec<Vec<f64>>,
    pub b12_grid: Vec<f64>,
    pub b21_grid: Vec<f64>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub alpha_list: Vec<f64>,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Discarded leading steps after the zero start.
    pub burn_in: usize,
    /// `(b12, b21)` generating the bias/MSE study.
    pub bias_design: [f64; 2],
    /// Allows fewer than [`MIN_REPS`] replications, for smoke runs.
    pub pilot: bool,
}

impl Default for SimStudyConfig {
    fn default() -> Self {
        let grid = vec![-0.4, -0.2, 0.0, 0.2, 0.4];
        Self {
            intercept: vec![1.0, 1.0],
            b11: 0.5,
            b22: 0.5,
            sigma: vec![vec![10.0, 5.0], vec![5.0, 5.0]],
            sigma_e: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            b12_grid: grid.clone(),
            b21_grid: grid,
            n_list: vec![50, 100, 250, 500],
            reps: 2000,
            alpha_list: vec![0.05],
            seed: 20_140_501,
            estimators: vec![EstimatorKind::Usual, EstimatorKind::Corrected],
            burn_in: 0,
            bias_design: [-0.2, 0.2],
            pilot: false,
        }
    }
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n != 2 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{what} must be 2 x 2")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SimStudyConfig {
    pub fn error_spec(&self) -> Result<ErrorSpec> {
        ErrorSpec::new(square(&self.sigma_e, "sigma_e")?)
    }

    pub fn spec_for(&self, b12: f64, b21: f64) -> Result<VarSpec> {
        if self.intercept.len() != 2 {
            return Err(Error::Dimension("intercept must have length 2".into()));
        }
        VarSpec::new(
            DVector::from_column_slice(&self.intercept),
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[self.b11, b12, b21, self.b22],
            )],
            square(&self.sigma, "sigma")?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let floor = if self.pilot { 1 } else { MIN_REPS };
        if self.reps < floor {
            return Err(Error::InvalidArgument(format!(
                "reps = {} is below the minimum of {floor} (set pilot = true for smoke runs)",
                self.reps
            )));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 4) {
            return Err(Error::InvalidArgument(
                "n_list must be non-empty with every n >= 4".into(),
            ));
        }
        if self.alpha_list.is_empty() || self.alpha_list.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidArgument(
                "every alpha must lie in (0, 1)".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimator selected".into()));
        }
        self.error_spec()?;
        let b12s = self
            .b12_grid
            .iter()
            .chain(std::iter::once(&self.bias_design[0]));
        for &b12 in b12s {
            for &b21 in self
                .b21_grid
                .iter()
                .chain(std::iter::once(&self.bias_design[1]))
            {
                let s = self.spec_for(b12, b21)?;
                let st = is_stable(&s)?;
                if !st.stable {
                    return Err(Error::Unstable {
                        radius: st.spectral_radius,
                    });
                }
            }
        }
        Ok(())
    }

    fn uses(&self, kind: EstimatorKind) -> bool {
        self.estimators.contains(&kind)
    }
}

/// Hypotheses on the cross coefficients of the bivariate design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// `b12 = b21 = 0`.
    Joint,
    /// `b12 = 0`.
    Single,
}

impl Hypothesis {
    pub fn contrast(&self) -> Result<Contrast> {
        let b12 = granger_contrast(2, 1, 2, 1)?;
        match self {
            Hypothesis::Single => Ok(b12),
            Hypothesis::Joint => {
                Contrast::joint(&[b12, granger_contrast(2, 1, 1, 2)?], "b12 = b21 = 0")
            }
        }
    }

    pub fn is_null(&self, b12: f64, b21: f64) -> bool {
        match self {
            Hypothesis::Single => b12 == 0.0,
            Hypothesis::Joint => b12 == 0.0 && b21 == 0.0,
        }
    }

    pub fn df(&self) -> usize {
        match self {
            Hypothesis::Single => 1,
            Hypothesis::Joint => 2,
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key identifying a design cell by its coordinates.
pub fn cell_key(b12: f64, b21: f64, n: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(b12.to_bits()) ^ b21.to_bits()) ^ n as u64)
}

pub fn rep_seed(master: u64, cell: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell) ^ rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Inadmissible,
    Plugin,
    Other,
}

/// One estimator's outcome in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDraw {
    pub coefficients: Option<DVector<f64>>,
    pub statistic: Option<f64>,
    pub failure: Option<FailureKind>,
}

impl ArmDraw {
    fn failed(kind: FailureKind) -> Self {
        Self {
            coefficients: None,
            statistic: None,
            failure: Some(kind),
        }
    }
}

fn draw_arm(fit: Result<FitResult>, err: &ErrorSpec, contrast: Option<&Contrast>) -> ArmDraw {
    let fit = match fit {
        Ok(f) => f,
        Err(Error::Inadmissible { .. }) => return ArmDraw::failed(FailureKind::Inadmissible),
        Err(_) => return ArmDraw::failed(FailureKind::Other),
    };
    let coefficients = Some(fit.coefficient_vector());
    let Some(contrast) = contrast else {
        return ArmDraw {
            coefficients,
            statistic: None,
            failure: None,
        };
    };
    let phi = match fit.kind {
        EstimatorKind::Usual => phi_classical(&fit),
        EstimatorKind::Corrected => phi_plugin(&fit, err),
    };
    let stat =
        phi.and_then(|phi| wald_statistic(coefficients.as_ref().unwrap(), fit.n, &phi, contrast));
    match stat {
        Ok(w) => ArmDraw {
            coefficients,
            statistic: Some(w.statistic),
            failure: None,
        },
        Err(_) => ArmDraw {
            coefficients,
            statistic: None,
            failure: Some(FailureKind::Plugin),
        },
    }
}

/// All replications of one cell, in replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDraws {
    pub b12: f64,
    pub b21: f64,
    pub n: usize,
    pub usual: Vec<ArmDraw>,
    pub corrected: Vec<ArmDraw>,
}

impl CellDraws {
    pub fn arm(&self, kind: EstimatorKind) -> &[ArmDraw] {
        match kind {
            EstimatorKind::Usual => &self.usual,
            EstimatorKind::Corrected => &self.corrected,
        }
    }
}

/// Simulates `cfg.reps` datasets of `n` regression rows for one cell and fits the
/// configured estimators; with a contrast, also computes Wald statistics.
pub fn simulate_cell(
    cfg: &SimStudyConfig,
    b12: f64,
    b21: f64,
    n: usize,
    contrast: Option<&Contrast>,
) -> Result<CellDraws> {
    let spec = cfg.spec_for(b12, b21)?;
    let err = cfg.error_spec()?;
    let key = cell_key(b12, b21, n);
    let (want_u, want_c) = (
        cfg.uses(EstimatorKind::Usual),
        cfg.uses(EstimatorKind::Corrected),
    );
    let draws: Vec<(ArmDraw, ArmDraw)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<(ArmDraw, ArmDraw)> {
            let seed = rep_seed(cfg.seed, key, rep as u64);
            let path = simulate_path(&spec, &err, n + spec.r(), seed, cfg.burn_in)?;
            let skip = ArmDraw::failed(FailureKind::Other);
            let m = match build_moments(&path.observed, spec.r()) {
                Ok(m) => m,
                Err(_) => return Ok((skip.clone(), skip)),
            };
            let u = if want_u {
                draw_arm(fit_from_moments(&m, None), &err, contrast)
            } else {
                skip.clone()
            };
            let c = if want_c {
                draw_arm(fit_from_moments(&m, Some(&err)), &err, contrast)
            } else {
                skip
            };
            Ok((u, c))
        })
        .collect::<Result<_>>()?;
    let (usual, corrected) = draws.into_iter().unzip();
    Ok(CellDraws {
        b12,
        b21,
        n,
        usual,
        corrected,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub inadmissible: usize,
    pub plugin: usize,
    pub other: usize,
}

impl FailureCounts {
    fn of(draws: &[ArmDraw]) -> Self {
        let mut c = Self::default();
        for d in draws {
            match d.failure {
                Some(FailureKind::Inadmissible) => c.inadmissible += 1,
                Some(FailureKind::Plugin) => c.plugin += 1,
                Some(FailureKind::Other) => c.other += 1,
                None => {}
            }
        }
        c
    }
}

pub fn binomial_se(rate: f64, trials: usize) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

fn statistics(draws: &[ArmDraw]) -> Vec<f64> {
    draws.iter().filter_map(|d| d.statistic).collect()
}

fn exceed_rate(stats: &[f64], critical: f64) -> (f64, usize) {
    let hits = stats.iter().filter(|&&s| s > critical).count();
    if stats.is_empty() {
        (f64::NAN, 0)
    } else {
        (hits as f64 / stats.len() as f64, hits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    pub b12: f64,
    pub b21: f64,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub alpha: f64,
    pub rejections: usize,
    /// Replications with a usable statistic; the rate's denominator.
    pub valid_reps: usize,
    pub reps: usize,
    pub failures: FailureCounts,
    pub rate: f64,
    pub se: f64,
    /// Cell lies on the null hypothesis, so `rate` is an empirical size.
    pub null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub hypothesis: Hypothesis,
    pub cells: Vec<RejectionCell>,
}

impl RejectionTable {
    pub fn find(
        &self,
        b12: f64,
        b21: f64,
        n: usize,
        estimator: EstimatorKind,
        alpha: f64,
    ) -> Option<&RejectionCell> {
        self.cells.iter().find(|c| {
            c.b12 == b12 && c.b21 == b21 && c.n == n && c.estimator == estimator && c.alpha == alpha
        })
    }
}

fn rejection_cells(
    draws: &CellDraws,
    cfg: &SimStudyConfig,
    hypothesis: Hypothesis,
) -> Vec<RejectionCell> {
    let mut out = Vec::new();
    for &kind in &[EstimatorKind::Usual, EstimatorKind::Corrected] {
        if !cfg.uses(kind) {
            continue;
        }
        let arm = draws.arm(kind);
        let stats = statistics(arm);
        let failures = FailureCounts::of(arm);
        for &alpha in &cfg.alpha_list {
            let crit = chisq_critical_value(alpha, hypothesis.df());
            let (rate, rejections) = exceed_rate(&stats, crit);
            out.push(RejectionCell {
                b12: draws.b12,
                b21: draws.b21,
                n: draws.n,
                estimator: kind,
                alpha,
                rejections,
                valid_reps: stats.len(),
                reps: arm.len(),
                failures,
                rate,
                se: binomial_se(rate, stats.len()),
                null: hypothesis.is_null(draws.b12, draws.b21),
            });
        }
    }
    out
}

/// Rejection rates over the `b12 x b21 x n` grid at every configured level.
pub fn run_rejection_grid(cfg: &SimStudyConfig, hypothesis: Hypothesis) -> Result<RejectionTable> {
    cfg.validate()?;
    let contrast = hypothesis.contrast()?;
    let mut cells = Vec::new();
    for &b12 in &cfg.b12_grid {
        for &b21 in &cfg.b21_grid {
            for &n in &cfg.n_list {
                let draws = simulate_cell(cfg, b12, b21, n, Some(&contrast))?;
                cells.extend(rejection_cells(&draws, cfg, hypothesis));
            }
        }
    }
    Ok(RejectionTable { hypothesis, cells })
}

/// `b{k}{j}` (VAR(1)) or `b{k}{j}_lag{l}` for position `idx` of `vec(B')`.
pub fn coefficient_name(p: usize, r: usize, idx: usize) -> String {
    let (k, rest) = (idx / (p * r), idx % (p * r));
    let (lag, j) = (rest / p, rest % p);
    if r == 1 {
        format!("b{}{}", k + 1, j + 1)
    } else {
        format!("b{}{}_lag{}", k + 1, j + 1, lag + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMseRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub coefficient: String,
    pub truth: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub mse: f64,
    pub valid_reps: usize,
    pub reps: usize,
    pub failures: FailureCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMseTable {
    pub b12: f64,
    pub b21: f64,
    pub rows: Vec<BiasMseRow>,
}

impl BiasMseTable {
    pub fn find(
        &self,
        estimator: EstimatorKind,
        n: usize,
        coefficient: &str,
    ) -> Option<&BiasMseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && r.coefficient == coefficient)
    }
}

/// Empirical bias and MSE of every coefficient at `cfg.bias_design`.
pub fn run_bias_mse(cfg: &SimStudyConfig) -> Result<BiasMseTable> {
    cfg.validate()?;
    let [b12, b21] = cfg.bias_design;
    let truth = linalg::vec_transpose(&cfg.spec_for(b12, b21)?.coefficients());
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let draws = simulate_cell(cfg, b12, b21, n, None)?;
        for &kind in &[EstimatorKind::Usual, EstimatorKind::Corrected] {
            if !cfg.uses(kind) {
                continue;
            }
            let arm = draws.arm(kind);
            let est: Vec<&DVector<f64>> =
                arm.iter().filter_map(|d| d.coefficients.as_ref()).collect();
            let m = est.len();
            for i in 0..truth.len() {
                let dev: Vec<f64> = est.iter().map(|e| e[i] - truth[i]).collect();
                let bias = dev.iter().sum::<f64>() / m as f64;
                let mse = dev.iter().map(|d| d * d).sum::<f64>() / m as f64;
                let var = if m > 1 {
                    dev.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (m - 1) as f64
                } else {
                    f64::NAN
                };
                rows.push(BiasMseRow {
                    estimator: kind,
                    n,
                    coefficient: coefficient_name(2, 1, i),
                    truth: truth[i],
                    bias,
                    bias_se: (var / m as f64).sqrt(),
                    mse,
                    valid_reps: m,
                    reps: arm.len(),
                    failures: FailureCounts::of(arm),
                });
            }
        }
    }
    Ok(BiasMseTable { b12, b21, rows })
}

/// How the alternative's rejection rate entering the corrected power is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    /// Rejection rate at the chi-square critical value, whose true level is the
    /// empirical size `a_n`. Under the null the corrected power is exactly `alpha`.
    #[default]
    Asymptotic,
    /// Rejection rate at the null run's empirical `(1 - alpha)` quantile.
    SizeAdjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub b12: f64,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub alpha: f64,
    /// `a_n(alpha)`: null rejection rate at the chi-square critical value.
    pub size: f64,
    pub size_se: f64,
    pub critical_value: f64,
    /// `P_n(a_n(alpha))`.
    pub raw_power: f64,
    pub raw_power_se: f64,
    /// `P_n(a_n) * alpha / a_n`; `None` when `a_n = 0`.
    pub corrected_power: Option<f64>,
    pub null_valid: usize,
    pub alt_valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub rule: PowerRule,
    pub b21: f64,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn find(
        &self,
        b12: f64,
        n: usize,
        estimator: EstimatorKind,
        alpha: f64,
    ) -> Option<&PowerPoint> {
        self.points
            .iter()
            .find(|p| p.b12 == b12 && p.n == n && p.estimator == estimator && p.alpha == alpha)
    }
}

/// Upper empirical quantile: the smallest sample value with at most `alpha` of the
/// sample strictly above it.
pub fn empirical_upper_quantile(stats: &[f64], alpha: f64) -> f64 {
    let mut s = stats.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len();
    let keep_above = (alpha * m as f64).floor() as usize;
    s[m - 1 - keep_above.min(m - 1)]
}

/// Corrected power of the single test `b12 = 0` for alternatives `b12 in alternatives`,
/// with `b21` fixed at `cfg.b21_grid[0]`.
pub fn corrected_power(
    cfg: &SimStudyConfig,
    alternatives: &[f64],
    rule: PowerRule,
) -> Result<PowerCurve> {
    cfg.validate()?;
    let b21 = *cfg
        .b21_grid
        .first()
        .ok_or_else(|| Error::InvalidArgument("b21_grid is empty".into()))?;
    let hyp = Hypothesis::Single;
    let contrast = hyp.contrast()?;
    let mut points = Vec::new();
    for &n in &cfg.n_list {
        let null = simulate_cell(cfg, 0.0, b21, n, Some(&contrast))?;
        for &b12 in alternatives {
            let alt = if b12 == 0.0 {
                null.clone()
            } else {
                simulate_cell(cfg, b12, b21, n, Some(&contrast))?
            };
            for &kind in &[EstimatorKind::Usual, EstimatorKind::Corrected] {
                if !cfg.uses(kind) {
                    continue;
                }
                let null_stats = statistics(null.arm(kind));
                let alt_stats = statistics(alt.arm(kind));
                for &alpha in &cfg.alpha_list {
                    let chi = chisq_critical_value(alpha, hyp.df());
                    let (size, _) = exceed_rate(&null_stats, chi);
                    let critical_value = match rule {
                        PowerRule::Asymptotic => chi,
                        PowerRule::SizeAdjusted if null_stats.is_empty() => f64::NAN,
                        PowerRule::SizeAdjusted => empirical_upper_quantile(&null_stats, alpha),
                    };
                    let (raw_power, _) = exceed_rate(&alt_stats, critical_value);
                    let corrected = if size > 0.0 && raw_power.is_finite() {
                        Some(raw_power * alpha / size)
                    } else {
                        None
                    };
                    points.push(PowerPoint {
                        b12,
                        n,
                        estimator: kind,
                        alpha,
                        size,
                        size_se: binomial_se(size, null_stats.len()),
                        critical_value,
                        raw_power,
                        raw_power_se: binomial_se(raw_power, alt_stats.len()),
                        corrected_power: corrected,
                        null_valid: null_stats.len(),
                        alt_valid: alt_stats.len(),
                    });
                }
            }
        }
    }
    Ok(PowerCurve { rule, b21, points })
}

/// Sample mean and covariance of replicated vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub used: usize,
    pub failed: usize,
}

fn moments_of(rows: &[DVector<f64>], failed: usize) -> Result<SamplingMoments> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let d = rows[0].len();
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += r;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - &mean;
        cov += &c * c.transpose();
    }
    cov /= (m - 1) as f64;
    Ok(SamplingMoments {
        mean,
        covariance: cov,
        used: m,
        failed,
    })
}

/// Replicated `sqrt(n) (vec(B_hat') - vec(B'))` for one estimator at a fixed spec.
pub fn sampling_covariance(
    spec: &VarSpec,
    err: &ErrorSpec,
    n: usize,
    reps: usize,
    seed: u64,
    burn_in: usize,
    kind: EstimatorKind,
) -> Result<SamplingMoments> {
    let truth = linalg::vec_transpose(&spec.coefficients());
    let key = splitmix64(n as u64 ^ 0x5A5A);
    let scale = (n as f64).sqrt();
    let draws: Vec<Option<DVector<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Option<DVector<f64>>> {
            let path = simulate_path(
                spec,
                err,
                n + spec.r(),
                rep_seed(seed, key, rep as u64),
                burn_in,
            )?;
            let m = build_moments(&path.observed, spec.r())?;
            let fit = match kind {
                EstimatorKind::Usual => fit_from_moments(&m, None),
                EstimatorKind::Corrected => fit_from_moments(&m, Some(err)),
            };
            Ok(fit.ok().map(|f| (f.coefficient_vector() - &truth) * scale))
        })
        .collect::<Result<_>>()?;
    let failed = draws.iter().filter(|d| d.is_none()).count();
    let rows: Vec<DVector<f64>> = draws.into_iter().flatten().collect();
    moments_of(&rows, failed)
}

/// Replicated `sqrt(n) W_bar` from latent paths.
pub fn w_mean_covariance(
    spec: &VarSpec,
    err: &ErrorSpec,
    n: usize,
    reps: usize,
    seed: u64,
    burn_in: usize,
) -> Result<SamplingMoments> {
    let key = splitmix64(n as u64 ^ 0xA5A5);
    let scale = (n as f64).sqrt();
    let rows: Vec<DVector<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<DVector<f64>> {
            let path = simulate_path(
                spec,
                err,
                n + spec.r(),
                rep_seed(seed, key, rep as u64),
                burn_in,
            )?;
            let w = build_w(&path.latent, &path.errors, &path.innovations, spec, err)?;
            Ok(w.mean() * scale)
        })
        .collect::<Result<_>>()?;
    moments_of(&rows, 0)
}

/// Mean Euclidean norm of the linearization remainder of the corrected estimator.
pub fn linearization_error(
    spec: &VarSpec,
    err: &ErrorSpec,
    n: usize,
    reps: usize,
    seed: u64,
    burn_in: usize,
) -> Result<f64> {
    let truth = linalg::vec_transpose(&spec.coefficients());
    let key = splitmix64(n as u64 ^ 0x3C3C);
    let norms: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Option<f64>> {
            let path = simulate_path(
                spec,
                err,
                n + spec.r(),
                rep_seed(seed, key, rep as u64),
                burn_in,
            )?;
            let m = build_moments(&path.observed, spec.r())?;
            let Ok(fit) = fit_from_moments(&m, Some(err)) else {
                return Ok(None);
            };
            let w = build_w(&path.latent, &path.errors, &path.innovations, spec, err)?;
            let rem = linearization_remainder(&(fit.coefficient_vector() - &truth), &w, spec)?;
            Ok(Some(rem.norm()))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = norms.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Long-format report row shared by every table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub table: String,
    pub b12: Option<f64>,
    pub b21: Option<f64>,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub alpha: Option<f64>,
    pub coefficient: Option<String>,
    pub metric: String,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub reps: usize,
    pub valid_reps: usize,
    pub inadmissible: usize,
    pub plugin_failures: usize,
}

pub const REPORT_COLUMNS: [&str; 14] = [
    "table",
    "b12",
    "b21",
    "n",
    "estimator",
    "alpha",
    "coefficient",
    "metric",
    "value",
    "se",
    "reps",
    "valid_reps",
    "inadmissible",
    "plugin_failures",
];

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl RejectionTable {
    pub fn to_rows(&self) -> Vec<ReportRow> {
        let table = match self.hypothesis {
            Hypothesis::Joint => "rejection_joint",
            Hypothesis::Single => "rejection_single",
        };
        self.cells
            .iter()
            .map(|c| ReportRow {
                table: table.into(),
                b12: Some(c.b12),
                b21: Some(c.b21),
                n: c.n,
                estimator: c.estimator,
                alpha: Some(c.alpha),
                coefficient: None,
                metric: if c.null { "size" } else { "rejection_rate" }.into(),
                value: finite(c.rate),
                se: finite(c.se),
                reps: c.reps,
                valid_reps: c.valid_reps,
                inadmissible: c.failures.inadmissible,
                plugin_failures: c.failures.plugin,
            })
            .collect()
    }
}

impl BiasMseTable {
    pub fn to_rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::with_capacity(2 * self.rows.len());
        for r in &self.rows {
            for (metric, value, se) in [("bias", r.bias, finite(r.bias_se)), ("mse", r.mse, None)] {
                out.push(ReportRow {
                    table: "bias_mse".into(),
                    b12: Some(self.b12),
                    b21: Some(self.b21),
                    n: r.n,
                    estimator: r.estimator,
                    alpha: None,
                    coefficient: Some(r.coefficient.clone()),
                    metric: metric.into(),
                    value: finite(value),
                    se,
                    reps: r.reps,
                    valid_reps: r.valid_reps,
                    inadmissible: r.failures.inadmissible,
                    plugin_failures: r.failures.plugin,
                });
            }
        }
        out
    }
}

impl PowerCurve {
    pub fn to_rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for p in &self.points {
            let metrics = [
                ("size", Some(p.size), finite(p.size_se), p.null_valid),
                (
                    "raw_power",
                    Some(p.raw_power),
                    finite(p.raw_power_se),
                    p.alt_valid,
                ),
                ("corrected_power", p.corrected_power, None, p.alt_valid),
            ];
            for (metric, value, se, valid) in metrics {
                out.push(ReportRow {
                    table: "power".into(),
                    b12: Some(p.b12),
                    b21: Some(self.b21),
                    n: p.n,
                    estimator: p.estimator,
                    alpha: Some(p.alpha),
                    coefficient: None,
                    metric: metric.into(),
                    value: value.and_then(finite),
                    se,
                    reps: valid,
                    valid_reps: valid,
                    inadmissible: 0,
                    plugin_failures: 0,
                });
            }
        }
        out
    }
}

pub fn write_report_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: format!("unexpected report header {header:?}"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

/// JSON run manifest written next to the CSV tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub command: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub columns: Vec<String>,
    pub notes: Vec<String>,
    pub files: Vec<ManifestFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Notes describing how the tables were produced, recorded in every manifest.
pub fn method_notes(rule: Option<PowerRule>) -> Vec<String> {
    let mut notes = vec![
        "usual-estimator Wald tests use Sigma_hat (x) S_Z*^{-1}".to_string(),
        "corrected-estimator Wald tests use the plug-in covariance at (B_hat, Sigma_hat clipped to PSD)".to_string(),
        "inadmissible corrected fits and plug-in failures are excluded from rate denominators and counted".to_string(),
        "each replication simulates n + r points from a zero start after burn_in discarded steps".to_string(),
    ];
    match rule {
        Some(PowerRule::Asymptotic) => notes.push(
            "corrected power: raw power at the chi-square critical value times alpha / empirical size".into(),
        ),
        Some(PowerRule::SizeAdjusted) => notes.push(
            "corrected power: raw power at the null run's empirical (1 - alpha) quantile times alpha / empirical size"
                .into(),
        ),
        None => {}
    }
    notes
}

/// Writes each `(file name, rows)` pair as CSV into `dir` plus `manifest.json`.
pub fn emit_report(
    dir: &Path,
    tables: &[(&str, Vec<ReportRow>)],
    command: &str,
    config: &impl Serialize,
    master_seed: u64,
    notes: Vec<String>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut written = Vec::new();
    for (name, rows) in tables {
        let mut buf = Vec::new();
        write_report_csv(rows, &mut buf)?;
        let path = dir.join(name);
        fs::write(&path, &buf)?;
        files.push(ManifestFile {
            name: name.to_string(),
            rows: rows.len(),
            sha256: sha256_hex(&buf),
        });
        written.push(path);
    }
    let manifest = Manifest {
        schema_version: REPORT_SCHEMA_VERSION,
        generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        command: command.into(),
        master_seed,
        config: serde_json::to_value(config).map_err(|e| Error::Io(e.to_string()))?,
        columns: REPORT_COLUMNS.iter().map(|s| s.to_string()).collect(),
        notes,
        files,
    };
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    written.push(path);
    Ok(written)
}
