//! One function per subcommand. Each writes its files plus `manifest.json` into
//! the output directory and returns the written paths.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use varme_core::asymptotics_oracle::t_r_closed_form;
use varme_core::estimate::Diagnostics;
use varme_core::inference::{coefficient_table, edge_table, phi_for_fit, printed, PhiSource};
use varme_core::linalg::rel_diff;
use varme_core::montecarlo::{
    corrected_power, emit_report, method_notes, run_bias_mse, run_rejection_grid, sha256_hex,
    w_mean_covariance, Hypothesis, ReportRow, REPORT_SCHEMA_VERSION,
};
use varme_core::{
    asymptotics_oracle, fit_corrected, fit_usual, phi_exact, wald_test, ErrorSpec, EstimatorKind,
    FitResult, TimeSeriesMatrix,
};

use crate::config::{RunConfig, StudyTable};
use crate::data::{check_length, ingest_csv, normalize};
use crate::error::CliError;

pub const DEFAULT_OUT: &str = "varme-out";

pub const COEFFICIENT_COLUMNS: [&str; 8] = [
    "estimator",
    "name",
    "equation",
    "lag",
    "column",
    "estimate",
    "se",
    "p_value",
];
pub const QQ_COLUMNS: [&str; 5] = [
    "estimator",
    "series",
    "rank",
    "standardized_residual",
    "normal_quantile",
];
pub const EDGE_COLUMNS: [&str; 9] = [
    "estimator",
    "source",
    "target",
    "source_name",
    "target_name",
    "statistic",
    "df",
    "p_value",
    "significant",
];
pub const CONTRAST_COLUMNS: [&str; 5] = ["estimator", "label", "statistic", "df", "p_value"];

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
    pub estimator: Option<crate::config::EstimatorChoice>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(r) = self.reps {
            cfg.study.reps = r;
            cfg.oracle.reps = r;
        }
        if let Some(e) = self.estimator {
            cfg.estimator = e;
        }
        if let Some(s) = cfg.seed {
            cfg.study.seed = s;
        }
        cfg.study.estimators = cfg.estimator.kinds();
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub estimator: EstimatorKind,
    pub n_eff: usize,
    pub order: usize,
    pub covariance: String,
    pub diagnostics: serde_json::Value,
}

/// Manifest for `fit` and `test` outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub generator: String,
    pub command: String,
    pub config: serde_json::Value,
    pub series: Vec<String>,
    pub normalized: bool,
    pub sigma_e: Vec<Vec<f64>>,
    pub fits: Vec<FitSummary>,
    pub files: Vec<FileEntry>,
}

fn write_table<T: Serialize>(
    dir: &Path,
    name: &str,
    columns: &[&str],
    rows: &[T],
) -> Result<FileEntry, CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(columns).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush()?;
    }
    fs::write(dir.join(name), &buf)?;
    Ok(FileEntry {
        name: name.into(),
        rows: rows.len(),
        sha256: sha256_hex(&buf),
        columns: columns.iter().map(|s| s.to_string()).collect(),
    })
}

/// The ingested (and, if configured, normalized) series.
pub fn load_data(cfg: &RunConfig) -> Result<TimeSeriesMatrix, CliError> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("input is required".into()))?;
    let raw = ingest_csv(path)?;
    check_length(&raw, cfg.order)?;
    Ok(if cfg.normalize { normalize(&raw)? } else { raw })
}

fn error_spec(cfg: &RunConfig, p: usize) -> Result<ErrorSpec, CliError> {
    match &cfg.noise {
        Some(n) => n.resolve(p, cfg.normalize),
        None if cfg.estimator.kinds().contains(&EstimatorKind::Corrected) => Err(CliError::Config(
            "the corrected estimator needs a [noise] table".into(),
        )),
        None => Ok(ErrorSpec::zero(p)),
    }
}

struct Fitted {
    fit: FitResult,
    phi: varme_core::PhiMatrix,
}

fn fit_all(
    cfg: &RunConfig,
    data: &TimeSeriesMatrix,
    err: &ErrorSpec,
) -> Result<Vec<Fitted>, CliError> {
    cfg.estimator
        .kinds()
        .into_iter()
        .map(|kind| {
            let fit = match kind {
                EstimatorKind::Usual => fit_usual(data, cfg.order)?,
                EstimatorKind::Corrected => fit_corrected(data, cfg.order, err)?,
            };
            let phi = phi_for_fit(&fit, err)?;
            Ok(Fitted { fit, phi })
        })
        .collect()
}

fn manifest(
    command: &str,
    cfg: &RunConfig,
    data: &TimeSeriesMatrix,
    err: &ErrorSpec,
    fits: &[Fitted],
    files: Vec<FileEntry>,
) -> Result<RunManifest, CliError> {
    let json = |v: &Diagnostics| serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()));
    Ok(RunManifest {
        schema_version: REPORT_SCHEMA_VERSION,
        generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        command: command.into(),
        config: serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?,
        series: data.names().to_vec(),
        normalized: data.is_normalized(),
        sigma_e: err
            .matrix()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        fits: fits
            .iter()
            .map(|f| {
                Ok(FitSummary {
                    estimator: f.fit.kind,
                    n_eff: f.fit.n,
                    order: f.fit.r,
                    covariance: match f.phi.source {
                        PhiSource::Exact => "exact",
                        PhiSource::Plugin => "plugin",
                        PhiSource::Classical => "classical",
                    }
                    .into(),
                    diagnostics: json(&f.fit.diagnostics)?,
                })
            })
            .collect::<Result<_, CliError>>()?,
        files,
    })
}

fn write_manifest<T: Serialize>(dir: &Path, m: &T) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(m).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

#[derive(Serialize)]
struct CoefficientOut<'a> {
    estimator: EstimatorKind,
    name: &'a str,
    equation: usize,
    lag: usize,
    column: usize,
    estimate: f64,
    se: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct QqOut<'a> {
    estimator: EstimatorKind,
    series: &'a str,
    rank: usize,
    standardized_residual: f64,
    normal_quantile: f64,
}

/// Sorted residuals of each series, scaled by their sample standard deviation, next
/// to standard normal quantiles at plotting positions `(i - 0.5) / n`.
pub fn qq_points(residuals: &[f64]) -> Vec<(f64, f64)> {
    let n = residuals.len();
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let sd =
        (residuals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64).sqrt();
    let mut z: Vec<f64> = residuals
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let normal = Normal::standard();
    z.into_iter()
        .enumerate()
        .map(|(i, v)| (v, normal.inverse_cdf((i as f64 + 0.5) / n as f64)))
        .collect()
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let err = error_spec(cfg, data.p())?;
    let fits = fit_all(cfg, &data, &err)?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)?;

    let names = data.names();
    let mut coefs = Vec::new();
    let mut tables = Vec::new();
    for f in &fits {
        tables.push((f.fit.kind, coefficient_table(&f.fit, &f.phi)?));
    }
    for (kind, rows) in &tables {
        coefs.extend(rows.iter().map(|r| CoefficientOut {
            estimator: *kind,
            name: &r.name,
            equation: r.equation,
            lag: r.lag,
            column: r.column,
            estimate: r.estimate,
            se: r.se,
            p_value: r.p_value,
        }));
    }
    let mut qq = Vec::new();
    for f in &fits {
        for (j, name) in names.iter().enumerate() {
            let col: Vec<f64> = f.fit.residuals.column(j).iter().copied().collect();
            qq.extend(
                qq_points(&col)
                    .into_iter()
                    .enumerate()
                    .map(|(i, (z, q))| QqOut {
                        estimator: f.fit.kind,
                        series: name,
                        rank: i + 1,
                        standardized_residual: z,
                        normal_quantile: q,
                    }),
            );
        }
    }
    let files = vec![
        write_table(&dir, "coefficients.csv", &COEFFICIENT_COLUMNS, &coefs)?,
        write_table(&dir, "residuals_qq.csv", &QQ_COLUMNS, &qq)?,
    ];
    let m = manifest("fit", cfg, &data, &err, &fits, files.clone())?;
    let mut written: Vec<PathBuf> = files.iter().map(|f| dir.join(&f.name)).collect();
    written.push(write_manifest(&dir, &m)?);
    Ok(written)
}

#[derive(Serialize)]
struct EdgeOut<'a> {
    estimator: EstimatorKind,
    source: usize,
    target: usize,
    source_name: &'a str,
    target_name: &'a str,
    statistic: f64,
    df: usize,
    p_value: f64,
    significant: bool,
}

#[derive(Serialize)]
struct ContrastOut {
    estimator: EstimatorKind,
    label: String,
    statistic: f64,
    df: usize,
    p_value: f64,
}

pub fn cmd_test(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let err = error_spec(cfg, data.p())?;
    let contrasts = cfg
        .contrasts
        .iter()
        .map(|c| c.build(data.names(), cfg.order))
        .collect::<Result<Vec<_>, _>>()?;
    let fits = fit_all(cfg, &data, &err)?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)?;

    let names = data.names();
    let mut edges = Vec::new();
    let mut tests = Vec::new();
    for f in &fits {
        for e in edge_table(&f.fit, &f.phi, cfg.alpha)? {
            edges.push(EdgeOut {
                estimator: f.fit.kind,
                source: e.source,
                target: e.target,
                source_name: &names[e.source - 1],
                target_name: &names[e.target - 1],
                statistic: e.statistic,
                df: e.df,
                p_value: e.p_value,
                significant: e.significant,
            });
        }
        for c in &contrasts {
            let w = wald_test(&f.fit, &f.phi, c)?;
            tests.push(ContrastOut {
                estimator: f.fit.kind,
                label: c.label.clone(),
                statistic: w.statistic,
                df: w.df,
                p_value: w.p_value,
            });
        }
    }
    let mut files = vec![write_table(&dir, "edges.csv", &EDGE_COLUMNS, &edges)?];
    if !tests.is_empty() {
        files.push(write_table(
            &dir,
            "contrasts.csv",
            &CONTRAST_COLUMNS,
            &tests,
        )?);
    }
    let m = manifest("test", cfg, &data, &err, &fits, files.clone())?;
    let mut written: Vec<PathBuf> = files.iter().map(|f| dir.join(&f.name)).collect();
    written.push(write_manifest(&dir, &m)?);
    Ok(written)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let study = &cfg.study;
    study.validate()?;
    let mut tables: Vec<(&str, Vec<ReportRow>)> = Vec::new();
    for t in &cfg.tables {
        match t {
            StudyTable::Joint => tables.push((
                "rejection_joint.csv",
                run_rejection_grid(study, Hypothesis::Joint)?.to_rows(),
            )),
            StudyTable::Single => tables.push((
                "rejection_single.csv",
                run_rejection_grid(study, Hypothesis::Single)?.to_rows(),
            )),
            StudyTable::Bias => tables.push(("bias_mse.csv", run_bias_mse(study)?.to_rows())),
        }
    }
    if tables.is_empty() {
        return Err(CliError::Config("tables is empty".into()));
    }
    Ok(emit_report(
        &out_dir(cfg),
        &tables,
        "simulate",
        study,
        study.seed,
        method_notes(None),
    )?)
}

pub fn cmd_power(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let study = &cfg.study;
    let alternatives: Vec<f64> = if cfg.power.alternatives.is_empty() {
        study
            .b12_grid
            .iter()
            .copied()
            .filter(|b| *b != 0.0)
            .collect()
    } else {
        cfg.power.alternatives.clone()
    };
    let curve = corrected_power(study, &alternatives, cfg.power.rule)?;
    Ok(emit_report(
        &out_dir(cfg),
        &[("power.csv", curve.to_rows())],
        "power",
        study,
        study.seed,
        method_notes(Some(cfg.power.rule)),
    )?)
}

/// Summary written by `oracle`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub b12: f64,
    pub b21: f64,
    /// Relative gap between the two independently assembled covariances.
    pub sandwich_discrepancy: f64,
    /// Relative gap between the published-form and derived covariances.
    pub published_form_gap: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Worst `|empirical - closed form| / max(0.1 |closed form|, 0.05)` over entries.
    pub w_covariance_worst_ratio: f64,
    /// Largest `|mean| / (sd / sqrt(reps))` over coordinates of `sqrt(n) W_bar`.
    pub w_mean_max_abs_z: f64,
    pub pass: bool,
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let o = &cfg.oracle;
    if o.reps < 2 || o.n < 2 {
        return Err(CliError::Config("oracle needs n >= 2 and reps >= 2".into()));
    }
    let spec = cfg.study.spec_for(o.b12, o.b21)?;
    let err = cfg.study.error_spec()?;
    let sandwich = asymptotics_oracle::sandwich_check(&spec, &err)?;
    let published = rel_diff(
        &printed::phi(&spec, &err)?.phi,
        &phi_exact(&spec, &err)?.phi,
    );
    let seed = cfg.study.seed;
    let mc = w_mean_covariance(&spec, &err, o.n, o.reps, seed, o.burn_in)?;
    let t = t_r_closed_form(&spec, &err)?;
    let worst = mc
        .covariance
        .iter()
        .zip(t.iter())
        .map(|(e, x)| (e - x).abs() / (0.1 * x.abs()).max(0.05))
        .fold(0.0, f64::max);
    let max_z = (0..mc.mean.len())
        .map(|i| mc.mean[i].abs() / (mc.covariance[(i, i)].max(1e-300) / mc.used as f64).sqrt())
        .fold(0.0, f64::max);
    let report = OracleReport {
        schema_version: REPORT_SCHEMA_VERSION,
        b12: o.b12,
        b21: o.b21,
        sandwich_discrepancy: sandwich,
        published_form_gap: published,
        n: o.n,
        reps: o.reps,
        seed,
        w_covariance_worst_ratio: worst,
        w_mean_max_abs_z: max_z,
        pass: sandwich <= 1e-9 && worst <= 1.0 && max_z <= 4.0,
    };
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)?;
    let path = dir.join("oracle.json");
    let mut text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(vec![path])
}
