//! Parameter sweeps with replications, analytic overlays and CSV output.

use crate::analytic::{self, AnalyticParams};
use crate::des::{self, loss_probability, Horizon, SimConfig, SimError};
use crate::metrics::{self, MetricError};
use crate::par::run_tasks;
use crate::policies::PolicyKind;
use crate::stochastic::{DistributionSpec, ParamError};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ROWS_SCHEMA: &str = "recontrack.rows.v1";
pub const SUMMARY_SCHEMA: &str = "recontrack.summary.v1";
pub const CURVES_SCHEMA: &str = "recontrack.analytic.v1";
/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RECONTRACK_OUT";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config parse failure: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    Exponential,
    Erlang2,
    Pareto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Exponential,
    Lognormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    Lambda,
    Mu,
    Buffer,
    Epsilon,
    #[serde(rename = "x_m")]
    XM,
}

fn default_one() -> f64 {
    1.0
}
fn default_buffer() -> usize {
    1
}
fn default_sigma() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    3.5
}
fn default_replications() -> usize {
    5
}
fn default_deliveries() -> u64 {
    1_000_000
}
fn default_warmup() -> f64 {
    0.05
}

/// One experiment, as read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "ArrivalKind::default")]
    pub arrival: ArrivalKind,
    #[serde(default = "ServiceKind::default")]
    pub service: ServiceKind,
    /// Log-scale standard deviation of log-normal service.
    #[serde(default = "default_sigma")]
    pub sigma_log: f64,
    /// Shape of Pareto inter-arrival times.
    #[serde(default = "default_alpha")]
    pub pareto_alpha: f64,
    #[serde(default = "default_one")]
    pub lambda: f64,
    #[serde(default = "default_one")]
    pub mu: f64,
    #[serde(default = "default_buffer")]
    pub buffer: usize,
    /// Threshold for `th-iaa` when epsilon is not the sweep variable.
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub policies: Vec<String>,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_deliveries")]
    pub deliveries: u64,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

impl ArrivalKind {
    fn default() -> Self {
        Self::Exponential
    }
}

impl ServiceKind {
    fn default() -> Self {
        Self::Exponential
    }
}

/// Fully resolved parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub mu: f64,
    pub buffer: usize,
    pub epsilon: f64,
    pub x_m: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::Invalid(m));
        if self.values.is_empty() {
            return invalid("sweep grid is empty".into());
        }
        if self.policies.is_empty() {
            return invalid("no policies listed".into());
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1".into());
        }
        if self.deliveries == 0 {
            return invalid("deliveries must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return invalid(format!("warmup must lie in [0, 1), got {}", self.warmup));
        }
        if self.sweep == SweepVar::XM && self.arrival != ArrivalKind::Pareto {
            return invalid("an x_m sweep needs pareto arrivals".into());
        }
        if self.sweep == SweepVar::Buffer
            && self.values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0))
        {
            return invalid("buffer values must be positive integers".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return invalid("sweep values must be finite".into());
        }
        for point in self.grid() {
            for name in &self.policies {
                self.policy_at(name, &point)?;
            }
            self.sim_config(&point, PolicyKind::KeepOld, 0)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        self.values
            .iter()
            .map(|&v| {
                let mut p = GridPoint {
                    lambda: self.lambda,
                    mu: self.mu,
                    buffer: self.buffer,
                    epsilon: self.epsilon.unwrap_or(0.0),
                    x_m: None,
                };
                match self.sweep {
                    SweepVar::Lambda => p.lambda = v,
                    SweepVar::Mu => p.mu = v,
                    SweepVar::Buffer => p.buffer = v as usize,
                    SweepVar::Epsilon => p.epsilon = v,
                    SweepVar::XM => {
                        p.x_m = Some(v);
                        p.lambda = (self.pareto_alpha - 1.0) / (self.pareto_alpha * v);
                    }
                }
                p
            })
            .collect()
    }

    fn policy_at(&self, name: &str, point: &GridPoint) -> Result<PolicyKind, ExperimentError> {
        let eps = match (name, self.sweep, self.epsilon) {
            ("th-iaa", SweepVar::Epsilon, _) => Some(point.epsilon),
            ("th-iaa", _, e) => e,
            _ => None,
        };
        PolicyKind::from_name(name, eps).map_err(ExperimentError::Invalid)
    }

    pub fn sim_config(&self, point: &GridPoint, policy: PolicyKind, replication: usize) -> Result<SimConfig, ExperimentError> {
        let arrival = match (self.arrival, point.x_m) {
            (ArrivalKind::Exponential, _) => DistributionSpec::exponential(point.lambda)?,
            (ArrivalKind::Erlang2, _) => DistributionSpec::erlang_with_rate(2, point.lambda)?,
            (ArrivalKind::Pareto, Some(x_m)) => DistributionSpec::pareto(x_m, self.pareto_alpha)?,
            (ArrivalKind::Pareto, None) => DistributionSpec::pareto_with_rate(point.lambda, self.pareto_alpha)?,
        };
        let service = match self.service {
            ServiceKind::Exponential => DistributionSpec::exponential(point.mu)?,
            ServiceKind::Lognormal => DistributionSpec::log_normal(1.0 / point.mu, self.sigma_log)?,
        };
        let config = SimConfig {
            arrival,
            service,
            buffer_size: point.buffer,
            policy,
            horizon: Horizon::Deliveries(self.deliveries),
            warmup_fraction: self.warmup,
            seed: self.seed.wrapping_add(replication as u64),
            record_packets: false,
        };
        config.validate()?;
        Ok(config)
    }

    fn markovian(&self) -> bool {
        self.arrival == ArrivalKind::Exponential && self.service == ServiceKind::Exponential
    }
}

/// One replication at one grid point under one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub lambda: f64,
    pub mu: f64,
    pub buffer: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub avg_peak_age: f64,
    pub avg_re: f64,
    pub lambda_eff_empirical: f64,
    pub loss_prob: f64,
    pub deliveries: u64,
    pub analytic_peak_age: Option<f64>,
    pub analytic_re: Option<f64>,
}

impl ResultRow {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.policy
            .cmp(&other.policy)
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.mu.total_cmp(&other.mu))
            .then(self.buffer.cmp(&other.buffer))
            .then(self.epsilon.total_cmp(&other.epsilon))
            .then(self.seed.cmp(&other.seed))
    }

    fn same_point(&self, other: &Self) -> bool {
        self.policy == other.policy
            && self.lambda == other.lambda
            && self.mu == other.mu
            && self.buffer == other.buffer
            && self.epsilon == other.epsilon
    }
}

/// Mean and standard error across the replications of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub lambda: f64,
    pub mu: f64,
    pub buffer: usize,
    pub epsilon: f64,
    pub replications: usize,
    pub peak_age_mean: f64,
    pub peak_age_se: f64,
    pub re_mean: f64,
    pub re_se: f64,
    pub lambda_eff_mean: f64,
    pub loss_prob_mean: f64,
    pub analytic_peak_age: Option<f64>,
    pub analytic_re: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Closed-form peak age and RE for Keep-Old / Keep-Fresh on M/M queues.
pub fn analytic_overlay(policy: PolicyKind, lambda: f64, mu: f64, buffer: usize) -> Option<(f64, f64)> {
    let p = AnalyticParams::new(lambda, mu, buffer).ok()?;
    let pair = match (policy, buffer) {
        (PolicyKind::KeepOld, 1) => (analytic::peak_age_ko_mm12(&p), analytic::re_ko_mm12(&p)),
        (PolicyKind::KeepFresh, 1) => (analytic::peak_age_kf_mm12(&p), analytic::re_kf_mm12(&p)),
        (PolicyKind::KeepOld, _) => (analytic::peak_age_ko_b(&p), analytic::re_ko_b(&p)),
        (PolicyKind::KeepFresh, _) => (analytic::peak_age_kf_b(&p), analytic::re_kf_b(&p)),
        _ => return None,
    };
    Some((pair.0.ok()?, pair.1.ok()?))
}

/// Simulates one configuration and reduces it to a row.
pub fn run_single(config: &SimConfig, with_analytic: bool) -> Result<ResultRow, ExperimentError> {
    let out = des::simulate(config)?;
    let age = metrics::peak_ages(&out.trace)?;
    let re = metrics::reconstruction_error(&out.trace)?;
    let overlay = if with_analytic {
        analytic_overlay(config.policy, config.arrival.rate(), config.service.rate(), config.buffer_size)
    } else {
        None
    };
    Ok(ResultRow {
        policy: config.policy.name().to_string(),
        lambda: config.arrival.rate(),
        mu: config.service.rate(),
        buffer: config.buffer_size,
        epsilon: config.policy.epsilon(),
        seed: config.seed,
        avg_peak_age: age.avg_peak_age,
        avg_re: re.avg_re,
        lambda_eff_empirical: re.lambda_eff_empirical,
        loss_prob: loss_probability(&out.trace)?,
        deliveries: out.trace.delivered_count(),
        analytic_peak_age: overlay.map(|o| o.0),
        analytic_re: overlay.map(|o| o.1),
    })
}

/// Runs every (grid point × policy × replication). Replication `r` uses
/// seed `seed + r` at every point and for every policy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let mut tasks = Vec::new();
    for point in config.grid() {
        for name in &config.policies {
            let policy = config.policy_at(name, &point)?;
            for r in 0..config.replications {
                tasks.push((config.sim_config(&point, policy, r)?, point));
            }
        }
    }
    let markovian = config.markovian();
    let results = run_tasks(&tasks, |(sim, point)| {
        // report nominal grid values, not rates recomputed from the specs
        run_single(sim, markovian).map(|mut row| {
            row.lambda = point.lambda;
            row.mu = point.mu;
            row.epsilon = point.epsilon;
            row
        })
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(ResultRow::key_cmp);
    let summary = summarize(&rows);
    Ok(ExperimentResult { rows, summary })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups sorted rows by point and averages them.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && rows[end].same_point(&rows[start]) {
            end += 1;
        }
        let group = &rows[start..end];
        let col = |f: fn(&ResultRow) -> f64| group.iter().map(f).collect::<Vec<_>>();
        let (age, age_se) = mean_se(&col(|r| r.avg_peak_age));
        let (re, re_se) = mean_se(&col(|r| r.avg_re));
        let first = &group[0];
        out.push(SummaryRow {
            policy: first.policy.clone(),
            lambda: first.lambda,
            mu: first.mu,
            buffer: first.buffer,
            epsilon: first.epsilon,
            replications: group.len(),
            peak_age_mean: age,
            peak_age_se: age_se,
            re_mean: re,
            re_se,
            lambda_eff_mean: mean_se(&col(|r| r.lambda_eff_empirical)).0,
            loss_prob_mean: mean_se(&col(|r| r.loss_prob)).0,
            analytic_peak_age: first.analytic_peak_age,
            analytic_re: first.analytic_re,
        });
        start = end;
    }
    out
}

fn write_tagged<W: Write, R: Serialize>(mut out: W, schema: &str, rows: &[R]) -> Result<(), ExperimentError> {
    writeln!(out, "#schema={schema}").map_err(csv::Error::from)?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), ExperimentError> {
    write_tagged(out, ROWS_SCHEMA, rows)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    write_tagged(out, SUMMARY_SCHEMA, rows)
}

/// Reads a rows file written by [`write_rows_csv`].
pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(ExperimentError::from)
}

/// Where a run's files go: the config's `output` (relative paths resolved
/// against `dir`), else `<dir>/<name>.csv`. `dir` defaults to the
/// [`OUTPUT_DIR_ENV`] directory, then the working directory.
pub fn output_path(config: &ExperimentConfig, dir: Option<&Path>) -> PathBuf {
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match &config.output {
        Some(p) if Path::new(p).is_absolute() => PathBuf::from(p),
        Some(p) => dir.join(p),
        None => dir.join(format!("{}.csv", config.name)),
    }
}

/// Writes `rows` to `path` and the summary next to it as
/// `<stem>.summary.csv`. Returns both paths.
pub fn persist(result: &ExperimentResult, path: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let io = |path: &Path| {
        let p = path.to_path_buf();
        move |source| ExperimentError::Io { path: p, source }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let summary_path = path.with_file_name(format!("{stem}.summary.csv"));
    write_rows_csv(&result.rows, std::fs::File::create(path).map_err(io(path))?)?;
    write_summary_csv(
        &result.summary,
        std::fs::File::create(&summary_path).map_err(io(&summary_path))?,
    )?;
    Ok((path.to_path_buf(), summary_path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Grid value with the lowest mean reconstruction error.
    pub argmin_epsilon: f64,
}

/// Threshold-IaA over an ε grid on M/M/1/2, sharing random numbers across
/// the grid.
pub fn run_threshold_sweep(
    lambda: f64,
    mu: f64,
    epsilons: &[f64],
    replications: usize,
    deliveries: u64,
    seed: u64,
) -> Result<ThresholdSweep, ExperimentError> {
    let config = ExperimentConfig {
        name: "threshold-sweep".into(),
        arrival: ArrivalKind::Exponential,
        service: ServiceKind::Exponential,
        sigma_log: default_sigma(),
        pareto_alpha: default_alpha(),
        lambda,
        mu,
        buffer: 1,
        epsilon: None,
        policies: vec!["th-iaa".into()],
        sweep: SweepVar::Epsilon,
        values: epsilons.to_vec(),
        replications,
        deliveries,
        warmup: default_warmup(),
        seed,
        output: None,
    };
    let result = run_experiment(&config)?;
    let best = result
        .summary
        .iter()
        .min_by(|a, b| a.re_mean.total_cmp(&b.re_mean))
        .expect("grid validated non-empty");
    Ok(ThresholdSweep {
        argmin_epsilon: best.epsilon,
        rows: result.rows,
        summary: result.summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub mu: f64,
    pub buffer: usize,
    pub lambda_eff: f64,
    pub loss_prob: f64,
    pub ko_peak_age: Option<f64>,
    pub ko_re: Option<f64>,
    pub kf_peak_age: Option<f64>,
    pub kf_re: Option<f64>,
}

pub fn analytic_curves(grid: &[AnalyticParams]) -> Vec<CurveRow> {
    grid.iter()
        .map(|p| {
            let ko = analytic_overlay(PolicyKind::KeepOld, p.lambda, p.mu, p.buffer);
            let kf = analytic_overlay(PolicyKind::KeepFresh, p.lambda, p.mu, p.buffer);
            CurveRow {
                lambda: p.lambda,
                mu: p.mu,
                buffer: p.buffer,
                lambda_eff: analytic::lambda_eff(p),
                loss_prob: analytic::steady_probs(p)[p.buffer + 1],
                ko_peak_age: ko.map(|x| x.0),
                ko_re: ko.map(|x| x.1),
                kf_peak_age: kf.map(|x| x.0),
                kf_re: kf.map(|x| x.1),
            }
        })
        .collect()
}

/// Closed-form curves over `grid` as tagged CSV.
pub fn emit_analytic_curves<W: Write>(grid: &[AnalyticParams], out: W) -> Result<(), ExperimentError> {
    write_tagged(out, CURVES_SCHEMA, &analytic_curves(grid))
}

pub const PRESET_NAMES: [&str; 10] = [
    "fig3", "fig4", "fig5", "fig6", "fig7", "fig8a", "fig8b", "fig9", "fig10", "fig11",
];

/// Shipped configuration reproducing one figure's sweep.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        "fig8a" => include_str!("../presets/fig8a.toml"),
        "fig8b" => include_str!("../presets/fig8b.toml"),
        "fig9" => include_str!("../presets/fig9.toml"),
        "fig10" => include_str!("../presets/fig10.toml"),
        "fig11" => include_str!("../presets/fig11.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let source = preset_source(name).ok_or_else(|| {
        ExperimentError::Invalid(format!(
            "unknown preset `{name}` (known: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::from_toml_str(source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sweep: &str, values: &str, policies: &str) -> String {
        format!(
            "name = \"t\"\npolicies = {policies}\nlambda = 2.0\nsweep = \"{sweep}\"\nvalues = {values}\n\
             replications = 2\ndeliveries = 2000\nseed = 7\n"
        )
    }

    #[test]
    fn presets_parse() {
        for name in PRESET_NAMES {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
            assert!(c.replications >= 5);
        }
        assert!(preset("fig99").is_err());
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::from_toml_str(&small("lambda", "[]", "[\"iaa\"]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&small("lambda", "[1.0]", "[]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&small("buffer", "[1.5]", "[\"iaa\"]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&small("x_m", "[1.0]", "[\"iaa\"]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&small("lambda", "[1.0]", "[\"th-iaa\"]")).is_err());
        assert!(ExperimentConfig::from_toml_str(&small("lambda", "[-1.0]", "[\"iaa\"]")).is_err());
        assert!(ExperimentConfig::from_toml_str("name = 1").is_err());
        let unknown = format!("{}bogus = 3\n", small("lambda", "[1.0]", "[\"iaa\"]"));
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn pareto_scale_sweep_reports_effective_rate() {
        let text = format!("{}arrival = \"pareto\"\n", small("x_m", "[0.5]", "[\"iaa\"]"));
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        let p = c.grid()[0];
        assert!((p.lambda - 2.5 / 1.75).abs() < 1e-12);
        let sim = c.sim_config(&p, PolicyKind::Iaa, 0).unwrap();
        assert!((sim.arrival.rate() - p.lambda).abs() < 1e-12);
    }

    #[test]
    fn rows_sorted_with_overlay_on_markov_ko_kf_only() {
        let c = ExperimentConfig::from_toml_str(&small("lambda", "[2.0, 0.5]", "[\"iaa\", \"keep-old\"]")).unwrap();
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.rows.len(), 8);
        assert_eq!(r.summary.len(), 4);
        assert!(r.rows.windows(2).all(|w| w[0].key_cmp(&w[1]) != Ordering::Greater));
        for row in &r.rows {
            assert_eq!(row.analytic_peak_age.is_some(), row.policy == "keep-old");
        }
        let lognormal = format!("{}service = \"lognormal\"\n", small("lambda", "[2.0]", "[\"keep-old\"]"));
        let r = run_experiment(&ExperimentConfig::from_toml_str(&lognormal).unwrap()).unwrap();
        assert!(r.rows.iter().all(|row| row.analytic_re.is_none()));
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let c = ExperimentConfig::from_toml_str(&small("buffer", "[1, 2]", "[\"keep-fresh\"]")).unwrap();
        let r = run_experiment(&c).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&r.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#schema=recontrack.rows.v1\npolicy,lambda,mu,buffer,epsilon,seed,"));
        assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), r.rows);
    }

    #[test]
    fn curves_match_analytic_module() {
        let grid = [
            AnalyticParams::new(2.0, 1.0, 1).unwrap(),
            AnalyticParams::new(0.9, 1.0, 4).unwrap(),
            AnalyticParams::new(1.0, 1.0, 3).unwrap(),
        ];
        let rows = analytic_curves(&grid);
        assert_eq!(rows[0].ko_peak_age, analytic::peak_age_ko_mm12(&grid[0]).ok());
        assert_eq!(rows[0].kf_re, analytic::re_kf_mm12(&grid[0]).ok());
        assert_eq!(rows[1].ko_re, analytic::re_ko_b(&grid[1]).ok());
        assert_eq!(rows[1].kf_peak_age, analytic::peak_age_kf_b(&grid[1]).ok());
        assert_eq!(rows[2].ko_peak_age, None);
        assert!((rows[2].lambda_eff - 0.8).abs() < 1e-15);
        let mut buf = Vec::new();
        emit_analytic_curves(&grid, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn output_path_resolution() {
        let mut c = preset("fig3").unwrap();
        assert_eq!(output_path(&c, Some(Path::new("/tmp/x"))), PathBuf::from("/tmp/x/fig3.csv"));
        c.output = None;
        c.name = "abc".into();
        assert_eq!(output_path(&c, Some(Path::new("d"))), PathBuf::from("d/abc.csv"));
        c.output = Some("/abs/o.csv".into());
        assert_eq!(output_path(&c, Some(Path::new("d"))), PathBuf::from("/abs/o.csv"));
    }
}
