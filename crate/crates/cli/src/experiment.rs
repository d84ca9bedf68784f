//! Seeded runs of the robust drivers and baselines, scored by the dense oracle.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rpca_core::baseline::{naive_pca, oja_streaming};
use rpca_core::contamination::{gen_inliers, strong_contaminate, tv_contaminated_source};
use rpca_core::oracle::dense_spectrum;
use rpca_core::stream::SampleFeed;
use rpca_core::{
    metric_approx_ratio, robust_pca, streaming_robust_pca, Dataset, DenseMatrix, ExecMode,
    PcaResult, WeightedDataset,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Baseline, ExperimentConfig};
use crate::error::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Power-iteration steps for the naive batch baseline.
const NAIVE_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RobustBatch,
    RobustStreaming,
    NaivePca,
    NaiveStreaming,
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::RobustBatch => "robust_batch",
            Method::RobustStreaming => "robust_streaming",
            Method::NaivePca => "naive_pca",
            Method::NaiveStreaming => "naive_streaming",
            Method::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

/// One `(seed, method)` measurement. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: u64,
    pub method: Method,
    pub approx_ratio: f64,
    /// `accepted`, `fallback_best`, `failed` or `baseline`.
    pub status: String,
    pub wall_time_secs: f64,
    pub filters_created: Option<usize>,
    pub samples_consumed: Option<u64>,
    pub peak_resident_scalars: Option<usize>,
}

impl ReportRow {
    /// Row-level schema check.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.approx_ratio >= 0.0 && self.approx_ratio <= 1.0 + 1e-9) {
            return Err(format!("approx_ratio {} outside [0, 1]", self.approx_ratio));
        }
        if !(self.wall_time_secs >= 0.0 && self.wall_time_secs.is_finite()) {
            return Err(format!("wall_time_secs {} is not a duration", self.wall_time_secs));
        }
        if !["accepted", "fallback_best", "failed", "baseline"].contains(&self.status.as_str()) {
            return Err(format!("unknown status {:?}", self.status));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub median_ratio: f64,
    pub q1_ratio: f64,
    pub q3_ratio: f64,
    pub iqr_ratio: f64,
    pub median_wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub aggregate: Vec<MethodSummary>,
    /// SHA-256 over rows and aggregates with every wall-time column zeroed.
    pub digest: String,
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.aggregate.iter().find(|s| s.method == method)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join("report.json");
        let csv = dir.join("report.csv");
        self.write_json(&json)?;
        self.write_csv(&csv)?;
        Ok((json, csv))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Force sequential reductions inside every run.
    pub deterministic: bool,
    /// Worker slots for seeds; `0` lets the pool decide.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            deterministic: true,
            workers: 1,
        }
    }
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn summarize(rows: &[ReportRow]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let mut ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.approx_ratio)
                .collect();
            ratios.sort_by(f64::total_cmp);
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.wall_time_secs)
                .collect();
            let (q1, q3) = (quantile(&ratios, 0.25), quantile(&ratios, 0.75));
            MethodSummary {
                method,
                runs: ratios.len(),
                median_ratio: quantile(&ratios, 0.5),
                q1_ratio: q1,
                q3_ratio: q3,
                iqr_ratio: q3 - q1,
                median_wall_time_secs: median(&times),
            }
        })
        .collect()
}

fn digest(rows: &[ReportRow], aggregate: &[MethodSummary]) -> String {
    let rows: Vec<ReportRow> = rows
        .iter()
        .map(|r| ReportRow {
            wall_time_secs: 0.0,
            ..r.clone()
        })
        .collect();
    let aggregate: Vec<MethodSummary> = aggregate
        .iter()
        .map(|s| MethodSummary {
            median_wall_time_secs: 0.0,
            ..s.clone()
        })
        .collect();
    let body = serde_json::to_vec(&(rows, aggregate)).expect("report rows serialize");
    Sha256::digest(&body)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Contaminated batch sample for `seed`: `n` inliers, then `⌊ε·n⌋` replaced.
pub fn generate_dataset(cfg: &ExperimentConfig, seed: u64, n: usize) -> Result<Dataset, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = gen_inliers(&cfg.inlier, n, &mut rng)?;
    Ok(strong_contaminate(&clean, &cfg.adversary, &cfg.inlier.sigma(), &mut rng)?)
}

fn status_str(res: &PcaResult) -> String {
    serde_json::to_value(res.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| "failed".into())
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    sigma: &'a DenseMatrix,
    exec: ExecMode,
    seed: u64,
}

impl SeedRun<'_> {
    fn fail(&self, method: Method) -> impl FnOnce(rpca_core::Error) -> CliError + '_ {
        move |source| CliError::Run {
            seed: self.seed,
            method: method.to_string(),
            source,
        }
    }

    fn ratio(&self, method: Method, u: &[f64]) -> Result<f64, CliError> {
        metric_approx_ratio(u, self.sigma).map_err(self.fail(method))
    }

    fn rows(&self) -> Result<Vec<ReportRow>, CliError> {
        let cfg = self.cfg;
        let mut algo = cfg.algo.clone().with_seed(self.seed);
        algo.exec = self.exec;
        let naive = cfg.baselines.contains(&Baseline::NaivePca);
        let mut rows = Vec::new();

        if cfg.mode.batch() {
            let n = cfg.n.unwrap_or(0);
            let ds = generate_dataset(cfg, self.seed, n).map_err(|e| match e {
                CliError::Core(source) => CliError::Run {
                    seed: self.seed,
                    method: "generate".into(),
                    source,
                },
                other => other,
            })?;
            let wds = WeightedDataset::new(ds);
            let res = robust_pca(&wds, &algo).map_err(self.fail(Method::RobustBatch))?;
            rows.push(ReportRow {
                seed: self.seed,
                method: Method::RobustBatch,
                approx_ratio: self.ratio(Method::RobustBatch, &res.u)?,
                status: status_str(&res),
                wall_time_secs: res.elapsed_secs,
                filters_created: Some(res.filters_created),
                samples_consumed: Some(n as u64),
                peak_resident_scalars: None,
            });
            if naive {
                let start = Instant::now();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x006e_6169_7665);
                let u = naive_pca(wds.points(), NAIVE_ITERS, &mut rng)
                    .map_err(self.fail(Method::NaivePca))?;
                rows.push(ReportRow {
                    seed: self.seed,
                    method: Method::NaivePca,
                    approx_ratio: self.ratio(Method::NaivePca, &u)?,
                    status: "baseline".into(),
                    wall_time_secs: start.elapsed().as_secs_f64(),
                    filters_created: None,
                    samples_consumed: Some(n as u64),
                    peak_resident_scalars: None,
                });
            }
        }

        if cfg.mode.streaming() {
            let opts = cfg.stream_options();
            let mut source = tv_contaminated_source(&cfg.inlier, &cfg.adversary, self.seed)
                .map_err(self.fail(Method::RobustStreaming))?;
            let (res, stats) = streaming_robust_pca(&mut source, &algo, &opts)
                .map_err(self.fail(Method::RobustStreaming))?;
            rows.push(ReportRow {
                seed: self.seed,
                method: Method::RobustStreaming,
                approx_ratio: self.ratio(Method::RobustStreaming, &res.u)?,
                status: status_str(&res),
                wall_time_secs: stats.wall_time_secs,
                filters_created: Some(res.filters_created),
                samples_consumed: Some(stats.samples_consumed),
                peak_resident_scalars: Some(stats.peak_resident_scalars),
            });
            if naive {
                let budget = opts.sample_budget.unwrap_or(0);
                let start = Instant::now();
                let mut source = tv_contaminated_source(&cfg.inlier, &cfg.adversary, self.seed)
                    .map_err(self.fail(Method::NaiveStreaming))?;
                let mut feed = SampleFeed::new(&mut source).with_budget(budget);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x006f_6a61);
                let u = oja_streaming(&mut feed, budget, &mut rng)
                    .map_err(self.fail(Method::NaiveStreaming))?;
                rows.push(ReportRow {
                    seed: self.seed,
                    method: Method::NaiveStreaming,
                    approx_ratio: self.ratio(Method::NaiveStreaming, &u)?,
                    status: "baseline".into(),
                    wall_time_secs: start.elapsed().as_secs_f64(),
                    filters_created: None,
                    samples_consumed: Some(feed.consumed()),
                    peak_resident_scalars: Some(feed.meter().peak()),
                });
            }
        }

        if cfg.baselines.contains(&Baseline::Oracle) {
            let start = Instant::now();
            let u = dense_spectrum(self.sigma)
                .map_err(self.fail(Method::Oracle))?
                .vector(0);
            rows.push(ReportRow {
                seed: self.seed,
                method: Method::Oracle,
                approx_ratio: self.ratio(Method::Oracle, &u)?,
                status: "baseline".into(),
                wall_time_secs: start.elapsed().as_secs_f64(),
                filters_created: None,
                samples_consumed: None,
                peak_resident_scalars: None,
            });
        }
        for row in &rows {
            row.validate().map_err(|m| {
                CliError::Core(rpca_core::Error::Internal(format!(
                    "row (seed {}, {}) violates the report schema: {m}",
                    row.seed, row.method
                )))
            })?;
        }
        Ok(rows)
    }
}

/// Runs every seed and method of `cfg`. Seeds are spread over `opts.workers`
/// slots; rows come back in seed order regardless.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let sigma = cfg.inlier.sigma();
    let exec = if opts.deterministic {
        ExecMode::Deterministic
    } else {
        cfg.algo.exec
    };
    let run = |&seed: &u64| {
        log::info!("seed {seed}");
        SeedRun {
            cfg,
            sigma: &sigma,
            exec,
            seed,
        }
        .rows()
    };
    let per_seed: Vec<Vec<ReportRow>> = if opts.workers == 1 {
        cfg.seeds.iter().map(run).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| CliError::Core(rpca_core::Error::Internal(e.to_string())))?;
        pool.install(|| cfg.seeds.par_iter().map(run).collect::<Result<_, _>>())?
    };
    let rows: Vec<ReportRow> = per_seed.into_iter().flatten().collect();
    let aggregate = summarize(&rows);
    let digest = digest(&rows, &aggregate);
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        rows,
        aggregate,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn digest_ignores_wall_time() {
        let row = ReportRow {
            seed: 1,
            method: Method::Oracle,
            approx_ratio: 1.0,
            status: "baseline".into(),
            wall_time_secs: 0.5,
            filters_created: None,
            samples_consumed: None,
            peak_resident_scalars: None,
        };
        let mut other = row.clone();
        other.wall_time_secs = 9.0;
        let a = digest(std::slice::from_ref(&row), &summarize(std::slice::from_ref(&row)));
        let b = digest(&[other.clone()], &summarize(&[other]));
        assert_eq!(a, b);
        let mut changed = row.clone();
        changed.approx_ratio = 0.5;
        assert_ne!(a, digest(&[changed.clone()], &summarize(&[changed])));
    }

    #[test]
    fn schema_rejects_bad_rows() {
        let mut row = ReportRow {
            seed: 1,
            method: Method::RobustBatch,
            approx_ratio: 1.1,
            status: "accepted".into(),
            wall_time_secs: 0.0,
            filters_created: Some(0),
            samples_consumed: None,
            peak_resident_scalars: None,
        };
        assert!(row.validate().is_err());
        row.approx_ratio = 0.9;
        assert!(row.validate().is_ok());
        row.status = "maybe".into();
        assert!(row.validate().is_err());
    }
}
