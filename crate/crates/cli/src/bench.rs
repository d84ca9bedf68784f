//! Wall-time scaling over an `(n, d)` grid.

use std::path::Path;

use rpca_core::contamination::Spike;
use rpca_core::{robust_pca, CovarianceSpec, ExecMode, InlierSpec, WeightedDataset};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{generate_dataset, median};

/// Parses `"20000x32,40000x32"` into `(n, d)` cells.
pub fn parse_grid(spec: &str) -> Result<Vec<(usize, usize)>, CliError> {
    let bad = |cell: &str| CliError::Config(format!("grid: cannot parse cell {cell:?}, expected NxD"));
    spec.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|cell| {
            let (n, d) = cell.split_once(['x', 'X']).ok_or_else(|| bad(cell))?;
            let n: usize = n.trim().parse().map_err(|_| bad(cell))?;
            let d: usize = d.trim().parse().map_err(|_| bad(cell))?;
            if n == 0 || d == 0 {
                return Err(bad(cell));
            }
            Ok((n, d))
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(|g| {
            if g.is_empty() {
                Err(CliError::Config("grid: no cells".into()))
            } else {
                Ok(g)
            }
        })
}

/// The configured inlier model carried over to dimension `d`: diagonals are
/// truncated or padded with their last entry, spikes keep their leading
/// coordinates, projections keep their rank fraction.
pub fn resize_inlier(spec: &InlierSpec, d: usize) -> InlierSpec {
    let covariance = match &spec.covariance {
        CovarianceSpec::Diagonal { values } => {
            let last = values.last().copied().unwrap_or(1.0);
            CovarianceSpec::Diagonal {
                values: (0..d).map(|i| values.get(i).copied().unwrap_or(last)).collect(),
            }
        }
        CovarianceSpec::Spiked { dim: _, base, spikes } => CovarianceSpec::Spiked {
            dim: d,
            base: *base,
            spikes: spikes
                .iter()
                .map(|s| {
                    let mut direction = s.direction.clone();
                    direction.resize(d, 0.0);
                    Spike {
                        direction,
                        variance: s.variance,
                    }
                })
                .collect(),
        },
        CovarianceSpec::Projection { dim, rank } => CovarianceSpec::Projection {
            dim: d,
            rank: ((rank * d) as f64 / *dim as f64).ceil().max(1.0) as usize,
        },
    };
    InlierSpec {
        covariance,
        family: spec.family,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub d: usize,
    pub median_secs: f64,
    pub runs: usize,
    /// `t(n, d) / t(n/2, d)` when that cell is on the grid.
    pub ratio_n: Option<f64>,
    /// `t(n, d) / t(n, d/2)` when that cell is on the grid.
    pub ratio_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    pub fn cell(&self, n: usize, d: usize) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.n == n && c.d == d)
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(w);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), CliError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Median wall time of the batch driver per cell over `repeats` runs, using
/// the config's seeds in rotation. Data generation is not timed.
pub fn run_scaling_bench(
    cfg: &ExperimentConfig,
    grid: &[(usize, usize)],
    repeats: usize,
) -> Result<BenchTable, CliError> {
    cfg.validate()?;
    if repeats == 0 {
        return Err(CliError::Config("repeats must be positive".into()));
    }
    let mut cell_cfgs = Vec::with_capacity(grid.len());
    for &(n, d) in grid {
        let mut cell_cfg = cfg.clone();
        cell_cfg.inlier = resize_inlier(&cfg.inlier, d);
        cell_cfg.n = Some(n);
        cell_cfg.validate()?;
        cell_cfgs.push(cell_cfg);
    }
    let time_one = |cell_cfg: &ExperimentConfig, n: usize, d: usize, seed: u64| {
        let ds = WeightedDataset::new(generate_dataset(cell_cfg, seed, n)?);
        let mut algo = cell_cfg.algo.clone().with_seed(seed);
        algo.exec = ExecMode::Deterministic;
        robust_pca(&ds, &algo)
            .map(|res| res.elapsed_secs)
            .map_err(|source| CliError::Run {
                seed,
                method: format!("bench {n}x{d}"),
                source,
            })
    };
    // One untimed warm-up per cell, then repetitions interleaved across cells
    // so that slow stretches of the machine hit every cell alike.
    for (cell_cfg, &(n, d)) in cell_cfgs.iter().zip(grid) {
        time_one(cell_cfg, n, d, cfg.seeds[0])?;
    }
    let mut times = vec![Vec::with_capacity(repeats); grid.len()];
    for rep in 0..repeats {
        let seed = cfg.seeds[rep % cfg.seeds.len()];
        for (k, (cell_cfg, &(n, d))) in cell_cfgs.iter().zip(grid).enumerate() {
            times[k].push(time_one(cell_cfg, n, d, seed)?);
        }
    }
    let mut cells = Vec::with_capacity(grid.len());
    for (&(n, d), times) in grid.iter().zip(&times) {
        log::info!("cell {n}x{d}: {times:?}");
        cells.push(BenchCell {
            n,
            d,
            median_secs: median(times),
            runs: repeats,
            ratio_n: None,
            ratio_d: None,
        });
    }
    let lookup: Vec<(usize, usize, f64)> = cells.iter().map(|c| (c.n, c.d, c.median_secs)).collect();
    let time_of = |n: usize, d: usize| {
        lookup
            .iter()
            .find(|&&(cn, cd, _)| cn == n && cd == d)
            .map(|&(_, _, t)| t)
    };
    for c in &mut cells {
        if c.n % 2 == 0 {
            c.ratio_n = time_of(c.n / 2, c.d).map(|t| c.median_secs / t);
        }
        if c.d % 2 == 0 {
            c.ratio_d = time_of(c.n, c.d / 2).map(|t| c.median_secs / t);
        }
    }
    Ok(BenchTable { cells })
}
