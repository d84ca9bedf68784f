//! Batch driver.
//!
//! Prune by norm, then alternate certificate attempts with filter steps along
//! random directions `B^{p_k} z`, doubling `p_k` between stages. The first
//! accepted candidate is returned.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{random_power_direction, sample_top_eigenvector, Candidate};
use crate::error::{Error, Result};
use crate::estimators::{opnorm_bracket, trimmed_variance, weighted_quantile};
use crate::filter::{filter_batch, FilterOutcome};
use crate::linops::SecondMomentOp;
use crate::oracle::{dense_spectrum, DenseMatrix};
use crate::types::{AlgoConfig, FilterStack, WeightedDataset};
use crate::vector::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaStatus {
    /// The certificate accepted `u`.
    Accepted,
    /// Schedule exhausted; `u` is the rejected candidate with the largest `σ̂_u`.
    FallbackBest,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub u: Vec<f64>,
    pub sigma_robust: f64,
    pub status: PcaStatus,
    /// `(k, t)` at exit, 1-based.
    pub iterations: (usize, usize),
    pub filters_created: usize,
    /// `ln tr(B^{2p+1})` before the first and after every filter step, at the
    /// `p` of the step's stage. Only with `trace_potential` and `d ≤ 64`.
    pub potential_trace: Option<Vec<f64>>,
    pub elapsed_secs: f64,
    pub samples_consumed: Option<u64>,
    #[serde(skip)]
    pub final_stack: FilterStack,
}

/// One filter step: direction, threshold, robust variance and filter outcome.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub v: Vec<f64>,
    /// `L`, after the floor.
    pub cutoff: f64,
    pub sigma_hat: f64,
    pub t_hat: f64,
    pub outcome: FilterOutcome,
    pub after: WeightedDataset,
}

#[derive(Debug)]
pub enum TraceEvent<'a> {
    Certificate {
        k: usize,
        t: usize,
        candidate: &'a Candidate,
    },
    Filter {
        k: usize,
        t: usize,
        p: usize,
        before: &'a WeightedDataset,
        step: &'a FilterStep,
    },
}

pub trait TraceSink {
    fn record(&mut self, event: &TraceEvent<'_>);
}

impl<F: FnMut(&TraceEvent<'_>)> TraceSink for F {
    fn record(&mut self, event: &TraceEvent<'_>) {
        self(event)
    }
}

struct NoTrace;

impl TraceSink for NoTrace {
    fn record(&mut self, _: &TraceEvent<'_>) {}
}

/// Largest dimension for which the potential is materialized.
pub const MAX_POTENTIAL_DIM: usize = 64;

fn potential_spectrum(ds: &WeightedDataset) -> Result<crate::oracle::DenseSpectrum> {
    if ds.dim() > MAX_POTENTIAL_DIM {
        return Err(Error::UnsupportedDiagnostic(format!(
            "potential needs d <= {MAX_POTENTIAL_DIM}, got {}",
            ds.dim()
        )));
    }
    dense_spectrum(&DenseMatrix::second_moment(ds))
}

/// `φ = tr(B^{2p+1})` by dense eigenvalues.
pub fn potential_diagnostic(ds: &WeightedDataset, p: u32) -> Result<f64> {
    Ok(potential_spectrum(ds)?.trace_power(2 * p + 1))
}

/// `ln φ`, for powers where `φ` itself overflows.
pub fn log_potential_diagnostic(ds: &WeightedDataset, p: u32) -> Result<f64> {
    Ok(potential_spectrum(ds)?.log_trace_power(2 * p + 1))
}

/// One scoring-and-filtering step at power `p`: `v ∝ B^p z`, `L` = the
/// `3ε`-quantile of `(v^T x)²` floored at `(0.1/d)·σ̂_op`, `T̂ = 2.35γσ̂`, and
/// the hard-thresholding filter with `δ = 0`.
pub fn filter_step(
    ds: &WeightedDataset,
    p: usize,
    sigma_op: f64,
    cfg: &AlgoConfig,
    rng: &mut impl Rng,
) -> Result<FilterStep> {
    let d = ds.dim();
    let op = SecondMomentOp::unnormalized(ds).with_exec(cfg.exec);
    let v = random_power_direction(&op, p, rng)?;
    let scores: Vec<f64> = ds.points().rows().map(|x| dot(&v, x).powi(2)).collect();
    let q = weighted_quantile(ds, &scores, (3.0 * cfg.eps).min(0.999))?;
    let cutoff = q.value.max(0.1 / d as f64 * sigma_op);
    let sigma_hat = trimmed_variance(ds, &v, cutoff)?.value;
    let t_hat = 2.35 * cfg.gamma * sigma_hat;
    let (outcome, after) = filter_batch(ds, &v, cutoff, t_hat, 0.0, rng)?;
    Ok(FilterStep {
        v,
        cutoff,
        sigma_hat,
        t_hat,
        outcome,
        after,
    })
}

/// `10·σ̂_op·d/ε`, or no prune at all when `ε = 0`.
pub fn prune_radius_sq(sigma_op: f64, dim: usize, eps: f64) -> f64 {
    if eps > 0.0 {
        10.0 * sigma_op * dim as f64 / eps
    } else {
        f64::INFINITY
    }
}

struct Attempt {
    best: Option<Candidate>,
    accepted: bool,
    iterations: (usize, usize),
    filters_created: usize,
    potential_trace: Option<Vec<f64>>,
    final_stack: FilterStack,
}

fn attempt(
    input: &WeightedDataset,
    cfg: &AlgoConfig,
    rng: &mut ChaCha8Rng,
    sink: &mut dyn TraceSink,
) -> Result<Attempt> {
    let d = input.dim();
    let sigma_op = opnorm_bracket(input, cfg.eps)
        .map_err(|e| e.context("operator-norm bracket"))?
        .value;
    let radius = prune_radius_sq(sigma_op, d, cfg.eps).min(input.stack().prune_radius_sq());
    let mut ds = input.with_prune(radius)?;
    let trace_potential = cfg.trace_potential && d <= MAX_POTENTIAL_DIM;
    let mut potential_trace = trace_potential.then(Vec::new);
    let mut best: Option<Candidate> = None;
    let mut filters_created = 0;
    let (k_end, t_end) = (cfg.k_end(d), cfg.t_end(d));
    let mut iterations = (0, 0);
    for k in 1..=k_end {
        let p = cfg.stage_power(d, k);
        if let Some(tr) = potential_trace.as_mut() {
            tr.push(log_potential_diagnostic(&ds, p as u32)?);
        }
        for t in 1..=t_end {
            iterations = (k, t);
            let cand = sample_top_eigenvector(&ds, cfg, rng)
                .map_err(|e| e.context(&format!("certificate at k={k}, t={t}")))?;
            sink.record(&TraceEvent::Certificate {
                k,
                t,
                candidate: &cand,
            });
            let accepted = cand.accepted;
            if best
                .as_ref()
                .is_none_or(|b| accepted || cand.sigma_robust > b.sigma_robust)
            {
                best = Some(cand);
            }
            if accepted {
                return Ok(Attempt {
                    best,
                    accepted: true,
                    iterations,
                    filters_created,
                    potential_trace,
                    final_stack: ds.stack().clone(),
                });
            }
            let step = filter_step(&ds, p, sigma_op, cfg, rng)
                .map_err(|e| e.context(&format!("filter at k={k}, t={t}")))?;
            sink.record(&TraceEvent::Filter {
                k,
                t,
                p,
                before: &ds,
                step: &step,
            });
            if step.outcome.new_entry.is_some() {
                filters_created += 1;
                ds = step.after;
                if let Some(tr) = potential_trace.as_mut() {
                    tr.push(log_potential_diagnostic(&ds, p as u32)?);
                }
            }
        }
    }
    Ok(Attempt {
        best,
        accepted: false,
        iterations,
        filters_created,
        potential_trace,
        final_stack: ds.stack().clone(),
    })
}

/// Seed of boosting repetition `rep` (repetition 0 uses the configured seed).
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Batch robust PCA with the RNG seeded from `cfg.seed`.
pub fn robust_pca(ds: &WeightedDataset, cfg: &AlgoConfig) -> Result<PcaResult> {
    robust_pca_traced(ds, cfg, &mut NoTrace)
}

pub fn robust_pca_traced(
    ds: &WeightedDataset,
    cfg: &AlgoConfig,
    sink: &mut dyn TraceSink,
) -> Result<PcaResult> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let start = Instant::now();
    let mut chosen: Option<Attempt> = None;
    for rep in 0..cfg.boost_reps {
        let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(cfg.seed, rep));
        let a = attempt(ds, cfg, &mut rng, sink)?;
        let score = |a: &Attempt| a.best.as_ref().map_or(f64::NEG_INFINITY, |c| c.sigma_robust);
        let better = match &chosen {
            None => true,
            Some(c) => (a.accepted, score(&a)) > (c.accepted, score(c)),
        };
        if better {
            chosen = Some(a);
        }
    }
    let a = chosen.expect("boost_reps >= 1");
    let (u, sigma_robust, status) = match (&a.best, a.accepted) {
        (Some(c), true) => (c.u.clone(), c.sigma_robust, PcaStatus::Accepted),
        (Some(c), false) => (c.u.clone(), c.sigma_robust, PcaStatus::FallbackBest),
        (None, _) => (vec![0.0; ds.dim()], 0.0, PcaStatus::Failed),
    };
    Ok(PcaResult {
        u,
        sigma_robust,
        status,
        iterations: a.iterations,
        filters_created: a.filters_created,
        potential_trace: a.potential_trace,
        elapsed_secs: start.elapsed().as_secs_f64(),
        samples_consumed: None,
        final_stack: a.final_stack,
    })
}
