//! Single-pass streaming driver.
//!
//! Same control flow as the batch driver; every population quantity is
//! replaced by an estimate from fresh stream samples. Persistent state is the
//! filter stack, one candidate and a few scalars. Quantile buffers and probe
//! workspaces are transient and charged to the feed's memory meter.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{stream_sample_top_eigenvector, Candidate, StreamPlan};
use crate::error::{Error, Result};
use crate::estimators::{
    stream_mean_estimate, stream_opnorm_bracket, stream_trimmed_variance, streaming_quantile,
    MeanPlan,
};
use crate::filter::hard_thresholding_filter;
use crate::linops::stream_power_apply;
use crate::robust_pca::{PcaResult, PcaStatus};
use crate::stream::{SampleFeed, SampleSource};
use crate::types::{AlgoConfig, FilterStack};
use crate::vector::{dot, gaussian, norm, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub samples_consumed: u64,
    pub filters_stored: usize,
    pub peak_resident_scalars: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamOptions {
    /// `r ≥ 1` with `Pr[‖X‖ > r·√(d‖Σ‖_op)] ≤ ε` for inliers.
    pub r_radius: f64,
    /// Maximum number of samples to read; exhaustion yields a fallback.
    pub sample_budget: Option<u64>,
    /// Upper bound on resident scalars; exceeding it is an error.
    pub memory_budget: Option<usize>,
    /// Overrides the minibatch size of the power estimator.
    pub batch_size: Option<usize>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            r_radius: 1.0,
            sample_budget: None,
            memory_budget: None,
            batch_size: None,
        }
    }
}

/// `⌈c_batch·d·p²·ln(d/ε)/δ²⌉` with `δ = min(0.01√(γ/ε)/(r√d), 0.01γ/√d)`,
/// capped at `minibatch_cap`.
pub fn default_batch_size(cfg: &AlgoConfig, dim: usize, p: usize, r: f64) -> usize {
    let d = dim as f64;
    let eps = cfg.eps.max(f64::MIN_POSITIVE);
    let delta = (0.01 * (cfg.gamma / eps).sqrt() / (r * d.sqrt())).min(0.01 * cfg.gamma / d.sqrt());
    let size = cfg.c_batch * d * (p * p) as f64 * (d / eps).ln().max(1.0) / (delta * delta);
    if size.is_finite() {
        (size.ceil() as usize).clamp(1, cfg.minibatch_cap)
    } else {
        cfg.minibatch_cap
    }
}

fn stream_plan(cfg: &AlgoConfig, dim: usize, opts: &StreamOptions) -> StreamPlan {
    let p = cfg.certificate_power(dim);
    StreamPlan {
        batch_size: opts
            .batch_size
            .unwrap_or_else(|| default_batch_size(cfg, dim, p, opts.r_radius)),
        mean: MeanPlan::new(
            cfg.c_m,
            opts.r_radius,
            dim,
            cfg.gamma,
            cfg.cert_failure_prob,
            cfg.mean_batch_cap,
        ),
        fail_prob: cfg.cert_failure_prob,
        c_q: cfg.c_q,
    }
}

struct Progress {
    best: Option<Candidate>,
    accepted: bool,
    iterations: (usize, usize),
    filters_created: usize,
    stack: FilterStack,
}

fn run(
    feed: &mut SampleFeed<'_>,
    cfg: &AlgoConfig,
    opts: &StreamOptions,
    progress: &mut Progress,
) -> Result<()> {
    let d = feed.dim();
    let meter = feed.meter();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plan = stream_plan(cfg, d, opts);
    let r = opts.r_radius;
    let mut persistent = meter.charge(progress.stack.stored_scalars() + d);
    let mut buf = vec![0.0; d];

    // Norm prune at the ε-tail of ‖X‖.
    let radius = if cfg.eps > 0.0 {
        streaming_quantile(
            || {
                feed.draw(&mut buf)?;
                Ok(norm(&buf))
            },
            cfg.eps,
            plan.fail_prob,
            plan.c_q,
            &meter,
        )?
        .value
    } else {
        f64::INFINITY
    };
    progress.stack = FilterStack::new(radius * radius)?;
    let sigma_op = stream_opnorm_bracket(
        feed,
        &progress.stack,
        cfg.eps,
        plan.fail_prob,
        plan.c_q,
        plan.mean,
    )?
    .value;
    let delta = cfg.delta_slack * cfg.gamma / (r * r * d as f64) * sigma_op;

    for k in 1..=cfg.k_end(d) {
        let p = cfg.stage_power(d, k);
        for t in 1..=cfg.t_end(d) {
            progress.iterations = (k, t);
            let stack = &progress.stack;
            let cand = stream_sample_top_eigenvector(feed, stack, cfg, &plan, &mut rng)?;
            let accepted = cand.accepted;
            if progress
                .best
                .as_ref()
                .is_none_or(|b| accepted || cand.sigma_robust > b.sigma_robust)
            {
                progress.best = Some(cand);
            }
            if accepted {
                progress.accepted = true;
                return Ok(());
            }
            if cfg.eps == 0.0 {
                // Nothing is ever above the trivial quantile.
                continue;
            }

            let mut probe = [gaussian(d, &mut rng)];
            stream_power_apply(feed, stack, p, plan.batch_size, &mut probe)?;
            let [mut v] = probe;
            normalize(&mut v);
            let q = streaming_quantile(
                || {
                    feed.draw_filtered(stack, &mut buf)?;
                    Ok(dot(&v, &buf).powi(2))
                },
                (3.0 * cfg.eps).min(0.999),
                plan.fail_prob,
                plan.c_q,
                &meter,
            )?;
            let cutoff = q.value.max(0.1 / d as f64 * sigma_op);
            let sigma_hat = stream_trimmed_variance(feed, stack, &v, cutoff, plan.mean)?.value;
            let t_hat = 2.35 * cfg.gamma * sigma_hat;
            let big_r = if radius.is_finite() {
                radius * radius
            } else {
                return Err(Error::Internal("missing prune radius".into()));
            };
            let outcome = hard_thresholding_filter(
                &v,
                cutoff,
                |thr| {
                    let keep = cutoff.max(thr);
                    Ok(stream_mean_estimate(feed, stack, plan.mean, |x| {
                        let f = dot(&v, x).powi(2);
                        (f > cutoff && f <= keep).then_some(f)
                    })?
                    .value)
                },
                t_hat,
                big_r,
                delta,
                // Every positive score exceeds the cutoff.
                cutoff,
                &mut rng,
            )?;
            if let Some(entry) = outcome.new_entry {
                progress.stack.push(entry);
                progress.filters_created += 1;
                persistent.resize(progress.stack.stored_scalars() + d);
            }
        }
    }
    Ok(())
}

/// Streaming robust PCA over a single pass of `source`.
pub fn streaming_robust_pca(
    source: &mut dyn SampleSource,
    cfg: &AlgoConfig,
    opts: &StreamOptions,
) -> Result<(PcaResult, StreamStats)> {
    cfg.validate()?;
    if cfg.eps > 0.0 && 20.0 * cfg.eps >= cfg.gamma {
        return Err(Error::invalid(format!(
            "streaming requires 20*eps < gamma strictly: eps = {}, gamma = {}",
            cfg.eps, cfg.gamma
        )));
    }
    if !(opts.r_radius >= 1.0) {
        return Err(Error::invalid("r_radius must be at least 1"));
    }
    let start = Instant::now();
    let d = source.dim();
    let mut feed = SampleFeed::new(source).with_budget(opts.sample_budget.unwrap_or(u64::MAX));
    let mut progress = Progress {
        best: None,
        accepted: false,
        iterations: (0, 0),
        filters_created: 0,
        stack: FilterStack::default(),
    };
    match run(&mut feed, cfg, opts, &mut progress) {
        Ok(()) => {}
        Err(Error::StreamExhausted { consumed }) => {
            log::info!("sample budget exhausted after {consumed} samples; returning fallback");
        }
        Err(e) => return Err(e),
    }
    let peak = feed.meter().peak();
    if let Some(budget) = opts.memory_budget {
        if peak > budget {
            return Err(Error::Internal(format!(
                "peak resident scalars {peak} exceed the budget {budget}"
            )));
        }
    }
    let (u, sigma_robust, status) = match (&progress.best, progress.accepted) {
        (Some(c), true) => (c.u.clone(), c.sigma_robust, PcaStatus::Accepted),
        (Some(c), false) => (c.u.clone(), c.sigma_robust, PcaStatus::FallbackBest),
        (None, _) => (vec![0.0; d], 0.0, PcaStatus::Failed),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let stats = StreamStats {
        samples_consumed: feed.consumed(),
        filters_stored: progress.stack.len(),
        peak_resident_scalars: peak,
        wall_time_secs: elapsed,
    };
    let result = PcaResult {
        u,
        sigma_robust,
        status,
        iterations: progress.iterations,
        filters_created: progress.filters_created,
        potential_trace: None,
        elapsed_secs: elapsed,
        samples_consumed: Some(stats.samples_consumed),
        final_stack: progress.stack,
    };
    Ok((result, stats))
}
