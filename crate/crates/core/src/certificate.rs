//! Candidate directions and the acceptance test.
//!
//! A candidate is `u = B^p z / ‖B^p z‖` for a Gaussian `z`. It is accepted
//! when its robust variance `σ̂_u` is close to its empirical Rayleigh quotient
//! under the current weights (so the weights did not inflate that direction),
//! and that Rayleigh quotient is close to the top eigenvalue of `Σ_{P_w}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    stream_trimmed_variance, streaming_quantile, trimmed_variance, weighted_quantile, MeanPlan,
};
use crate::linops::{
    approx_power_iteration, power_iteration, stream_power_apply, stream_rayleigh,
    LinearOperator, MatrixPowerEstimate, SecondMomentOp,
};
use crate::stream::SampleFeed;
use crate::types::{AlgoConfig, FilterStack, WeightedDataset};
use crate::vector::{dot, gaussian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub u: Vec<f64>,
    /// `u^T Σ_{P_w} u`.
    pub rayleigh_emp: f64,
    /// `σ̂_u`.
    pub sigma_robust: f64,
    /// `r̂`, the power-iteration estimate of `‖Σ_{P_w}‖_op`.
    pub reference_rayleigh: f64,
    pub accepted: bool,
}

/// Both acceptance conditions.
pub fn accepts(cfg: &AlgoConfig, sigma_robust: f64, rayleigh_emp: f64, reference: f64) -> bool {
    sigma_robust >= (1.0 - cfg.accept_slack()) * rayleigh_emp
        && rayleigh_emp >= (1.0 - cfg.rayleigh_slack()) * reference
}

const START_RETRIES: usize = 8;

/// Unit direction of `op^p z` for a fresh Gaussian `z`, retrying when `z`
/// lands in the kernel.
pub fn random_power_direction(
    op: &dyn LinearOperator,
    p: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let est = MatrixPowerEstimate::power_of(op, p);
    for _ in 0..START_RETRIES {
        match est.apply_direction(&gaussian(op.dim(), rng)) {
            Ok((u, _)) => return Ok(u),
            Err(Error::DegenerateState(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::degenerate(format!(
        "B^{p} annihilated {START_RETRIES} Gaussian starts"
    )))
}

/// Robust variance of a unit direction: trimmed at the `3ε` quantile.
pub fn robust_variance(ds: &WeightedDataset, u: &[f64], eps: f64) -> Result<f64> {
    let scores: Vec<f64> = ds.points().rows().map(|x| dot(u, x).powi(2)).collect();
    let cutoff = weighted_quantile(ds, &scores, (3.0 * eps).min(0.999))?.value;
    Ok(trimmed_variance(ds, u, cutoff)?.value)
}

/// Batch candidate generation and acceptance test.
pub fn sample_top_eigenvector(
    ds: &WeightedDataset,
    cfg: &AlgoConfig,
    rng: &mut impl Rng,
) -> Result<Candidate> {
    let d = ds.dim();
    let normalized = SecondMomentOp::normalized(ds).with_exec(cfg.exec);
    let (_, reference) =
        power_iteration(&normalized, cfg.reference_power(d, cfg.cert_failure_prob), rng)?;
    let unnormalized = SecondMomentOp::unnormalized(ds).with_exec(cfg.exec);
    let u = random_power_direction(&unnormalized, cfg.certificate_power(d), rng)?;
    let rayleigh_emp = dot(&u, &normalized.apply(&u)?);
    let sigma_robust = robust_variance(ds, &u, cfg.eps)?;
    Ok(Candidate {
        accepted: accepts(cfg, sigma_robust, rayleigh_emp, reference),
        u,
        rayleigh_emp,
        sigma_robust,
        reference_rayleigh: reference,
    })
}

/// Sample sizes used by the streaming certificate and driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamPlan {
    pub batch_size: usize,
    pub mean: MeanPlan,
    pub fail_prob: f64,
    pub c_q: f64,
}

/// Streaming candidate: minibatch reference power iteration, minibatch
/// candidate, streaming quantile and median-of-means variance.
pub fn stream_sample_top_eigenvector(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    cfg: &AlgoConfig,
    plan: &StreamPlan,
    rng: &mut impl Rng,
) -> Result<Candidate> {
    let d = feed.dim();
    let reps = ((1.0 / cfg.cert_failure_prob).log2().ceil() as usize).max(1);
    let reference = approx_power_iteration(
        feed,
        stack,
        cfg.reference_power(d, cfg.cert_failure_prob),
        reps,
        plan.batch_size,
        rng,
    )?;
    let mut probe = [gaussian(d, rng)];
    stream_power_apply(feed, stack, cfg.certificate_power(d), plan.batch_size, &mut probe)?;
    let [u] = probe;
    let rayleigh_emp = stream_rayleigh(feed, stack, &u, plan.batch_size)?;
    let cutoff = if cfg.eps > 0.0 {
        let meter = feed.meter();
        let mut buf = vec![0.0; d];
        streaming_quantile(
            || {
                feed.draw_filtered(stack, &mut buf)?;
                Ok(dot(&u, &buf).powi(2))
            },
            (3.0 * cfg.eps).min(0.999),
            plan.fail_prob,
            plan.c_q,
            &meter,
        )?
        .value
    } else {
        f64::INFINITY
    };
    let sigma_robust = stream_trimmed_variance(feed, stack, &u, cutoff, plan.mean)?.value;
    Ok(Candidate {
        accepted: accepts(cfg, sigma_robust, rayleigh_emp, reference),
        u,
        rayleigh_emp,
        sigma_robust,
        reference_rayleigh: reference,
    })
}
