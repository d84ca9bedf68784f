//! Robust scalar estimators: score quantiles, trimmed means and their
//! streaming counterparts.
//!
//! Expectations are taken under `P` (divided by `n`, not by the surviving
//! mass); quantiles are taken under `P_w`, i.e. over survivors.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::MatrixPowerEstimate;
use crate::stream::{MemoryMeter, SampleFeed};
use crate::types::{FilterStack, WeightedDataset};
use crate::vector::{dot, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileThreshold {
    pub value: f64,
    pub target_tail: f64,
    /// Fraction of (sampled) survivors whose score is strictly above `value`.
    pub attained_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    TrimmedVariance,
    OpnormBracket,
    StreamMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScalar {
    pub value: f64,
    pub kind: ScalarKind,
}

/// `(v^T x)²`.
pub fn score_projection(v: &[f64], x: &[f64]) -> Result<f64> {
    if v.len() != x.len() {
        return Err(Error::invalid(format!(
            "direction of length {} against point of length {}",
            v.len(),
            x.len()
        )));
    }
    Ok(dot(v, x).powi(2))
}

/// `‖M x‖²`. Only used by oracles and tests; the drivers score with a single
/// random direction instead.
pub fn score_g(est: &MatrixPowerEstimate<'_>, x: &[f64]) -> Result<f64> {
    Ok(norm_sq(&est.apply(x)?))
}

fn check_tail(tail: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tail) {
        return Err(Error::invalid(format!("tail {tail} is outside [0, 1)")));
    }
    Ok(())
}

/// Upper quantile of `values`: the smallest value `L` present in the list with
/// `#{s > L} ≤ ⌊tail·m⌋`. Reorders `values`.
fn upper_quantile(values: &mut [f64], tail: f64) -> QuantileThreshold {
    let m = values.len();
    let allowed = ((tail * m as f64) + 1e-9).floor() as usize;
    let k = allowed.min(m - 1);
    // (k+1)-th largest.
    let (_, l, _) = values.select_nth_unstable_by(m - 1 - k, |a, b| a.total_cmp(b));
    let l = *l;
    let above = values.iter().filter(|&&s| s > l).count();
    QuantileThreshold {
        value: l,
        target_tail: tail,
        attained_tail: above as f64 / m as f64,
    }
}

/// Upper `tail`-quantile of per-point `scores` over the survivors of `ds`.
///
/// `scores` is indexed by point (length `n`); entries of removed points are
/// ignored. Tail mass is rounded down, so at most `⌊tail·m⌋` survivors score
/// strictly above the returned value.
pub fn weighted_quantile(
    ds: &WeightedDataset,
    scores: &[f64],
    tail: f64,
) -> Result<QuantileThreshold> {
    check_tail(tail)?;
    if scores.len() != ds.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} points",
            scores.len(),
            ds.len()
        )));
    }
    if ds.survivor_count() == 0 {
        return Err(Error::degenerate("quantile over an empty survivor set"));
    }
    let mut vals: Vec<f64> = ds.survivors().iter().map(|&i| scores[i as usize]).collect();
    Ok(upper_quantile(&mut vals, tail))
}

/// Number of samples the streaming quantile draws.
pub fn streaming_quantile_samples(tail: f64, fail_prob: f64, c_q: f64) -> usize {
    (c_q * (1.0 / fail_prob).ln().max(1.0) / tail).ceil().max(1.0) as usize
}

/// Streaming upper quantile: draws `m = ⌈c_q·ln(1/fail)/tail⌉` scores and
/// returns the `⌈m·tail⌉`-th largest. The buffer is charged to `meter` and
/// released on return.
pub fn streaming_quantile(
    mut draw: impl FnMut() -> Result<f64>,
    tail: f64,
    fail_prob: f64,
    c_q: f64,
    meter: &Rc<MemoryMeter>,
) -> Result<QuantileThreshold> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::invalid(format!("tail {tail} is outside (0, 1)")));
    }
    if !(fail_prob > 0.0 && fail_prob < 1.0) {
        return Err(Error::invalid(format!("fail_prob {fail_prob} is outside (0, 1)")));
    }
    let m = streaming_quantile_samples(tail, fail_prob, c_q);
    let _charge = meter.charge(m);
    let mut buf = Vec::with_capacity(m);
    for _ in 0..m {
        buf.push(draw()?);
    }
    let rank = ((m as f64 * tail).ceil() as usize).clamp(1, m);
    let (_, l, _) = buf.select_nth_unstable_by(m - rank, |a, b| a.total_cmp(b));
    let l = *l;
    let above = buf.iter().filter(|&&s| s > l).count();
    Ok(QuantileThreshold {
        value: l,
        target_tail: tail,
        attained_tail: above as f64 / m as f64,
    })
}

/// `E_P[w(x)·(v^T x)²·1((v^T x)² ≤ L)]`.
pub fn trimmed_variance(ds: &WeightedDataset, v: &[f64], cutoff: f64) -> Result<RobustScalar> {
    if v.len() != ds.dim() {
        return Err(Error::invalid("direction dimension mismatch"));
    }
    if ds.is_empty() {
        return Err(Error::degenerate("trimmed variance of an empty dataset"));
    }
    let mut acc = 0.0;
    for x in ds.survivor_rows() {
        let f = dot(v, x).powi(2);
        if f <= cutoff {
            acc += f;
        }
    }
    Ok(RobustScalar {
        value: acc / ds.len() as f64,
        kind: ScalarKind::TrimmedVariance,
    })
}

/// Trimmed mean of `‖x‖²` at tail `3ε`: a crude bracket on `‖Σ‖_op` (it sits
/// between `‖Σ‖_op` and `tr Σ` up to `1 ± O(γ)`).
pub fn opnorm_bracket(ds: &WeightedDataset, eps: f64) -> Result<RobustScalar> {
    if ds.survivor_count() == 0 {
        return Err(Error::degenerate("operator-norm bracket over no survivors"));
    }
    let norms: Vec<f64> = ds.points().rows().map(norm_sq).collect();
    let tail = (3.0 * eps).min(0.999);
    let l = weighted_quantile(ds, &norms, tail)?.value;
    let acc: f64 = ds
        .survivors()
        .iter()
        .map(|&i| norms[i as usize])
        .filter(|&s| s <= l)
        .sum();
    Ok(RobustScalar {
        value: acc / ds.len() as f64,
        kind: ScalarKind::OpnormBracket,
    })
}

/// Sample plan of the median-of-means estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanPlan {
    pub groups: usize,
    pub group_size: usize,
}

impl MeanPlan {
    /// `⌈log₂(1/fail)⌉` groups of `⌈c_m·r⁴d²/γ²⌉` samples (capped).
    pub fn new(c_m: f64, r: f64, dim: usize, gamma: f64, fail_prob: f64, cap: usize) -> Self {
        let groups = ((1.0 / fail_prob).log2().ceil() as usize).max(1);
        let d = dim as f64;
        let size = (c_m * r.powi(4) * d * d / (gamma * gamma)).ceil();
        let group_size = if size.is_finite() {
            (size as usize).clamp(1, cap)
        } else {
            cap
        };
        MeanPlan { groups, group_size }
    }

    pub fn samples(&self) -> u64 {
        self.groups as u64 * self.group_size as u64
    }
}

/// Median-of-means estimate of `E_P[w(x)·h(x)]` where `h` returns `None` for
/// points it discards (for instance scores above a cutoff).
pub fn stream_mean_estimate(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    plan: MeanPlan,
    mut h: impl FnMut(&[f64]) -> Option<f64>,
) -> Result<RobustScalar> {
    let d = feed.dim();
    let meter = feed.meter();
    let _charge = meter.charge(d + plan.groups);
    let mut buf = vec![0.0; d];
    let mut means = Vec::with_capacity(plan.groups);
    for _ in 0..plan.groups {
        let mut acc = 0.0;
        for _ in 0..plan.group_size {
            if feed.draw_weighted(stack, &mut buf)? {
                if let Some(val) = h(&buf) {
                    acc += val;
                }
            }
        }
        means.push(acc / plan.group_size as f64);
    }
    means.sort_by(f64::total_cmp);
    let g = means.len();
    let value = if g % 2 == 1 {
        means[g / 2]
    } else {
        0.5 * (means[g / 2 - 1] + means[g / 2])
    };
    Ok(RobustScalar {
        value: value.max(0.0),
        kind: ScalarKind::StreamMean,
    })
}

/// Streaming trimmed variance `E_P[w·f·1(f ≤ L)]` with `f = (v^T x)²`.
pub fn stream_trimmed_variance(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    v: &[f64],
    cutoff: f64,
    plan: MeanPlan,
) -> Result<RobustScalar> {
    if v.len() != feed.dim() {
        return Err(Error::invalid("direction dimension mismatch"));
    }
    stream_mean_estimate(feed, stack, plan, |x| {
        let f = dot(v, x).powi(2);
        (f <= cutoff).then_some(f)
    })
}

/// Streaming analogue of [`opnorm_bracket`]: streaming `3ε`-quantile of `‖x‖²`
/// under `P_w`, then a median-of-means trimmed mean.
pub fn stream_opnorm_bracket(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    eps: f64,
    fail_prob: f64,
    c_q: f64,
    plan: MeanPlan,
) -> Result<RobustScalar> {
    let d = feed.dim();
    let meter = feed.meter();
    let cutoff = if eps > 0.0 {
        let mut buf = vec![0.0; d];
        streaming_quantile(
            || {
                feed.draw_filtered(stack, &mut buf)?;
                Ok(norm_sq(&buf))
            },
            (3.0 * eps).min(0.999),
            fail_prob,
            c_q,
            &meter,
        )?
        .value
    } else {
        f64::INFINITY
    };
    let mut est = stream_mean_estimate(feed, stack, plan, |x| {
        let s = norm_sq(x);
        (s <= cutoff).then_some(s)
    })?;
    est.kind = ScalarKind::OpnormBracket;
    Ok(est)
}
