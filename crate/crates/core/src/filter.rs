//! Randomized hard-thresholding filter.
//!
//! Scores are `τ(x) = f(x)·1(f(x) > L)` with `f(x) = (v^T x)²`. While the mean
//! score is too large, draw `r_ℓ ~ U([0, r_{ℓ-1}])` and drop every point with
//! `τ(x) > r_ℓ`. A point with score `τ` survives a round with probability
//! `1 − τ/r`, so removal is proportional to score.
//!
//! Since thresholds only shrink, the cumulative effect of all rounds is one
//! cut `τ(x) ≤ r_final`, i.e. `f(x) ≤ max(L, r_final)`: the whole filter call
//! compacts to a single [`FilterEntry`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{FilterEntry, WeightedDataset};
use crate::vector::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// `None` when the loop never fired.
    pub new_entry: Option<FilterEntry>,
    pub rounds: usize,
    pub initial_mean_score: f64,
    pub final_mean_score: f64,
    /// Final threshold `r` (equal to `R` when no round ran).
    pub final_threshold: f64,
    /// Points removed; only known in batch mode.
    pub removed_count: Option<usize>,
}

/// Exit level `(5/2)(T̂ + δ)` of the filter loop.
pub fn exit_level(t_hat: f64, delta: f64) -> f64 {
    2.5 * (t_hat + delta)
}

fn round_guard(big_r: f64, score_floor: f64) -> usize {
    let span = if score_floor > 0.0 && big_r > score_floor {
        (big_r / score_floor).log2().ceil().clamp(1.0, 4096.0)
    } else {
        1.0
    };
    64 * span as usize
}

/// The filter loop.
///
/// `mean_score(r)` must return `E_P[w(x)·τ(x)·1(τ(x) ≤ r)]` (exactly in batch
/// mode, estimated in streaming mode). `big_r` must dominate every surviving
/// score; `score_floor` is the smallest positive score and only bounds the
/// loop guard.
#[allow(clippy::too_many_arguments)]
pub fn hard_thresholding_filter(
    v: &[f64],
    cutoff: f64,
    mut mean_score: impl FnMut(f64) -> Result<f64>,
    t_hat: f64,
    big_r: f64,
    delta: f64,
    score_floor: f64,
    rng: &mut impl Rng,
) -> Result<FilterOutcome> {
    if !(t_hat >= 0.0) || !(delta >= 0.0) {
        return Err(Error::invalid(format!(
            "filter levels must be nonnegative: T = {t_hat}, delta = {delta}"
        )));
    }
    if !(big_r >= 0.0) || !big_r.is_finite() {
        return Err(Error::invalid(format!("score range R = {big_r} must be finite")));
    }
    let level = exit_level(t_hat, delta);
    let guard = round_guard(big_r, score_floor);
    let mut r = big_r;
    let initial = mean_score(r)?;
    let mut mean = initial;
    let mut rounds = 0usize;
    while mean > level {
        rounds += 1;
        if rounds > guard {
            return Err(Error::Internal(format!(
                "filter did not terminate after {guard} rounds (mean score {mean}, level {level})"
            )));
        }
        r *= rng.random::<f64>();
        mean = mean_score(r)?;
    }
    let new_entry = if rounds > 0 {
        let thr = cutoff.max(r).max(f64::MIN_POSITIVE);
        Some(FilterEntry::new(v.to_vec(), thr)?)
    } else {
        None
    };
    Ok(FilterOutcome {
        new_entry,
        rounds,
        initial_mean_score: initial,
        final_mean_score: mean,
        final_threshold: r,
        removed_count: None,
    })
}

/// Survivor scores `τ(x)` in survivor order.
pub fn survivor_scores(ds: &WeightedDataset, v: &[f64], cutoff: f64) -> Vec<f64> {
    ds.survivor_rows()
        .map(|x| {
            let f = dot(v, x).powi(2);
            if f > cutoff {
                f
            } else {
                0.0
            }
        })
        .collect()
}

/// Batch filter: exact mean scores, `R` = the largest survivor score.
/// Returns the outcome together with the filtered dataset.
pub fn filter_batch(
    ds: &WeightedDataset,
    v: &[f64],
    cutoff: f64,
    t_hat: f64,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<(FilterOutcome, WeightedDataset)> {
    if v.len() != ds.dim() {
        return Err(Error::invalid("filter direction dimension mismatch"));
    }
    let tau = survivor_scores(ds, v, cutoff);
    let n = ds.len().max(1) as f64;
    let big_r = tau.iter().copied().fold(0.0, f64::max);
    let floor = tau
        .iter()
        .copied()
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut outcome = hard_thresholding_filter(
        v,
        cutoff,
        |r| Ok(tau.iter().filter(|&&t| t <= r).sum::<f64>() / n),
        t_hat,
        big_r,
        delta,
        floor,
        rng,
    )?;
    let after = match &outcome.new_entry {
        Some(entry) => ds.with_filter(entry.clone())?,
        None => ds.clone(),
    };
    outcome.removed_count = Some(ds.survivor_count() - after.survivor_count());
    Ok((outcome, after))
}
