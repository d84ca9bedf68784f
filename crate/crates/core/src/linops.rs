//! Implicit second-moment operators.
//!
//! The weighted second moment `B = E_P[w(X) X X^T]` is never formed. Everything
//! touches it through `z ↦ Σ_x w(x)·x·(x^T z)`, one pass over the data with
//! `O(d)` extra memory. Powers `B^p z` are successive matvecs; in the streaming
//! model each factor is a fresh minibatch estimate `Ŵ²·Σ̂_ℓ`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stream::SampleFeed;
use crate::types::{ExecMode, FilterStack, WeightedDataset};
use crate::vector::{axpy, dot, gaussian, norm_sq, normalize, scale};

/// A symmetric linear map on `R^d` accessed only through matvecs.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>>;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `B = E_P[w X X^T]`.
    Unnormalized,
    /// `Σ_{P_w} = B / E_P[w]`.
    Normalized,
}

/// Batch second-moment operator over a weighted dataset.
#[derive(Debug, Clone, Copy)]
pub struct SecondMomentOp<'a> {
    ds: &'a WeightedDataset,
    normalization: Normalization,
    exec: ExecMode,
}

const PAR_CHUNK: usize = 4096;

impl<'a> SecondMomentOp<'a> {
    pub fn new(ds: &'a WeightedDataset, normalization: Normalization) -> Self {
        SecondMomentOp {
            ds,
            normalization,
            exec: ExecMode::Deterministic,
        }
    }

    pub fn unnormalized(ds: &'a WeightedDataset) -> Self {
        Self::new(ds, Normalization::Unnormalized)
    }

    pub fn normalized(ds: &'a WeightedDataset) -> Self {
        Self::new(ds, Normalization::Normalized)
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn dataset(&self) -> &'a WeightedDataset {
        self.ds
    }

    fn raw_sum(&self, z: &[f64]) -> Vec<f64> {
        let d = self.ds.dim();
        let points = self.ds.points();
        match self.exec {
            ExecMode::Deterministic => {
                let mut acc = vec![0.0; d];
                for &i in self.ds.survivors() {
                    let x = points.row(i as usize);
                    axpy(dot(x, z), x, &mut acc);
                }
                acc
            }
            ExecMode::Parallel => self
                .ds
                .survivors()
                .par_chunks(PAR_CHUNK)
                .map(|chunk| {
                    let mut acc = vec![0.0; d];
                    for &i in chunk {
                        let x = points.row(i as usize);
                        axpy(dot(x, z), x, &mut acc);
                    }
                    acc
                })
                .reduce(
                    || vec![0.0; d],
                    |mut a, b| {
                        axpy(1.0, &b, &mut a);
                        a
                    },
                ),
        }
    }
}

impl LinearOperator for SecondMomentOp<'_> {
    fn dim(&self) -> usize {
        self.ds.dim()
    }

    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        apply_second_moment(self, z)
    }
}

/// `(1/n)·Σ w(x)·x·(x^T z)`, divided by the surviving mass when normalized.
pub fn apply_second_moment(op: &SecondMomentOp<'_>, z: &[f64]) -> Result<Vec<f64>> {
    let d = op.ds.dim();
    if z.len() != d {
        return Err(Error::invalid(format!(
            "vector of length {} for dimension {d}",
            z.len()
        )));
    }
    let denom = match op.normalization {
        Normalization::Unnormalized => op.ds.len() as f64,
        Normalization::Normalized => {
            if op.ds.survivor_count() == 0 {
                return Err(Error::degenerate(
                    "normalized second moment with zero surviving mass",
                ));
            }
            op.ds.survivor_count() as f64
        }
    };
    let mut out = op.raw_sum(z);
    scale(&mut out, 1.0 / denom);
    Ok(out)
}

/// One minibatch factor `scale·(1/b)·Σ_{x∈S} x x^T`.
#[derive(Debug, Clone)]
pub struct MinibatchFactor {
    dim: usize,
    scale: f64,
    points: Vec<f64>,
}

impl MinibatchFactor {
    pub fn batch_size(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl LinearOperator for MinibatchFactor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::invalid("dimension mismatch in minibatch factor"));
        }
        let mut acc = vec![0.0; self.dim];
        for x in self.points.chunks_exact(self.dim) {
            axpy(dot(x, z), x, &mut acc);
        }
        let b = self.batch_size().max(1) as f64;
        scale(&mut acc, self.scale / b);
        Ok(acc)
    }
}

enum Factors<'a> {
    Repeated {
        op: &'a dyn LinearOperator,
        power: usize,
    },
    Minibatch(Vec<MinibatchFactor>),
}

/// `M = factor_p ··· factor_1`, applied without materialization.
pub struct MatrixPowerEstimate<'a> {
    dim: usize,
    factors: Factors<'a>,
}

impl<'a> MatrixPowerEstimate<'a> {
    /// `op^power`.
    pub fn power_of(op: &'a dyn LinearOperator, power: usize) -> Self {
        MatrixPowerEstimate {
            dim: op.dim(),
            factors: Factors::Repeated { op, power },
        }
    }

    pub fn from_minibatches(dim: usize, factors: Vec<MinibatchFactor>) -> Self {
        MatrixPowerEstimate {
            dim,
            factors: Factors::Minibatch(factors),
        }
    }

    pub fn power(&self) -> usize {
        match &self.factors {
            Factors::Repeated { power, .. } => *power,
            Factors::Minibatch(f) => f.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn for_each_factor(
        &self,
        mut f: impl FnMut(&dyn LinearOperator) -> Result<()>,
    ) -> Result<()> {
        match &self.factors {
            Factors::Repeated { op, power } => {
                for _ in 0..*power {
                    f(*op)?;
                }
            }
            Factors::Minibatch(fs) => {
                for factor in fs {
                    f(factor)?;
                }
            }
        }
        Ok(())
    }

    /// `M z`, exactly.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        matrix_power_apply(self, z)
    }

    /// Direction of `M z`, renormalizing after every factor so that large
    /// powers neither overflow nor underflow. Returns the unit vector and
    /// `ln ‖M z‖`.
    pub fn apply_direction(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if z.len() != self.dim {
            return Err(Error::invalid("dimension mismatch in matrix power"));
        }
        let mut y = z.to_vec();
        let mut log_norm = normalize(&mut y).ln();
        if !log_norm.is_finite() {
            return Err(Error::degenerate("zero start vector"));
        }
        self.for_each_factor(|op| {
            y = op.apply(&y)?;
            let n = normalize(&mut y);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::degenerate("matrix power annihilated the vector"));
            }
            log_norm += n.ln();
            Ok(())
        })?;
        Ok((y, log_norm))
    }
}

/// `M z` by `p` successive matvecs.
pub fn matrix_power_apply(est: &MatrixPowerEstimate<'_>, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != est.dim {
        return Err(Error::invalid(format!(
            "vector of length {} for dimension {}",
            z.len(),
            est.dim
        )));
    }
    let mut y = z.to_vec();
    est.for_each_factor(|op| {
        y = op.apply(&y)?;
        Ok(())
    })?;
    Ok(y)
}

const POWER_RETRIES: usize = 8;

/// Power iteration from a Gaussian start. Returns the unit iterate and its
/// Rayleigh quotient `y^T A y`.
pub fn power_iteration(
    op: &dyn LinearOperator,
    p_iters: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, f64)> {
    if p_iters == 0 {
        return Err(Error::invalid("power iteration needs at least one step"));
    }
    let est = MatrixPowerEstimate::power_of(op, p_iters);
    for _ in 0..POWER_RETRIES {
        let g = gaussian(op.dim(), rng);
        match est.apply_direction(&g) {
            Ok((y, _)) => {
                let ay = op.apply(&y)?;
                return Ok((y.clone(), dot(&y, &ay)));
            }
            Err(Error::DegenerateState(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::degenerate(format!(
        "operator annihilated {POWER_RETRIES} Gaussian starts"
    )))
}

/// Draws `batch_size` samples from `P` and returns the surviving fraction `Ŵ`.
fn estimate_surviving_fraction(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    batch_size: usize,
    buf: &mut [f64],
) -> Result<f64> {
    let mut kept = 0usize;
    for _ in 0..batch_size {
        if feed.draw_weighted(stack, buf)? {
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::degenerate(
            "filter stack rejected every sample of the mass-estimation batch",
        ));
    }
    Ok(kept as f64 / batch_size as f64)
}

/// Minibatch estimator of `B^p`: one batch from `P` estimates `Ŵ`, then `p`
/// batches from `P_w` (by rejection) give factors `Ŵ²·Σ̂_ℓ`. The factors are
/// retained, so this is meant for small problems and for tests; the drivers
/// use [`stream_power_apply`], which never stores a batch.
pub fn build_minibatch_power(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    p: usize,
    batch_size: usize,
) -> Result<MatrixPowerEstimate<'static>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let d = feed.dim();
    stack.check_dim(d)?;
    let mut buf = vec![0.0; d];
    let w_hat = estimate_surviving_fraction(feed, stack, batch_size, &mut buf)?;
    let mut factors = Vec::with_capacity(p);
    for _ in 0..p {
        let mut points = Vec::with_capacity(batch_size * d);
        for _ in 0..batch_size {
            feed.draw_filtered(stack, &mut buf)?;
            points.extend_from_slice(&buf);
        }
        factors.push(MinibatchFactor {
            dim: d,
            scale: w_hat * w_hat,
            points,
        });
    }
    Ok(MatrixPowerEstimate::from_minibatches(d, factors))
}

/// Applies a fresh minibatch estimate of `B^p` to every probe in place, in one
/// pass over `(p+1)·batch_size` accepted samples with `O(k·d)` memory.
///
/// Probes are renormalized after every factor (the direction is what callers
/// use); the accumulated log-scale of each probe is returned alongside `Ŵ`.
/// Given the same samples, the result matches
/// [`build_minibatch_power`]`(..).apply_direction(z)`.
pub fn stream_power_apply(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    p: usize,
    batch_size: usize,
    probes: &mut [Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let d = feed.dim();
    stack.check_dim(d)?;
    let meter = feed.meter();
    let _charge = meter.charge(d * (1 + 2 * probes.len()));
    let mut buf = vec![0.0; d];
    let w_hat = estimate_surviving_fraction(feed, stack, batch_size, &mut buf)?;
    let mut log_norms = Vec::with_capacity(probes.len());
    for z in probes.iter_mut() {
        if z.len() != d {
            return Err(Error::invalid("probe dimension mismatch"));
        }
        log_norms.push(normalize(z).ln());
    }
    let factor_scale = w_hat * w_hat / batch_size as f64;
    let mut acc = vec![vec![0.0; d]; probes.len()];
    for _ in 0..p {
        for a in acc.iter_mut() {
            a.iter_mut().for_each(|v| *v = 0.0);
        }
        for _ in 0..batch_size {
            feed.draw_filtered(stack, &mut buf)?;
            for (a, z) in acc.iter_mut().zip(probes.iter()) {
                axpy(dot(&buf, z), &buf, a);
            }
        }
        for ((a, z), ln) in acc.iter_mut().zip(probes.iter_mut()).zip(log_norms.iter_mut()) {
            scale(a, factor_scale);
            std::mem::swap(a, z);
            let n = normalize(z);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::degenerate("minibatch power annihilated a probe"));
            }
            *ln += n.ln();
        }
    }
    Ok((w_hat, log_norms))
}

/// `y^T Σ̂_{P_w} y / ‖y‖²` from a fresh batch drawn from `P_w`.
pub fn stream_rayleigh(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    y: &[f64],
    batch_size: usize,
) -> Result<f64> {
    let d = feed.dim();
    let meter = feed.meter();
    let _charge = meter.charge(d);
    let mut buf = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..batch_size.max(1) {
        feed.draw_filtered(stack, &mut buf)?;
        acc += dot(&buf, y).powi(2);
    }
    let ny = norm_sq(y);
    if ny == 0.0 {
        return Err(Error::degenerate("zero vector in Rayleigh quotient"));
    }
    Ok(acc / batch_size.max(1) as f64 / ny)
}

/// Boosted power iteration on minibatch estimates: the maximum over `reps`
/// of Rayleigh quotients `y^T Σ̂ y/‖y‖²` with `y = M̂ g` and a fresh `Σ̂`.
pub fn approx_power_iteration(
    feed: &mut SampleFeed<'_>,
    stack: &FilterStack,
    p: usize,
    reps: usize,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::invalid("approx_power_iteration needs reps >= 1"));
    }
    let d = feed.dim();
    let mut best = 0.0f64;
    for _ in 0..reps {
        let mut probe = [gaussian(d, rng)];
        stream_power_apply(feed, stack, p, batch_size, &mut probe)?;
        let r = stream_rayleigh(feed, stack, &probe[0], batch_size)?;
        best = best.max(r);
    }
    Ok(best)
}
