//! Datasets, filter stacks and algorithm configuration.
//!
//! A [`FilterStack`] is the complete memory of the filtering process: a squared
//! norm cutoff plus an ordered list of `(direction, threshold)` pairs. The binary
//! weight of a point is a pure function of the stack, which is what lets the
//! streaming driver keep only `O(d)` numbers per filter instead of a bit per
//! sample.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::dot;

/// A single sample in `R^d`. All coordinates are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point must have at least one coordinate"));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("coordinate {i} is not finite")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Ground-truth label attached by the generators. Never read by the algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Inlier => f.write_str("inlier"),
            Label::Outlier => f.write_str("outlier"),
        }
    }
}

/// An immutable point cloud stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    coords: Vec<f64>,
    labels: Option<Vec<Label>>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "buffer of length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "point {} has a non-finite coordinate",
                i / dim
            )));
        }
        Ok(Dataset {
            dim,
            coords,
            labels: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("dataset needs at least one point"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "point {i} has length {} but dim is {dim}",
                    r.len()
                )));
            }
            coords.extend_from_slice(r);
        }
        Self::from_flat(dim, coords)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    /// Returns a copy with every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let coords = self.coords.iter().map(|x| x * c).collect();
        let mut out = Self::from_flat(self.dim, coords)?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    /// Reads the whitespace-separated dataset format. An optional leading
    /// `inlier`/`outlier` token per line carries the ground-truth label.
    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut dim = None;
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        let mut labelled = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace().peekable();
            let label = match tokens.peek() {
                Some(&"inlier") => Some(Label::Inlier),
                Some(&"outlier") => Some(Label::Outlier),
                _ => None,
            };
            if label.is_some() {
                tokens.next();
            }
            match labelled {
                None => labelled = Some(label.is_some()),
                Some(l) if l != label.is_some() => {
                    return Err(Error::invalid(format!(
                        "line {}: label column must be present on every line or none",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            let start = coords.len();
            for tok in tokens {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::invalid(format!("line {}: cannot parse {tok:?}", lineno + 1))
                })?;
                coords.push(v);
            }
            let row_dim = coords.len() - start;
            match dim {
                None => dim = Some(row_dim),
                Some(d) if d != row_dim => {
                    return Err(Error::invalid(format!(
                        "line {}: expected {d} coordinates, found {row_dim}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            if let Some(l) = label {
                labels.push(l);
            }
        }
        let dim = dim.ok_or_else(|| Error::invalid("dataset file contains no points"))?;
        let ds = Self::from_flat(dim, coords)?;
        if labelled == Some(true) {
            ds.with_labels(labels)
        } else {
            Ok(ds)
        }
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// Writes one point per line; labels are emitted when present.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if let Some(labels) = &self.labels {
                write!(w, "{} ", labels[i])?;
            }
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    w.write_all(b" ")?;
                }
                // `{:?}` prints the shortest representation that round-trips.
                write!(w, "{v:?}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// One compacted hard-thresholding filter: keeps `x` iff `(v·x)^2 <= threshold_sq`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEntry {
    direction: Vec<f64>,
    threshold_sq: f64,
}

impl FilterEntry {
    pub fn new(direction: Vec<f64>, threshold_sq: f64) -> Result<Self> {
        if !(threshold_sq > 0.0) {
            return Err(Error::invalid(format!(
                "filter threshold must be positive, got {threshold_sq}"
            )));
        }
        if direction.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter direction is not finite"));
        }
        Ok(FilterEntry {
            direction,
            threshold_sq,
        })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn threshold_sq(&self) -> f64 {
        self.threshold_sq
    }

    #[inline]
    pub fn keeps(&self, x: &[f64]) -> bool {
        let p = dot(&self.direction, x);
        p * p <= self.threshold_sq
    }
}

/// Norm prune plus an ordered list of projection filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStack {
    prune_radius_sq: f64,
    filters: Vec<FilterEntry>,
}

impl Default for FilterStack {
    fn default() -> Self {
        FilterStack {
            prune_radius_sq: f64::INFINITY,
            filters: Vec::new(),
        }
    }
}

impl FilterStack {
    pub fn new(prune_radius_sq: f64) -> Result<Self> {
        if prune_radius_sq.is_nan() || prune_radius_sq < 0.0 {
            return Err(Error::invalid(format!(
                "prune radius must be nonnegative, got {prune_radius_sq}"
            )));
        }
        Ok(FilterStack {
            prune_radius_sq,
            filters: Vec::new(),
        })
    }

    pub fn prune_radius_sq(&self) -> f64 {
        self.prune_radius_sq
    }

    pub fn filters(&self) -> &[FilterEntry] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Returns a new revision with `entry` appended.
    pub fn with_entry(&self, entry: FilterEntry) -> Self {
        let mut next = self.clone();
        next.filters.push(entry);
        next
    }

    pub fn push(&mut self, entry: FilterEntry) {
        self.filters.push(entry);
    }

    /// Number of real numbers needed to store the stack.
    pub fn stored_scalars(&self) -> usize {
        1 + self
            .filters
            .iter()
            .map(|f| f.direction.len() + 1)
            .sum::<usize>()
    }

    /// Weight without dimension checks; used on hot paths after validation.
    #[inline]
    pub(crate) fn keeps_unchecked(&self, x: &[f64]) -> bool {
        let n2: f64 = dot(x, x);
        n2 <= self.prune_radius_sq && self.filters.iter().all(|f| f.keeps(x))
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for (i, f) in self.filters.iter().enumerate() {
            if f.direction.len() != dim {
                return Err(Error::invalid(format!(
                    "filter {i} has dimension {} but points have dimension {dim}",
                    f.direction.len()
                )));
            }
        }
        Ok(())
    }
}

/// `w(x) ∈ {0,1}` for the given stack.
pub fn evaluate_weight(stack: &FilterStack, x: &[f64]) -> Result<u8> {
    stack.check_dim(x.len())?;
    Ok(stack.keeps_unchecked(x) as u8)
}

/// A dataset together with the filter stack defining its binary weights.
///
/// The survivor mask is cached per revision; [`WeightedDataset::with_filter`]
/// builds the next revision incrementally.
#[derive(Debug, Clone)]
pub struct WeightedDataset {
    points: Arc<Dataset>,
    stack: FilterStack,
    survivors: Vec<u32>,
}

impl WeightedDataset {
    pub fn new(points: Dataset) -> Self {
        Self::from_shared(Arc::new(points))
    }

    pub fn from_shared(points: Arc<Dataset>) -> Self {
        let survivors = (0..points.len() as u32).collect();
        WeightedDataset {
            points,
            stack: FilterStack::default(),
            survivors,
        }
    }

    pub fn with_stack(points: Arc<Dataset>, stack: FilterStack) -> Result<Self> {
        stack.check_dim(points.dim())?;
        let survivors = (0..points.len() as u32)
            .filter(|&i| stack.keeps_unchecked(points.row(i as usize)))
            .collect();
        Ok(WeightedDataset {
            points,
            stack,
            survivors,
        })
    }

    /// Next revision with the norm prune replaced.
    pub fn with_prune(&self, prune_radius_sq: f64) -> Result<Self> {
        let mut stack = self.stack.clone();
        stack.prune_radius_sq = FilterStack::new(prune_radius_sq)?.prune_radius_sq;
        Self::with_stack(self.points.clone(), stack)
    }

    /// Next revision with one more filter; only current survivors are re-tested.
    pub fn with_filter(&self, entry: FilterEntry) -> Result<Self> {
        if entry.direction.len() != self.dim() {
            return Err(Error::invalid(format!(
                "filter dimension {} does not match data dimension {}",
                entry.direction.len(),
                self.dim()
            )));
        }
        let survivors = self
            .survivors
            .iter()
            .copied()
            .filter(|&i| entry.keeps(self.points.row(i as usize)))
            .collect();
        Ok(WeightedDataset {
            points: self.points.clone(),
            stack: self.stack.with_entry(entry),
            survivors,
        })
    }

    pub fn points(&self) -> &Dataset {
        &self.points
    }

    pub fn shared_points(&self) -> Arc<Dataset> {
        self.points.clone()
    }

    pub fn stack(&self) -> &FilterStack {
        &self.stack
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Total number of points `n`, including removed ones.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points with weight one, in ascending order.
    pub fn survivors(&self) -> &[u32] {
        &self.survivors
    }

    pub fn survivor_count(&self) -> usize {
        self.survivors.len()
    }

    pub fn survivor_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.survivors
            .iter()
            .map(move |&i| self.points.row(i as usize))
    }

    pub fn weight(&self, i: usize) -> u8 {
        self.stack.keeps_unchecked(self.points.row(i)) as u8
    }

    /// Per-point weights, indexed like the dataset.
    pub fn weights(&self) -> Vec<u8> {
        let mut w = vec![0u8; self.len()];
        for &i in &self.survivors {
            w[i as usize] = 1;
        }
        w
    }
}

/// `(1/n)·Σ w(x)`.
pub fn surviving_mass(ds: &WeightedDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("surviving mass of an empty dataset"));
    }
    Ok(ds.survivor_count() as f64 / ds.len() as f64)
}

/// How inner products over the data are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Sequential reduction in point order; bit-reproducible.
    #[default]
    Deterministic,
    /// Chunked parallel reduction; results may differ in the last bits.
    Parallel,
}

/// Tuning knobs for both drivers. Every schedule constant can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub eps: f64,
    pub gamma: f64,
    /// Outer schedule constant (`t_end = c_outer·ln²(d/ε)/γ`).
    pub c_outer: f64,
    /// Base power constant (`p = c_inner·ln d`).
    pub c_inner: f64,
    pub t_end: Option<usize>,
    pub k_end: Option<usize>,
    pub t_end_cap: usize,
    /// Multiplier of the streaming filter slack `δ = c·γ/(r²d)·‖v‖²·σ̂_op`.
    pub delta_slack: f64,
    pub seed: u64,
    pub boost_reps: usize,
    pub cert_failure_prob: f64,
    /// Acceptance constant: accept when `σ̂_u ≥ (1 − c_acc·γ)·u^T Σ_w u`.
    pub c_acc: f64,
    /// Upper bound on the slack `c_acc·γ` (and on `γ` in the Rayleigh check).
    pub accept_slack_cap: f64,
    pub c_pi: f64,
    pub c_cert: f64,
    /// Nominal upper limit of the stability regime; exceeding it only warns.
    pub gamma_0: f64,
    /// Streaming quantile sample constant `m = c_q·ln(1/τ)/tail`.
    pub c_q: f64,
    /// Streaming mean sample constant `n = c_m·r⁴d²/γ²` per median group.
    pub c_m: f64,
    pub mean_batch_cap: usize,
    /// Minibatch size constant for the matrix-power estimator.
    pub c_batch: f64,
    pub minibatch_cap: usize,
    /// Record `tr(B^{2p+1})` before and after every filter (small `d` only).
    pub trace_potential: bool,
    pub exec: ExecMode,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            eps: 0.01,
            gamma: default_gamma(0.01),
            c_outer: 30.0,
            c_inner: 3.0,
            t_end: None,
            k_end: None,
            t_end_cap: 10_000,
            delta_slack: 0.1,
            seed: 0,
            boost_reps: 1,
            cert_failure_prob: 0.01,
            c_acc: 20.0,
            accept_slack_cap: 0.7,
            c_pi: 4.0,
            c_cert: 4.0,
            gamma_0: 0.05,
            c_q: 200.0,
            c_m: 1.0,
            mean_batch_cap: 1_000_000,
            c_batch: 1.0,
            minibatch_cap: 4096,
            trace_potential: false,
            exec: ExecMode::Deterministic,
        }
    }
}

/// `γ = max(20ε, ε·ln(1/ε))`, the subgaussian stability rate.
pub fn default_gamma(eps: f64) -> f64 {
    if eps <= 0.0 {
        return 0.05;
    }
    (20.0 * eps).max(eps * (1.0 / eps).ln())
}

impl AlgoConfig {
    pub fn new(eps: f64) -> Self {
        AlgoConfig {
            eps,
            gamma: default_gamma(eps),
            ..Default::default()
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps;
        let gamma = self.gamma;
        if !(0.0..0.5).contains(&eps) {
            return Err(Error::invalid(format!(
                "eps = {eps} is outside [0, 0.5); the corruption rate must satisfy 20*eps <= gamma"
            )));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma = {gamma} must be positive")));
        }
        if 20.0 * eps > gamma * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "20*eps <= gamma violated: eps = {eps}, gamma = {gamma}"
            )));
        }
        if gamma >= self.gamma_0 {
            log::debug!(
                "gamma = {gamma} is above gamma_0 = {}; guarantees are heuristic",
                self.gamma_0
            );
        }
        let positive = [
            ("c_outer", self.c_outer),
            ("c_inner", self.c_inner),
            ("c_acc", self.c_acc),
            ("c_pi", self.c_pi),
            ("c_cert", self.c_cert),
            ("c_q", self.c_q),
            ("c_m", self.c_m),
            ("c_batch", self.c_batch),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.cert_failure_prob > 0.0 && self.cert_failure_prob < 1.0) {
            return Err(Error::invalid(format!(
                "cert_failure_prob must lie in (0,1), got {}",
                self.cert_failure_prob
            )));
        }
        if !(self.accept_slack_cap > 0.0 && self.accept_slack_cap < 1.0) {
            return Err(Error::invalid(format!(
                "accept_slack_cap must lie in (0,1), got {}",
                self.accept_slack_cap
            )));
        }
        if self.delta_slack < 0.0 || !self.delta_slack.is_finite() {
            return Err(Error::invalid("delta_slack must be nonnegative"));
        }
        if self.boost_reps == 0 {
            return Err(Error::invalid("boost_reps must be at least 1"));
        }
        if self.t_end == Some(0) || self.k_end == Some(0) || self.t_end_cap == 0 {
            return Err(Error::invalid("t_end and k_end must be positive"));
        }
        if self.minibatch_cap == 0 || self.mean_batch_cap == 0 {
            return Err(Error::invalid("sample caps must be positive"));
        }
        Ok(())
    }

    /// Inner iterations per stage, `⌈c_outer·ln²(d/ε)/γ⌉` capped at `t_end_cap`.
    pub fn t_end(&self, dim: usize) -> usize {
        if let Some(t) = self.t_end {
            return t;
        }
        if self.eps <= 0.0 {
            return self.t_end_cap;
        }
        let l = (dim as f64 / self.eps).ln().max(1.0);
        let t = (self.c_outer * l * l / self.gamma).ceil();
        (t as usize).clamp(1, self.t_end_cap)
    }

    /// Number of doubling stages, `⌈log₂(ln(d/γ)/(γ·ln d))⌉ + 1`.
    pub fn k_end(&self, dim: usize) -> usize {
        if let Some(k) = self.k_end {
            return k;
        }
        let ln_d = (dim.max(2) as f64).ln();
        let ratio = (dim as f64 / self.gamma).ln().max(1.0) / (self.gamma * ln_d);
        let k = ratio.max(1.0).log2().ceil() as usize + 1;
        k.max(1)
    }

    /// Base exponent `⌈c_inner·ln d⌉` of the doubling schedule.
    pub fn base_power(&self, dim: usize) -> usize {
        ((self.c_inner * (dim as f64).ln()).ceil() as usize).max(1)
    }

    /// `p_k = 2^{k-1}·p` for stage `k ≥ 1`.
    pub fn stage_power(&self, dim: usize, k: usize) -> usize {
        self.base_power(dim) << (k - 1).min(30)
    }

    /// Power-iteration length for the reference Rayleigh quotient.
    pub fn reference_power(&self, dim: usize, fail_prob: f64) -> usize {
        let arg = dim as f64 / (self.gamma * fail_prob);
        ((self.c_pi / self.gamma * arg.ln().max(1.0)).ceil() as usize).max(1)
    }

    /// Matrix power used to draw a candidate direction.
    pub fn certificate_power(&self, dim: usize) -> usize {
        let arg = dim as f64 / self.gamma;
        ((self.c_cert / self.gamma * arg.ln().max(1.0)).ceil() as usize).max(1)
    }

    /// Slack of the acceptance rule, `min(c_acc·γ, accept_slack_cap)`.
    pub fn accept_slack(&self) -> f64 {
        (self.c_acc * self.gamma).min(self.accept_slack_cap)
    }

    /// Slack of the Rayleigh-quotient check, `min(γ, accept_slack_cap)`.
    pub fn rayleigh_slack(&self) -> f64 {
        self.gamma.min(self.accept_slack_cap)
    }
}
