//! Labeled synthetic data: inlier samplers, strong-contamination adversaries
//! and TV-contaminated streams.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{dense_spectrum, DenseMatrix};
use crate::stream::{SampleSource, SourceOrigin};
use crate::types::{Dataset, Label};
use crate::vector::{gaussian, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spike {
    pub direction: Vec<f64>,
    /// Variance added along the (normalized) direction.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Diagonal { values: Vec<f64> },
    /// `base·I + Σ_i variance_i·u_i u_i^T`.
    Spiked {
        dim: usize,
        base: f64,
        spikes: Vec<Spike>,
    },
    /// Orthogonal projection onto the first `rank` coordinates.
    Projection { dim: usize, rank: usize },
}

impl CovarianceSpec {
    /// `I + (top − 1)·e1 e1^T`.
    pub fn spiked_axis(dim: usize, top: f64) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        CovarianceSpec::Spiked {
            dim,
            base: 1.0,
            spikes: vec![Spike {
                direction,
                variance: top - 1.0,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Diagonal { values } => values.len(),
            CovarianceSpec::Spiked { dim, .. } | CovarianceSpec::Projection { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("covariance dimension must be positive"));
        }
        match self {
            CovarianceSpec::Diagonal { values } => {
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("diagonal covariance must be nonnegative"));
                }
            }
            CovarianceSpec::Spiked { base, spikes, .. } => {
                if !(base.is_finite() && *base >= 0.0) {
                    return Err(Error::invalid("spiked covariance base must be nonnegative"));
                }
                for s in spikes {
                    if s.direction.len() != d {
                        return Err(Error::invalid("spike direction has the wrong dimension"));
                    }
                    if !(s.variance.is_finite() && s.variance >= 0.0) {
                        return Err(Error::invalid(
                            "spike variances must be nonnegative (covariance must be PSD)",
                        ));
                    }
                    if s.direction.iter().all(|x| *x == 0.0) {
                        return Err(Error::invalid("spike direction must be nonzero"));
                    }
                }
            }
            CovarianceSpec::Projection { rank, .. } => {
                if *rank == 0 || *rank > d {
                    return Err(Error::invalid(format!(
                        "projection rank {rank} must lie in 1..={d}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> DenseMatrix {
        match self {
            CovarianceSpec::Diagonal { values } => DenseMatrix::diag(values),
            CovarianceSpec::Spiked { dim, base, spikes } => {
                let mut m = DenseMatrix::identity(*dim);
                m.scale(*base);
                for s in spikes {
                    let mut u = s.direction.clone();
                    normalize(&mut u);
                    m.add_outer(&u, s.variance);
                }
                m
            }
            CovarianceSpec::Projection { dim, rank } => {
                DenseMatrix::diag(&(0..*dim).map(|i| if i < *rank { 1.0 } else { 0.0 }).collect::<Vec<_>>())
            }
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        match self {
            CovarianceSpec::Diagonal { values } => Some(values.clone()),
            CovarianceSpec::Projection { dim, rank } => {
                Some((0..*dim).map(|i| if i < *rank { 1.0 } else { 0.0 }).collect())
            }
            CovarianceSpec::Spiked { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
    /// `Σ^{1/2}·√d·s` with `s` uniform on the unit sphere: bounded support
    /// `‖x‖ ≤ √(d‖Σ‖_op)`, covariance `Σ`.
    BoundedSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlierSpec {
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub family: Family,
}

impl InlierSpec {
    pub fn gaussian(covariance: CovarianceSpec) -> Self {
        InlierSpec {
            covariance,
            family: Family::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn sigma(&self) -> DenseMatrix {
        self.covariance.matrix()
    }

    /// Radius multiplier `r` with `‖x‖ ≤ r·√(d‖Σ‖_op)` (w.h.p. for Gaussians).
    pub fn radius(&self) -> f64 {
        1.0
    }

    pub fn sampler(&self) -> Result<InlierSampler> {
        self.covariance.validate()?;
        let d = self.dim();
        let root = match self.covariance.diagonal() {
            Some(diag) => Root::Diagonal(diag.iter().map(|v| v.sqrt()).collect()),
            None => {
                let sp = dense_spectrum(&self.sigma())?;
                let mut rows = vec![0.0; d * d];
                for j in 0..d {
                    let mut e = vec![0.0; d];
                    e[j] = 1.0;
                    let col = sp.apply_fn(&e, |l| l.max(0.0).sqrt());
                    for i in 0..d {
                        rows[i * d + j] = col[i];
                    }
                }
                Root::Dense(rows)
            }
        };
        Ok(InlierSampler {
            dim: d,
            family: self.family,
            root,
        })
    }
}

#[derive(Debug, Clone)]
enum Root {
    Diagonal(Vec<f64>),
    Dense(Vec<f64>),
}

/// Draws `Σ^{1/2}·ξ` with `ξ` isotropic.
#[derive(Debug, Clone)]
pub struct InlierSampler {
    dim: usize,
    family: Family,
    root: Root,
}

impl InlierSampler {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let d = self.dim;
        let mut xi = gaussian(d, rng);
        if self.family == Family::BoundedSphere {
            normalize(&mut xi);
            let s = (d as f64).sqrt();
            xi.iter_mut().for_each(|v| *v *= s);
        }
        match &self.root {
            Root::Diagonal(s) => {
                for i in 0..d {
                    out[i] = s[i] * xi[i];
                }
            }
            Root::Dense(m) => {
                for i in 0..d {
                    out[i] = crate::vector::dot(&m[i * d..(i + 1) * d], &xi);
                }
            }
        }
    }
}

/// `n` i.i.d. inliers, all labeled [`Label::Inlier`].
pub fn gen_inliers(spec: &InlierSpec, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let sampler = spec.sampler()?;
    let d = spec.dim();
    let mut flat = vec![0.0; n * d];
    for row in flat.chunks_exact_mut(d) {
        sampler.sample_into(rng, row);
    }
    Dataset::from_flat(d, flat)?.with_labels(vec![Label::Inlier; n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    #[default]
    None,
    /// All outliers at `±m·√(‖Σ‖_op/ε)·e_j` on a lowest-variance axis `j`,
    /// adding variance `m²‖Σ‖_op` along `e_j`.
    OrthogonalSpike,
    /// The same mass spread evenly over `h` low-variance axes, adding
    /// `m²‖Σ‖_op/h` to each: every axis sits just above the top inlier
    /// variance at the defaults, but no single direction carries it all.
    MultiDirectionHide,
    /// Fills the kernel of a projection covariance so the corrupted second
    /// moment is close to the identity.
    SchattenBlind,
}

fn default_multiplier() -> f64 {
    2.0
}

fn default_directions() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub kind: AdversaryKind,
    #[serde(default)]
    pub rate: f64,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Spike axis; defaults to the lowest-variance axis of `Σ`.
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default = "default_directions")]
    pub directions: usize,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            kind: AdversaryKind::None,
            rate: 0.0,
            multiplier: default_multiplier(),
            axis: None,
            directions: default_directions(),
        }
    }
}

impl AdversarySpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn orthogonal_spike(rate: f64) -> Self {
        AdversarySpec {
            kind: AdversaryKind::OrthogonalSpike,
            rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.rate) {
            return Err(Error::invalid(format!(
                "adversary rate {} is outside [0, 0.5)",
                self.rate
            )));
        }
        if !(self.multiplier.is_finite() && self.multiplier > 0.0) {
            return Err(Error::invalid("adversary multiplier must be positive"));
        }
        if self.directions == 0 {
            return Err(Error::invalid("adversary needs at least one direction"));
        }
        Ok(())
    }

    /// Outlier placement against a known covariance. The placement is a
    /// finite list of atoms; outliers cycle through them.
    pub fn atoms(&self, sigma: &DenseMatrix) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let d = sigma.dim();
        let eps = self.rate;
        if eps == 0.0 || self.kind == AdversaryKind::None {
            return Ok(Vec::new());
        }
        let op = dense_spectrum(sigma)?.top();
        let axes_by_variance = {
            let mut idx: Vec<usize> = (0..d).collect();
            // Stable: ties keep the lower index first.
            idx.sort_by(|&a, &b| sigma.get(a, a).total_cmp(&sigma.get(b, b)));
            idx
        };
        let axis_atoms = |axes: &[usize], mag: f64| -> Vec<Vec<f64>> {
            let mut atoms = Vec::new();
            for &j in axes {
                for s in [1.0, -1.0] {
                    let mut x = vec![0.0; d];
                    x[j] = s * mag;
                    atoms.push(x);
                }
            }
            atoms
        };
        Ok(match self.kind {
            AdversaryKind::None => Vec::new(),
            AdversaryKind::OrthogonalSpike => {
                let j = match self.axis {
                    Some(j) if j < d => j,
                    Some(j) => return Err(Error::invalid(format!("spike axis {j} >= d = {d}"))),
                    None => axes_by_variance[0],
                };
                axis_atoms(&[j], self.multiplier * (op / eps).sqrt())
            }
            AdversaryKind::MultiDirectionHide => {
                let h = self.directions.min(d);
                axis_atoms(&axes_by_variance[..h], self.multiplier * (op / eps).sqrt())
            }
            AdversaryKind::SchattenBlind => {
                // Axes with (near) zero true variance; each gets unit variance.
                let kernel: Vec<usize> = (0..d).filter(|&j| sigma.get(j, j) <= 1e-12 * op).collect();
                if kernel.is_empty() {
                    return Err(Error::invalid(
                        "schatten-blind adversary needs a rank-deficient covariance",
                    ));
                }
                axis_atoms(&kernel, (kernel.len() as f64 / eps).sqrt())
            }
        })
    }
}

/// Strategy replacing `count` points after inspecting the clean sample.
pub trait Adversary {
    fn corrupt(&self, clean: &Dataset, count: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<Vec<f64>>>;
}

/// The named strategies, placed against the generating covariance.
pub struct PlacedAdversary {
    atoms: Vec<Vec<f64>>,
}

impl PlacedAdversary {
    pub fn new(spec: &AdversarySpec, sigma: &DenseMatrix) -> Result<Self> {
        Ok(PlacedAdversary {
            atoms: spec.atoms(sigma)?,
        })
    }
}

impl Adversary for PlacedAdversary {
    fn corrupt(&self, _clean: &Dataset, count: usize, _rng: &mut dyn rand::RngCore) -> Result<Vec<Vec<f64>>> {
        if count > 0 && self.atoms.is_empty() {
            return Err(Error::invalid("adversary has no outlier placement"));
        }
        Ok((0..count).map(|i| self.atoms[i % self.atoms.len()].clone()).collect())
    }
}

/// Replaces exactly `⌊rate·n⌋` uniformly chosen points by the adversary's
/// output and labels them as outliers.
pub fn strong_contaminate_with(
    samples: &Dataset,
    rate: f64,
    adversary: &dyn Adversary,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if !(0.0..0.5).contains(&rate) {
        return Err(Error::invalid(format!("rate {rate} is outside [0, 0.5)")));
    }
    let n = samples.len();
    let count = (rate * n as f64 + 1e-9).floor() as usize;
    let mut labels = samples
        .labels()
        .map(|l| l.to_vec())
        .unwrap_or_else(|| vec![Label::Inlier; n]);
    if count == 0 {
        return samples.clone().with_labels(labels);
    }
    let mut chacha = ChaCha8Rng::seed_from_u64(rng.random());
    let replacements = adversary.corrupt(samples, count, &mut chacha)?;
    if replacements.len() != count || replacements.iter().any(|x| x.len() != samples.dim()) {
        return Err(Error::invalid("adversary returned the wrong number or shape of points"));
    }
    let mut flat = samples.flat().to_vec();
    let d = samples.dim();
    let mut chosen = index::sample(rng, n, count).into_vec();
    chosen.sort_unstable();
    for (i, x) in chosen.into_iter().zip(replacements) {
        flat[i * d..(i + 1) * d].copy_from_slice(&x);
        labels[i] = Label::Outlier;
    }
    Dataset::from_flat(d, flat)?.with_labels(labels)
}

pub fn strong_contaminate(
    samples: &Dataset,
    adv: &AdversarySpec,
    sigma_truth: &DenseMatrix,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    adv.validate()?;
    if sigma_truth.dim() != samples.dim() {
        return Err(Error::invalid("covariance and samples disagree on dimension"));
    }
    let placed = PlacedAdversary::new(adv, sigma_truth)?;
    strong_contaminate_with(samples, adv.rate, &placed, rng)
}

/// `P = (1−ε)·G + ε·B`: each draw is an outlier with probability `ε`.
pub struct TvSource {
    sampler: InlierSampler,
    atoms: Vec<Vec<f64>>,
    rate: f64,
    rng: ChaCha8Rng,
    last: Label,
}

impl SampleSource for TvSource {
    fn dim(&self) -> usize {
        self.sampler.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) -> bool {
        if !self.atoms.is_empty() && self.rng.random::<f64>() < self.rate {
            let k = self.rng.random_range(0..self.atoms.len());
            out.copy_from_slice(&self.atoms[k]);
            self.last = Label::Outlier;
        } else {
            self.sampler.sample_into(&mut self.rng, out);
            self.last = Label::Inlier;
        }
        true
    }

    fn last_label(&self) -> Option<Label> {
        Some(self.last)
    }

    fn origin(&self) -> SourceOrigin {
        SourceOrigin::Synthetic
    }
}

pub fn tv_contaminated_source(inlier: &InlierSpec, adv: &AdversarySpec, seed: u64) -> Result<TvSource> {
    adv.validate()?;
    Ok(TvSource {
        sampler: inlier.sampler()?,
        atoms: adv.atoms(&inlier.sigma())?,
        rate: adv.rate,
        rng: ChaCha8Rng::seed_from_u64(seed),
        last: Label::Inlier,
    })
}
