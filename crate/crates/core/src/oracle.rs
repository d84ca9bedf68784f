//! Dense brute-force references for small instances.
//!
//! Nothing in the drivers depends on this module except the optional potential
//! trace. Tests use it as ground truth for operator norms, matrix powers and the
//! stopping condition.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linops::LinearOperator;
use crate::types::{Dataset, WeightedDataset};
use crate::vector::{dot, gaussian, normalize};

/// Largest dimension the dense oracle accepts.
pub const MAX_DENSE_DIM: usize = 256;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix rows must form a square"));
        }
        Ok(DenseMatrix {
            n,
            data: rows.concat(),
        })
    }

    /// `Σ c_i·u_i u_i^T` added onto `self`.
    pub fn add_outer(&mut self, u: &[f64], c: f64) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += c * u[i] * u[j];
            }
        }
    }

    /// Unnormalized weighted second moment `(1/n)·Σ w(x) x x^T`.
    pub fn second_moment(ds: &WeightedDataset) -> Self {
        let d = ds.dim();
        let mut m = Self::zeros(d);
        for x in ds.survivor_rows() {
            m.add_outer(x, 1.0);
        }
        m.scale(1.0 / ds.len() as f64);
        m
    }

    /// Empirical second moment of every point of `ds`.
    pub fn empirical_second_moment(ds: &Dataset) -> Self {
        let mut m = Self::zeros(ds.dim());
        for x in ds.rows() {
            m.add_outer(x, 1.0);
        }
        m.scale(1.0 / ds.len() as f64);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn mat_vec(&self, z: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|r| dot(r, z)).collect()
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `⟨A, B⟩ = tr(A^T B)`.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn quadratic(&self, u: &[f64]) -> f64 {
        dot(u, &self.mat_vec(u))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }

    fn off_diagonal_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self.get(i, j).powi(2);
                }
            }
        }
        s
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::invalid(format!(
                "vector of length {} for a {}x{} matrix",
                z.len(),
                self.n,
                self.n
            )));
        }
        Ok(self.mat_vec(z))
    }
}

/// Full eigendecomposition `A = V Λ V^T` with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: DenseMatrix,
}

impl DenseSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn top(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        for k in 0..n {
            m.add_outer(&self.vector(k), self.eigenvalues[k]);
        }
        m
    }

    /// `f(A)·z` for a spectral function `f`.
    pub fn apply_fn(&self, z: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let v = self.vector(k);
            let c = f(self.eigenvalues[k]) * dot(&v, z);
            for i in 0..n {
                out[i] += c * v[i];
            }
        }
        out
    }

    /// `A^p z` through the eigenbasis.
    pub fn power_apply(&self, z: &[f64], p: u32) -> Vec<f64> {
        self.apply_fn(z, |l| l.powi(p as i32))
    }

    /// `tr(A^q)`; eigenvalues are clamped at zero for PSD inputs.
    pub fn trace_power(&self, q: u32) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.max(0.0).powi(q as i32))
            .sum()
    }

    /// `ln tr(A^q)`, safe against overflow.
    pub fn log_trace_power(&self, q: u32) -> f64 {
        let top = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(*l));
        if top <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let s: f64 = self
            .eigenvalues
            .iter()
            .map(|l| (l.max(0.0) / top).powi(q as i32))
            .sum();
        q as f64 * top.ln() + s.ln()
    }

    /// Schatten `q`-norm `(Σ|λ|^q)^{1/q}`.
    pub fn schatten_norm(&self, q: f64) -> f64 {
        let top = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        if top == 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .eigenvalues
            .iter()
            .map(|l| (l.abs() / top).powf(q))
            .sum();
        top * s.powf(1.0 / q)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn dense_spectrum(a: &DenseMatrix) -> Result<DenseSpectrum> {
    let n = a.dim();
    if n == 0 || n > MAX_DENSE_DIM {
        return Err(Error::invalid(format!(
            "dense oracle supports 1 <= d <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let mut m = a.clone();
    // Work on the exactly symmetrized copy.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let fro_sq = m.frobenius().powi(2);
    let target = (1e-13f64).powi(2) * fro_sq;
    for _sweep in 0..100 {
        if m.off_diagonal_sq() <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if m.off_diagonal_sq() > (1e-12f64).powi(2) * fro_sq.max(f64::MIN_POSITIVE) {
        return Err(Error::Internal("Jacobi iteration did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let eigenvalues = order.iter().map(|&i| m.get(i, i)).collect();
    let eigenvectors = DenseMatrix::from_fn(n, |i, j| v.get(i, order[j]));
    Ok(DenseSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `u^T Σ u / λ₁(Σ)`.
pub fn metric_approx_ratio(u: &[f64], sigma_truth: &DenseMatrix) -> Result<f64> {
    if u.len() != sigma_truth.dim() {
        return Err(Error::invalid("direction and covariance dimensions differ"));
    }
    let nrm = dot(u, u).sqrt();
    if (nrm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "direction must be unit norm, got {nrm}"
        )));
    }
    let top = dense_spectrum(sigma_truth)?.top();
    if top <= 0.0 {
        return Err(Error::invalid("covariance has no positive eigenvalue"));
    }
    Ok(sigma_truth.quadratic(u) / top)
}

/// Dense evaluation of `⟨Σ, M²⟩ ≥ (1 − cγ)·⟨Σ_{P_w}, M²⟩` with `M = B^p`.
///
/// Both sides are reported divided by `λ₁(B)^{2p}` so large exponents stay finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn stopping_condition_truth(
    sigma_truth: &DenseMatrix,
    ds: &WeightedDataset,
    p: u32,
    gamma: f64,
    constant: f64,
) -> Result<StoppingCondition> {
    if ds.dim() > 64 {
        return Err(Error::UnsupportedDiagnostic(format!(
            "stopping condition needs d <= 64, got {}",
            ds.dim()
        )));
    }
    let mass = ds.survivor_count() as f64 / ds.len() as f64;
    if mass == 0.0 {
        return Err(Error::degenerate("no surviving points"));
    }
    let b = DenseMatrix::second_moment(ds);
    let spec = dense_spectrum(&b)?;
    let top = spec.top().max(f64::MIN_POSITIVE);
    let mut lhs = 0.0;
    let mut rhs_inner = 0.0;
    for k in 0..spec.dim() {
        let l = spec.eigenvalues[k].max(0.0);
        let w = (l / top).powi(2 * p as i32);
        let v = spec.vector(k);
        lhs += w * sigma_truth.quadratic(&v);
        rhs_inner += w * l / mass;
    }
    let rhs = (1.0 - constant * gamma) * rhs_inner;
    Ok(StoppingCondition {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// Result of a stability falsification attempt. A small `worst_ratio` is
/// evidence, not a certificate: stability quantifies over all weightings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySpotcheck {
    /// Largest of `r` and `1/r` over probes, `r = u^T Σ_w u / u^T Σ u`.
    pub worst_ratio: f64,
    pub deletions: usize,
    pub trials: usize,
}

/// Tries `trials` adversarial deletions of `⌊εn⌋` points and measures how far
/// the reweighted second moment moves from `Σ` along the probe directions.
pub fn stability_spotcheck(
    samples: &Dataset,
    sigma_truth: &DenseMatrix,
    eps: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<StabilitySpotcheck> {
    let n = samples.len();
    let d = samples.dim();
    if sigma_truth.dim() != d {
        return Err(Error::invalid("covariance dimension mismatch"));
    }
    let k = (eps * n as f64).floor() as usize;
    let spec = dense_spectrum(sigma_truth)?;
    let mut worst = 1.0f64;
    for trial in 0..trials.max(1) {
        let mut u = if trial % 2 == 0 {
            spec.vector((trial / 2) % d)
        } else {
            gaussian(d, rng)
        };
        normalize(&mut u);
        let truth = sigma_truth.quadratic(&u);
        if truth <= 0.0 {
            continue;
        }
        let mut proj: Vec<f64> = samples.rows().map(|x| dot(&u, x).powi(2)).collect();
        proj.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = proj.iter().sum();
        // Deleting the largest projections deflates, deleting the smallest inflates.
        let keep = (n - k) as f64;
        let deflated = proj[k..].iter().sum::<f64>() / keep;
        let inflated = (total - proj[n - k..].iter().sum::<f64>()) / keep;
        for r in [deflated / truth, inflated / truth] {
            if r > 0.0 {
                worst = worst.max(r).max(1.0 / r);
            } else {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(StabilitySpotcheck {
        worst_ratio: worst,
        deletions: k,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(d: usize, rng: &mut impl Rng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(d);
        for _ in 0..d + 2 {
            let g = gaussian(d, rng);
            m.add_outer(&g, 1.0);
        }
        m
    }

    #[test]
    fn diagonal_spectrum() {
        let s = dense_spectrum(&DenseMatrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert_eq!(s.vector(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn identity_spectrum() {
        let s = dense_spectrum(&DenseMatrix::identity(5)).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn rotated_diagonal_round_trip() {
        let th: f64 = 0.3;
        let (c, s) = (th.cos(), th.sin());
        let rot = DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let a = rot.mul(&DenseMatrix::diag(&[3.0, 1.0])).mul(&rot.transpose());
        let sp = dense_spectrum(&a).unwrap();
        assert!((sp.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((sp.eigenvalues[1] - 1.0).abs() < 1e-12);
        let v = sp.vector(0);
        let align = (v[0] * c + v[1] * s).abs();
        assert!((align - 1.0).abs() < 1e-8);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(dense_spectrum(&a), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 2, 7, 20, 40] {
            let a = random_psd(d, &mut rng);
            let sp = dense_spectrum(&a).unwrap();
            let r = sp.reconstruct();
            let mut diff = r.clone();
            for i in 0..d {
                for j in 0..d {
                    diff.set(i, j, r.get(i, j) - a.get(i, j));
                }
            }
            assert!(diff.frobenius() <= 1e-8 * a.frobenius());
            let vtv = sp.eigenvectors.transpose().mul(&sp.eigenvectors);
            for i in 0..d {
                for j in 0..d {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv.get(i, j) - e).abs() < 1e-10);
                }
            }
            assert!(sp.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn approx_ratio_examples() {
        let sigma = DenseMatrix::diag(&[10.0, 1.0]);
        assert!((metric_approx_ratio(&[1.0, 0.0], &sigma).unwrap() - 1.0).abs() < 1e-15);
        assert!((metric_approx_ratio(&[0.0, 1.0], &sigma).unwrap() - 0.1).abs() < 1e-15);
        assert!(metric_approx_ratio(&[0.0, 0.0], &DenseMatrix::zeros(2)).is_err());
        assert!(metric_approx_ratio(&[2.0, 0.0], &sigma).is_err());
    }

    #[test]
    fn approx_ratio_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let sigma = random_psd(6, &mut rng);
            let mut u = gaussian(6, &mut rng);
            normalize(&mut u);
            let top = dense_spectrum(&sigma).unwrap().top();
            let direct: f64 = (0..6)
                .map(|i| (0..6).map(|j| u[i] * sigma.get(i, j) * u[j]).sum::<f64>())
                .sum();
            let r = metric_approx_ratio(&u, &sigma).unwrap();
            assert!((r - direct / top).abs() <= 1e-12);
            assert!(r <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn stopping_condition_holds_without_corruption() {
        let rows: Vec<Vec<f64>> = vec![
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let ds = WeightedDataset::new(Dataset::from_rows(&rows).unwrap());
        let sigma = DenseMatrix::second_moment(&ds);
        let sc = stopping_condition_truth(&sigma, &ds, 5, 1e-3, 250.0).unwrap();
        assert!(sc.holds);
        assert!(sc.lhs > sc.rhs);
    }

    #[test]
    fn stopping_condition_fails_when_inflated() {
        // Empirical variance along e2 is doubled relative to the truth and
        // dominates for large p.
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.2],
            vec![0.0, -1.2],
        ];
        let ds = WeightedDataset::new(Dataset::from_rows(&rows).unwrap());
        let sigma = DenseMatrix::diag(&[0.5, 0.36]);
        let sc = stopping_condition_truth(&sigma, &ds, 20, 1e-4, 250.0).unwrap();
        assert!(!sc.holds, "{sc:?}");
    }

    #[test]
    fn schatten_norms() {
        let s = dense_spectrum(&DenseMatrix::diag(&[3.0, 4.0])).unwrap();
        assert!((s.schatten_norm(2.0) - 5.0).abs() < 1e-12);
        assert!((s.trace_power(3) - 91.0).abs() < 1e-9);
        assert!((s.log_trace_power(3) - 91f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn spotcheck_without_deletions_measures_sampling_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..20_000).map(|_| gaussian(3, &mut rng)).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let rep = stability_spotcheck(&ds, &DenseMatrix::identity(3), 0.0, 6, &mut rng).unwrap();
        assert_eq!(rep.deletions, 0);
        assert!(rep.worst_ratio < 1.06, "{rep:?}");
    }

    #[test]
    fn spotcheck_on_large_gaussian_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let eps: f64 = 0.05;
        let gamma = 3.0 * eps * (1.0 / eps).ln();
        let rows: Vec<Vec<f64>> = (0..40_000).map(|_| gaussian(4, &mut rng)).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let rep = stability_spotcheck(&ds, &DenseMatrix::identity(4), eps, 10, &mut rng).unwrap();
        assert!(rep.worst_ratio <= 1.0 + 1.5 * gamma, "{rep:?}");
    }

    #[test]
    fn spotcheck_tiny_sample_is_flagged() {
        // n = d: deleting a point moves the second moment far; documents the
        // sample-size requirement rather than asserting success.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| gaussian(4, &mut rng)).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let rep = stability_spotcheck(&ds, &DenseMatrix::identity(4), 0.25, 4, &mut rng).unwrap();
        assert!(rep.worst_ratio > 1.0);
    }
}
