//! Matrix-free routines against the dense oracle on random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpca_core::linops::power_iteration;
use rpca_core::oracle::dense_spectrum;
use rpca_core::robust_pca::potential_diagnostic;
use rpca_core::{AlgoConfig, Dataset, DenseMatrix, WeightedDataset};

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
    let entries: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = DenseMatrix::from_fn(d, |i, j| entries[i * d + j]);
    g.mul(&g.transpose())
}

#[test]
fn power_iteration_meets_rayleigh_guarantee() {
    // A = diag(1, 1−γ, …): the gap is exactly γ, the hardest case for the
    // prescribed iteration count.
    let d = 30;
    let gamma = 0.1;
    let fail = 0.05;
    let cfg = AlgoConfig::new(0.005).with_gamma(gamma);
    let p = cfg.reference_power(d, fail);
    let mut diag = vec![1.0 - gamma; d];
    diag[0] = 1.0;
    let a = DenseMatrix::diag(&diag);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 200;
    let ok = (0..trials)
        .filter(|_| power_iteration(&a, p, &mut rng).unwrap().1 >= 1.0 - gamma)
        .count();
    assert!(ok as f64 >= (1.0 - fail) * trials as f64, "{ok}/{trials}");
}

#[test]
fn power_iteration_tracks_dense_top_eigenvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gamma = 0.05;
    let cfg = AlgoConfig::new(0.001).with_gamma(gamma);
    for _ in 0..100 {
        let d = rng.random_range(1..=20);
        let a = random_psd(&mut rng, d);
        let top = dense_spectrum(&a).unwrap().top();
        let (y, r) = power_iteration(&a, cfg.reference_power(d, 0.01), &mut rng).unwrap();
        assert!(r >= (1.0 - gamma) * top && r <= top * (1.0 + 1e-9), "{r} vs {top}");
        assert!((y.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn potential_matches_dense_trace_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(5..=60);
        let flat: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let ds = WeightedDataset::new(Dataset::from_flat(d, flat).unwrap());
        let p = rng.random_range(0..6u32);
        let b = DenseMatrix::second_moment(&ds);
        let mut power = DenseMatrix::identity(d);
        for _ in 0..2 * p + 1 {
            power = power.mul(&b);
        }
        let phi = potential_diagnostic(&ds, p).unwrap();
        assert!((phi - power.trace()).abs() <= 1e-9 * power.trace().abs().max(1e-300));
    }
}
