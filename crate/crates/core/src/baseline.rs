//! Non-robust baselines: what the corruption is designed to fool.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linops::{power_iteration, SecondMomentOp};
use crate::stream::SampleFeed;
use crate::types::{Dataset, WeightedDataset};
use crate::vector::{axpy, dot, gaussian, normalize, norm_sq};

/// Top eigenvector of the uncorrected empirical second moment, by power
/// iteration.
pub fn naive_pca(ds: &Dataset, iters: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let all = WeightedDataset::new(ds.clone());
    let op = SecondMomentOp::unnormalized(&all);
    Ok(power_iteration(&op, iters.max(1), rng)?.0)
}

/// Oja's rule over `samples` stream draws with step `1/(t₀ + t)` relative to
/// the running mean of `‖x‖²`. Memory `O(d)`.
pub fn oja_streaming(feed: &mut SampleFeed<'_>, samples: u64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let d = feed.dim();
    let meter = feed.meter();
    let _charge = meter.charge(2 * d);
    let mut u = gaussian(d, rng);
    normalize(&mut u);
    let mut x = vec![0.0; d];
    let mut scale = 0.0;
    for t in 0..samples {
        feed.draw(&mut x)?;
        scale += (norm_sq(&x) - scale) / (t + 1) as f64;
        if scale <= 0.0 {
            continue;
        }
        let eta = 1.0 / (scale * (10.0 + t as f64).sqrt());
        axpy(eta * dot(&x, &u), &x, &mut u);
        if normalize(&mut u) == 0.0 {
            return Err(Error::degenerate("Oja iterate vanished"));
        }
    }
    Ok(u)
}
