//! Seeded Monte Carlo with batch-means error bars.
//!
//! Every independent unit of work (a quadrature node, an experiment row) is
//! identified by a counter. Its batches draw from ChaCha streams derived from
//! `(seed, unit, batch)` only, so results do not depend on how many worker
//! threads rayon happens to use.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sample budget, seed and batch count for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSpec {
    pub samples: u64,
    pub seed: u64,
    pub batches: u64,
}

impl McSpec {
    pub fn new(samples: u64, seed: u64, batches: u64) -> Result<Self> {
        let spec = McSpec {
            samples,
            seed,
            batches,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(invalid("batches", format!("{} is below 2", self.batches)));
        }
        if self.samples < self.batches {
            return Err(invalid(
                "samples",
                format!("{} samples cannot fill {} batches", self.samples, self.batches),
            ));
        }
        Ok(())
    }
}

/// Mean and batch-means standard error of a sampled quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for batch `batch` of work unit `unit`.
pub fn substream(seed: u64, unit: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(unit)));
    rng.set_stream(batch);
    rng
}

/// Runs `draw` `spec.samples` times split over `spec.batches` batches and
/// returns the grand mean with its batch-means standard error.
pub fn batch_means<F>(spec: &McSpec, unit: u64, draw: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    spec.validate()?;
    let base = spec.samples / spec.batches;
    let extra = spec.samples % spec.batches;
    let sums: Vec<(f64, u64)> = (0..spec.batches)
        .into_par_iter()
        .map(|b| {
            let count = base + u64::from(b < extra);
            let mut rng = substream(spec.seed, unit, b);
            let mut sum = 0.0;
            for _ in 0..count {
                sum += draw(&mut rng);
            }
            (sum, count)
        })
        .collect();
    let total: f64 = sums.iter().map(|(s, _)| s).sum();
    let mean = total / spec.samples as f64;
    let batch_means: Vec<f64> = sums.iter().map(|(s, c)| s / *c as f64).collect();
    let b = batch_means.len() as f64;
    let var = batch_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / b).sqrt(),
        samples: spec.samples,
    })
}
