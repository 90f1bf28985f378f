//! Fixtures shared by the benchmarks.

use bcube_core::{CubeFunction, PoissonFunction};

/// A deterministic, non-constant table with no structure to exploit.
pub fn wiggly(n: usize, d: usize) -> CubeFunction {
    CubeFunction::from_fn(n, d, |x, o| {
        for (c, v) in o.iter_mut().enumerate() {
            *v = (0.7 * (x.index() as f64 + 1.0) * (c as f64 + 1.3)).sin();
        }
    })
    .expect("fixture dimensions are small")
}

pub fn wiggly_poisson(m: usize, k: usize) -> PoissonFunction {
    PoissonFunction::from_fn(m, k, 1, |x, o| {
        o[0] = x.iter().enumerate().map(|(i, &xi)| (0.9 * xi as f64 + i as f64).cos()).sum();
    })
    .expect("fixture dimensions are small")
}
