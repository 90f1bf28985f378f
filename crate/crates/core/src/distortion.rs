//! Average distortion of cube embeddings against the Hamming metric.
//!
//! `f` has average distortion `D` if it is `D`-Lipschitz and
//! `E‖f(ε) − f(ε′)‖ ≥ E d(ε, ε′)` for independent `ε, ε′ ~ μ`. For a given
//! `f` the smallest such `D` is reached after rescaling so the displacement
//! condition is tight, which gives `D = Lip(f) · E d / E‖f(ε) − f(ε′)‖`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{check_table_dim, BiasedMeasure, CubeFunction, CubeMap, CubePoint};
use crate::error::{check_alpha, invalid, Error, Result};
use crate::inequality::{check_exact_size, EvalMode};
use crate::mc::batch_means;
use crate::norm::NormSpec;
use crate::params;
use crate::poisson::binomial_pmf;
use crate::report::Params;

pub const MAX_LIPSCHITZ_DIM: usize = 16;

/// Absolute constant in the explicit lower bound.
pub const LOWER_BOUND_CONSTANT: f64 = 64.0;

/// Number of coordinates where `x` and `y` differ.
pub fn hamming(x: CubePoint, y: CubePoint) -> Result<u32> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(format!("points of dimension {} and {}", x.dim(), y.dim())));
    }
    Ok((x.index() ^ y.index()).count_ones())
}

/// `max ‖f(x) − f(y)‖` over Hamming-adjacent pairs, which is the Lipschitz
/// constant because Hamming distance is a path metric.
pub fn lipschitz_constant(f: &CubeFunction, norm: &NormSpec) -> Result<f64> {
    check_table_dim("lipschitz_constant", f.dim_n(), MAX_LIPSCHITZ_DIM)?;
    let n = f.dim_n();
    Ok((0..f.len())
        .into_par_iter()
        .map(|x| {
            (0..n)
                .filter(|&i| x >> i & 1 == 0)
                .map(|i| norm.dist(f.row(x), f.row(x | 1 << i)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// `E d(ε, ε′) = 2nα(1−α)`.
pub fn expected_hamming(n: usize, alpha: f64) -> f64 {
    2.0 * n as f64 * alpha * (1.0 - alpha)
}

/// `P(d(ε, ε′) = 0) = (1 − 2α(1−α))^n`.
pub fn prob_zero_distance(n: usize, alpha: f64) -> f64 {
    (1.0 - 2.0 * alpha * (1.0 - alpha)).powi(n as i32)
}

/// Sum over all pairs `(x, y)` of `μ(x)μ(y) h(x, y)`, reduced in index order.
fn pair_sum(measure: &BiasedMeasure, h: impl Fn(u64, u64) -> f64 + Sync) -> Result<f64> {
    let n = measure.dim();
    check_exact_size(n)?;
    let w = measure.weights()?;
    let partial: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|x| {
            w.iter()
                .enumerate()
                .map(|(y, wy)| wy * h(x as u64, y as u64))
                .sum::<f64>()
                * w[x]
        })
        .collect();
    Ok(partial.iter().sum())
}

/// `(E d(ε, ε′), P(d = 0))` by enumerating pairs.
pub fn hamming_moments_enumerated(n: usize, alpha: f64) -> Result<(f64, f64)> {
    let measure = BiasedMeasure::new(alpha, n)?;
    let mean = pair_sum(&measure, |x, y| (x ^ y).count_ones() as f64)?;
    let zero = pair_sum(&measure, |x, y| f64::from(x == y))?;
    Ok((mean, zero))
}

/// Average displacement with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub value: f64,
    pub stderr: f64,
}

/// `E‖f(ε) − f(ε′)‖` for independent `ε, ε′ ~ μ`.
pub fn avg_displacement<M: CubeMap + ?Sized>(f: &M, alpha: f64, norm: &NormSpec, mode: &EvalMode) -> Result<Displacement> {
    check_alpha(alpha)?;
    let (n, d) = (f.dim_n(), f.dim_d());
    match mode {
        EvalMode::Exact => {
            check_exact_size(n)?;
            let measure = BiasedMeasure::new(alpha, n)?;
            let mut rows = vec![0.0; (1 << n) * d];
            for (x, chunk) in rows.chunks_mut(d).enumerate() {
                f.eval_into(x as u64, chunk);
            }
            let value = pair_sum(&measure, |x, y| {
                norm.dist(&rows[x as usize * d..(x as usize + 1) * d], &rows[y as usize * d..(y as usize + 1) * d])
            })?;
            Ok(Displacement { value, stderr: 0.0 })
        }
        EvalMode::MonteCarlo(mc) => {
            let est = batch_means(mc, 0, |rng| {
                let mut draw = || {
                    let mut x = 0u64;
                    for i in 0..n {
                        if rng.random::<f64>() < alpha {
                            x |= 1 << i;
                        }
                    }
                    x
                };
                let (x, y) = (draw(), draw());
                let mut a = vec![0.0; d];
                let mut b = vec![0.0; d];
                f.eval_into(x, &mut a);
                f.eval_into(y, &mut b);
                norm.dist(&a, &b)
            })?;
            Ok(Displacement {
                value: est.mean,
                stderr: est.stderr,
            })
        }
    }
}

/// `E[2√K]`, `K ~ Binomial(n, 2α(1−α))`: the displacement of the identity
/// map into Euclidean space, whose image points differ by `2√d(ε, ε′)`.
pub fn identity_displacement(n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let pmf = binomial_pmf(n, 2.0 * alpha * (1.0 - alpha), n + 1);
    Ok(pmf.iter().enumerate().map(|(k, w)| w * 2.0 * (k as f64).sqrt()).sum())
}

/// Explicit form of the lower bound: `constant · order`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    /// `(αn)^{1 − 1/p}`.
    pub order: f64,
    /// `(1 − α) / (64 T)`.
    pub constant: f64,
    /// True at `p = 1`, where the bound is a constant.
    pub degenerate: bool,
}

/// `D ≥ (1 − α)(αn)^{1−1/p} / (64 T)` for every `f` into a space of type `p`
/// with constant `T`, for `α ≤ 1/2`.
///
/// Chain: `E d ≤ E‖f − f′‖ ≤ 2 (E‖f − Ef‖^p)^{1/p}`, then the corollary with
/// `‖D_i f‖ ≤ D/2`, and `E d = 2nα(1−α)`. That chain gives the constant 16; a
/// further factor 4 of slack is kept.
pub fn lower_bound(alpha: f64, n: usize, p: f64, type_constant: f64) -> Result<LowerBound> {
    check_alpha(alpha)?;
    if alpha > 0.5 {
        return Err(invalid("alpha", format!("{alpha} is above 1/2")));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(invalid("p", format!("{p} is not in [1, 2]")));
    }
    if !(type_constant.is_finite() && type_constant > 0.0) {
        return Err(invalid("type_constant", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let order = (alpha * n as f64).powf(1.0 - 1.0 / p);
    let constant = (1.0 - alpha) / (LOWER_BOUND_CONSTANT * type_constant);
    Ok(LowerBound {
        value: constant * order,
        order,
        constant,
        degenerate: p == 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub lipschitz: f64,
    pub avg_displacement: f64,
    pub avg_hamming: f64,
    pub distortion: f64,
    pub lower_bound: LowerBound,
    pub params: Params,
    pub notes: Vec<String>,
}

impl EmbeddingReport {
    /// The lower bound never exceeds the measured distortion.
    pub fn consistent(&self) -> bool {
        self.lower_bound.value <= self.distortion * (1.0 + 1e-12)
    }
}

fn assemble(
    n: usize,
    alpha: f64,
    norm: &NormSpec,
    lipschitz: f64,
    displacement: f64,
    mut params: Params,
) -> Result<EmbeddingReport> {
    if displacement <= 0.0 {
        return Err(Error::Degenerate("average displacement is zero; distortion is undefined".into()));
    }
    let avg_hamming = expected_hamming(n, alpha);
    let mut notes = vec![format!(
        "distortion = Lip * E d / E|f - f'| after rescaling (raw Lip {lipschitz}, raw displacement {displacement})"
    )];
    let a = if alpha > 0.5 {
        notes.push(format!("lower bound uses 1 - alpha = {}", 1.0 - alpha));
        1.0 - alpha
    } else {
        alpha
    };
    let bound = lower_bound(a, n, norm.p, norm.type_constant)?;
    notes.push(format!(
        "lower bound = {:.6e} * (alpha n)^(1 - 1/p) = {:.6e} * {:.6e}",
        bound.constant, bound.constant, bound.order
    ));
    if bound.degenerate {
        notes.push("p = 1: lower bound is a constant".into());
    }
    params.insert("n".into(), n.into());
    params.insert("alpha".into(), alpha.into());
    params.insert("q".into(), norm.q.into());
    params.insert("p".into(), norm.p.into());
    params.insert("T".into(), norm.type_constant.into());
    Ok(EmbeddingReport {
        lipschitz,
        avg_displacement: displacement,
        avg_hamming,
        distortion: lipschitz * avg_hamming / displacement,
        lower_bound: bound,
        params,
        notes,
    })
}

/// Distortion report for a tabulated embedding; exact for `n ≤ 10`.
pub fn average_distortion(f: &CubeFunction, alpha: f64, norm: &NormSpec) -> Result<EmbeddingReport> {
    let lipschitz = lipschitz_constant(f, norm)?;
    let disp = avg_displacement(f, alpha, norm, &EvalMode::Exact)?;
    assemble(f.dim_n(), alpha, norm, lipschitz, disp.value, params! { "d" => f.dim_d() })
}

/// The identity map into Euclidean space, in closed form for any `n`.
pub fn identity_distortion(n: usize, alpha: f64) -> Result<EmbeddingReport> {
    let disp = identity_displacement(n, alpha)?;
    assemble(n, alpha, &NormSpec::euclidean(), 2.0, disp, params! { "d" => n, "map" => "identity" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::McSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_function(n: usize, d: usize, seed: u64) -> CubeFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CubeFunction::from_fn(n, d, |_, o| o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn hamming_examples() {
        let p = |i, n| CubePoint::new(i, n).unwrap();
        assert_eq!(hamming(p(5, 4), p(5, 4)).unwrap(), 0);
        assert_eq!(hamming(p(0, 4), p(15, 4)).unwrap(), 4);
        assert_eq!(hamming(p(0b0110, 4), p(0b0011, 4)).unwrap(), 2);
        assert!(hamming(p(0, 3), p(0, 4)).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let norm = NormSpec::euclidean();
        assert_eq!(lipschitz_constant(&CubeFunction::constant(3, &[1.0]).unwrap(), &norm).unwrap(), 0.0);
        assert_eq!(lipschitz_constant(&CubeFunction::identity(5).unwrap(), &norm).unwrap(), 2.0);
        assert_eq!(lipschitz_constant(&CubeFunction::coordinate(3, 0).unwrap(), &norm).unwrap(), 2.0);
        assert!(lipschitz_constant(&CubeFunction::zeros(17, 1).unwrap(), &norm).is_err());
    }

    #[test]
    fn adjacent_pairs_give_the_full_lipschitz_constant() {
        for seed in 0..10 {
            let n = 2 + seed as usize % 5;
            let f = random_function(n, 2, seed);
            let norm = NormSpec::lp(1.5).unwrap();
            let mut brute = 0.0f64;
            for x in 0..f.len() {
                for y in 0..f.len() {
                    if x != y {
                        let d = (x ^ y).count_ones() as f64;
                        brute = brute.max(norm.dist(f.row(x), f.row(y)) / d);
                    }
                }
            }
            assert!((lipschitz_constant(&f, &norm).unwrap() - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn hamming_moments_match_closed_forms() {
        for alpha in [0.05, 0.25, 0.5, 0.8] {
            for n in [1, 3, 6] {
                let (mean, zero) = hamming_moments_enumerated(n, alpha).unwrap();
                assert!((mean - expected_hamming(n, alpha)).abs() < 1e-12);
                assert!((zero - prob_zero_distance(n, alpha)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_examples() {
        let norm = NormSpec::euclidean();
        let c = CubeFunction::constant(4, &[2.0]).unwrap();
        assert_eq!(avg_displacement(&c, 0.3, &norm, &EvalMode::Exact).unwrap().value, 0.0);
        for n in [1, 4, 8] {
            let id = CubeFunction::identity(n).unwrap();
            let exact = avg_displacement(&id, 0.3, &norm, &EvalMode::Exact).unwrap().value;
            assert!((exact - identity_displacement(n, 0.3).unwrap()).abs() < 1e-12);
        }
        let f = random_function(8, 2, 3);
        let exact = avg_displacement(&f, 0.2, &norm, &EvalMode::Exact).unwrap().value;
        let mc = EvalMode::MonteCarlo(McSpec::new(200_000, 2, 20).unwrap());
        let est = avg_displacement(&f, 0.2, &norm, &mc).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{exact} {est:?}");
        assert!(avg_displacement(&CubeFunction::identity(11).unwrap(), 0.2, &norm, &EvalMode::Exact).is_err());
    }

    #[test]
    fn distortion_examples() {
        let c = CubeFunction::constant(3, &[1.0]).unwrap();
        assert!(matches!(
            average_distortion(&c, 0.3, &NormSpec::euclidean()),
            Err(Error::Degenerate(_))
        ));
        // f(x) = x_1 in R: Lip 2, displacement 2·P(ε_1 ≠ ε′_1) = 4α(1−α)
        let f = CubeFunction::coordinate(3, 0).unwrap();
        let rep = average_distortion(&f, 0.2, &NormSpec::lp(2.0).unwrap()).unwrap();
        assert!((rep.distortion - 2.0 * expected_hamming(3, 0.2) / (4.0 * 0.2 * 0.8)).abs() < 1e-12);

        let small: Vec<f64> = [8, 32, 128, 512]
            .iter()
            .map(|&n| identity_distortion(n, 1.0 / n as f64).unwrap().distortion)
            .collect();
        assert!(small.iter().all(|d| *d < 2.0), "{small:?}");

        for n in [16, 64, 256, 1024] {
            let rep = identity_distortion(n, 0.25).unwrap();
            let band = rep.distortion / (0.25 * n as f64).sqrt();
            assert!((0.5..=2.0).contains(&band), "{n} {band}");
            assert!(rep.consistent());
        }
    }

    #[test]
    fn lower_bound_examples() {
        let b = lower_bound(0.25, 100, 2.0, 1.0).unwrap();
        assert!((b.value - 0.75 * 5.0 / 64.0).abs() < 1e-15);
        let grows: Vec<f64> = [10, 100, 1000, 10000]
            .iter()
            .map(|&n| lower_bound(5.0 / (n as f64).sqrt() / 10.0, n, 2.0, 1.0).unwrap().value)
            .collect();
        assert!(grows.windows(2).all(|w| w[1] > w[0]));
        let flat = lower_bound(0.1, 50, 1.0, 1.0).unwrap();
        assert!(flat.degenerate && (flat.value - 0.9 / 64.0).abs() < 1e-15);
        assert!(lower_bound(0.6, 10, 2.0, 1.0).is_err());
        assert!(lower_bound(0.5, 10, 2.0, 1.0).is_ok());
        assert!(lower_bound(0.1, 10, 2.5, 1.0).is_err());
    }
}
