//! Derivative-free search for functions that make the type-p corollary tight.
//!
//! The objective is the scale-invariant ratio
//!
//! ```text
//! R(f) = (E‖f − Ef‖^p)^{1/p} / (Σ_i E‖D_i f‖^p)^{1/p}
//! ```
//!
//! which the corollary bounds by `32 T α^{1/p}`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{check_table_dim, BiasedMeasure, CubeFunction};
use crate::error::{check_alpha, check_moment, invalid, Error, Result};
use crate::mc::substream;
use crate::norm::{root, NormSpec};

pub const MAX_SEARCH_N: usize = 5;
pub const MAX_SEARCH_D: usize = 4;

/// Denominators below this are treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

const SCALE_PROBE: f64 = 7.3;

/// `R(f)`; errors when the gradient term is below [`DEGENERATE_DENOMINATOR`].
pub fn extremal_ratio(f: &CubeFunction, measure: &BiasedMeasure, p: f64, norm: &NormSpec) -> Result<f64> {
    let den = root(f.gradient_moment_sum(measure, p, norm)?, p);
    if den < DEGENERATE_DENOMINATOR {
        return Err(Error::Degenerate(format!("gradient term {den:e} is below {DEGENERATE_DENOMINATOR:e}")));
    }
    Ok(f.centered_lp_moment(measure, p, norm)? / den)
}

/// Restart count and steps per restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalBudget {
    pub restarts: usize,
    pub steps: usize,
}

impl ExtremalBudget {
    /// Splits a total evaluation budget into restarts of a few hundred steps.
    pub fn from_evaluations(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(invalid("budget", "must be positive"));
        }
        let restarts = (total / 400).clamp(1, 32);
        Ok(ExtremalBudget {
            restarts,
            steps: total / restarts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalResult {
    pub best: CubeFunction,
    pub ratio: f64,
    /// Best ratio among the known examples used as warm starts.
    pub warm_start_ratio: f64,
    pub evaluations: usize,
}

/// Known good starting points: `ε_1 e_1`, and the scaled identity when it fits.
fn warm_starts(n: usize, d: usize, p: f64) -> Result<Vec<CubeFunction>> {
    let mut out = vec![CubeFunction::from_fn(n, d, |x, o| o[0] = f64::from(x.coord(0)))?];
    if d >= n {
        let s = (n as f64).powf(-1.0 / p);
        out.push(CubeFunction::from_fn(n, d, |x, o| {
            for (j, v) in o.iter_mut().enumerate().take(n) {
                *v = s * f64::from(x.coord(j));
            }
        })?);
    }
    Ok(out)
}

/// Hill climbing from `init` with single-entry Gaussian moves whose size
/// shrinks geometrically by a factor `1e3` over the run.
pub fn hill_climb(
    init: &CubeFunction,
    measure: &BiasedMeasure,
    p: f64,
    norm: &NormSpec,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(CubeFunction, f64)> {
    if init.is_constant() {
        return Err(Error::Degenerate("constant initialization".into()));
    }
    let mut f = init.clone();
    let mut best = extremal_ratio(&f, measure, p, norm)?;
    let spread = f.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut sigma = 0.5 * spread;
    let shrink = 1e-3f64.powf(1.0 / steps.max(1) as f64);
    let len = f.values().len();
    for _ in 0..steps {
        let at = rng.random_range(0..len);
        let step: f64 = rng.sample(StandardNormal);
        let old = f.values()[at];
        f.values_mut()[at] = old + sigma * step;
        match extremal_ratio(&f, measure, p, norm) {
            Ok(r) if r > best => best = r,
            _ => f.values_mut()[at] = old,
        }
        sigma *= shrink;
    }
    Ok((f, best))
}

fn check_scale_invariance(f: &CubeFunction, r: f64, measure: &BiasedMeasure, p: f64, norm: &NormSpec) -> Result<()> {
    let scaled = extremal_ratio(&f.scaled(SCALE_PROBE), measure, p, norm)?;
    if (scaled - r).abs() > 1e-12 * r.max(1.0) {
        return Err(Error::Degenerate(format!("R({SCALE_PROBE} f) = {scaled} but R(f) = {r}")));
    }
    Ok(())
}

/// Random-restart maximization of `R` over `{−1,1}^n → ℓ_q^d`.
///
/// Restart 0 starts from the best warm start; the others from Gaussian
/// tables. Restart `r` draws from substream `(seed, r)`, so the result does
/// not depend on the thread count.
pub fn extremal_search(
    n: usize,
    d: usize,
    alpha: f64,
    p: f64,
    norm: &NormSpec,
    budget: ExtremalBudget,
    seed: u64,
) -> Result<ExtremalResult> {
    check_alpha(alpha)?;
    check_moment(p)?;
    check_table_dim("extremal_search", n, MAX_SEARCH_N)?;
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    if d == 0 || d > MAX_SEARCH_D {
        return Err(invalid("d", format!("{d} is not in 1..={MAX_SEARCH_D}")));
    }
    if budget.restarts == 0 {
        return Err(invalid("budget", "at least one restart is needed"));
    }
    let measure = BiasedMeasure::new(alpha, n)?;
    let mut warm_ratio = f64::NEG_INFINITY;
    let mut warm = None;
    for w in warm_starts(n, d, p)? {
        let r = extremal_ratio(&w, &measure, p, norm)?;
        if r > warm_ratio {
            warm_ratio = r;
            warm = Some(w);
        }
    }
    let warm = warm.expect("at least one warm start");

    let runs = (0..budget.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64, 0);
            let init = if r == 0 {
                warm.clone()
            } else {
                CubeFunction::from_fn(n, d, |_, o| o.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)))?
            };
            let (f, ratio) = hill_climb(&init, &measure, p, norm, budget.steps, &mut rng)?;
            check_scale_invariance(&f, ratio, &measure, p, norm)?;
            Ok((f, ratio))
        })
        .collect::<Result<Vec<_>>>()?;

    let (best, ratio) = runs
        .into_iter()
        .fold(None::<(CubeFunction, f64)>, |acc, (f, r)| match acc {
            Some((_, b)) if b >= r => acc,
            _ => Some((f, r)),
        })
        .expect("at least one restart");
    Ok(ExtremalResult {
        best,
        ratio,
        warm_start_ratio: warm_ratio,
        evaluations: budget.restarts * (budget.steps + 1),
    })
}
