//! Both sides of the biased-cube Pisier inequality and its type-p corollary.
//!
//! For `f : {−1,1}^n → X` the engine checks
//!
//! ```text
//! (E‖f − Ef‖^p)^{1/p} ≤ 4α(1−α) ∫_0^∞ (E‖Σ_i δ_i(t) D_i f(ε)‖^p)^{1/p} dt
//! (E‖f − Ef‖^p)^{1/p} ≤ 32 T α^{1/p} (Σ_i E‖D_i f‖^p)^{1/p}          (α < 1/2)
//! ```
//!
//! The inner expectation is over the stationary pair `(ε, X(t))`. It is
//! computed exactly by enumerating all `4^n` joint states, or estimated by
//! sampling. The time integral goes through [`crate::quadrature`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{check_table_dim, BiasedMeasure, CubeFunction, CubeMap};
use crate::error::{check_alpha, check_moment, check_positive_time, Error, Result};
use crate::mc::{batch_means, McEstimate, McSpec};
use crate::norm::{root, NormSpec};
use crate::params;
use crate::quadrature::{integrate_panels, integrate_time, panel_rule, time_map, QuadratureSpec, Substitution};
use crate::report::{ratio, InequalityReport, Method};
use crate::semigroup::KernelParams;

/// Largest `n` for the exact `4^n` joint enumeration.
pub const MAX_EXACT_JOINT_DIM: usize = 10;

/// Relative slack allowed on proved inequalities in exact mode.
pub const EXACT_RATIO_SLACK: f64 = 1e-6;

/// Evaluation route for the time integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalMode {
    Exact,
    MonteCarlo(McSpec),
}

impl EvalMode {
    pub fn method(&self) -> Method {
        match self {
            EvalMode::Exact => Method::Exact,
            EvalMode::MonteCarlo(_) => Method::Mc,
        }
    }
}

/// A time integral with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhsEstimate {
    pub value: f64,
    pub quadrature_error: f64,
    /// Propagated one-sigma Monte Carlo error; 0 in exact mode.
    pub mc_error: f64,
    pub evaluations: usize,
}

impl RhsEstimate {
    pub fn scaled(self, c: f64) -> Self {
        RhsEstimate {
            value: c * self.value,
            quadrature_error: c * self.quadrature_error,
            mc_error: c * self.mc_error,
            evaluations: self.evaluations,
        }
    }
}

/// Exact `E‖Σ_i δ_i(t) D_i f(ε)‖^p` over the joint law of `(ε, X(t))`.
pub fn rhs_moment_exact(f: &CubeFunction, alpha: f64, t: f64, p: f64, norm: &NormSpec) -> Result<f64> {
    check_table_dim("rhs_integrand_exact", f.dim_n(), MAX_EXACT_JOINT_DIM)?;
    check_positive_time(t)?;
    check_moment(p)?;
    let params = KernelParams::new(alpha, t)?;
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let by_k = measure.weights_by_popcount();
    let kernel = params.matrix();
    let delta = params.delta_table();
    let grads = f.gradient_d();
    let (n, d) = (f.dim_n(), f.dim_d());

    let mut total = 0.0;
    let mut v = vec![0.0; d];
    // per coordinate: [stay, flip] kernel weight and δ
    let mut w_opt = vec![[0.0; 2]; n];
    let mut d_opt = vec![[0.0; 2]; n];
    for eps in 0..f.len() {
        if grads.iter().all(|g| g.row(eps).iter().all(|x| *x == 0.0)) {
            continue;
        }
        for i in 0..n {
            let e = eps >> i & 1;
            w_opt[i] = [kernel[e][e], kernel[e][1 - e]];
            d_opt[i] = [delta[e][e], delta[e][1 - e]];
        }
        let mut inner = 0.0;
        for flips in 0..f.len() {
            let mut w = 1.0;
            v.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let s = flips >> i & 1;
                w *= w_opt[i][s];
                let c = d_opt[i][s];
                for (acc, g) in v.iter_mut().zip(grads[i].row(eps)) {
                    *acc += c * g;
                }
            }
            inner += w * norm.norm_pow(&v, p);
        }
        total += by_k[eps.count_ones() as usize] * inner;
    }
    Ok(total)
}

/// Exact `(E‖Σ_i δ_i(t) D_i f(ε)‖^p)^{1/p}`.
pub fn rhs_integrand_exact(f: &CubeFunction, alpha: f64, t: f64, p: f64, norm: &NormSpec) -> Result<f64> {
    Ok(root(rhs_moment_exact(f, alpha, t, p, norm)?, p))
}

/// Sampled integrand at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrandEstimate {
    /// Estimate of `E‖·‖^p` with its batch-means error (pre-root).
    pub moment: McEstimate,
    /// `moment.mean^{1/p}`.
    pub value: f64,
    /// Delta-method error of `value`; approximate.
    pub value_stderr: f64,
}

fn root_with_error(moment: McEstimate, p: f64) -> IntegrandEstimate {
    let value = root(moment.mean.max(0.0), p);
    let value_stderr = if moment.mean > 0.0 {
        moment.stderr * moment.mean.powf(1.0 / p - 1.0) / p
    } else {
        0.0
    };
    IntegrandEstimate {
        moment,
        value,
        value_stderr,
    }
}

/// Smallest per-coordinate flip probability used by the sampler's proposal.
///
/// At small `t` a flip is rare but carries a δ of order `1/t`, so plain
/// sampling misses the dominant contribution. Flips are drawn with probability
/// at least `1/(2n)` and reweighted by the likelihood ratio.
fn proposal_flip(q: f64, n: usize) -> f64 {
    q.max((0.5 / n as f64).min(0.5))
}

/// One importance-weighted draw of `‖Σ_i δ_i(t) D_i f(ε)‖^p` with `ε ~ μ` and
/// `X(t)` from the kernel.
fn draw_rhs_sample<M: CubeMap + ?Sized>(
    f: &M,
    alpha: f64,
    kernel: &[[f64; 2]; 2],
    delta: &[[f64; 2]; 2],
    p: f64,
    norm: &NormSpec,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let (n, d) = (f.dim_n(), f.dim_d());
    let mut eps = 0u64;
    for i in 0..n {
        if rng.random::<f64>() < alpha {
            eps |= 1 << i;
        }
    }
    let mut here = vec![0.0; d];
    let mut there = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut weight = 1.0;
    f.eval_into(eps, &mut here);
    for i in 0..n {
        let e = (eps >> i & 1) as usize;
        let q = kernel[e][1 - e];
        let q_prop = proposal_flip(q, n);
        let flip = rng.random::<f64>() < q_prop;
        weight *= if flip { q / q_prop } else { (1.0 - q) / (1.0 - q_prop) };
        let c = delta[e][if flip { 1 - e } else { e }];
        f.eval_into(eps ^ (1 << i), &mut there);
        for j in 0..d {
            v[j] += c * 0.5 * (here[j] - there[j]);
        }
    }
    weight * norm.norm_pow(&v, p)
}

/// Monte Carlo estimate of the integrand; `unit` selects the random substream.
pub fn rhs_integrand_mc<M: CubeMap + ?Sized>(
    f: &M,
    alpha: f64,
    t: f64,
    p: f64,
    norm: &NormSpec,
    mc: &McSpec,
    unit: u64,
) -> Result<IntegrandEstimate> {
    check_alpha(alpha)?;
    check_positive_time(t)?;
    check_moment(p)?;
    let params = KernelParams::new(alpha, t)?;
    let kernel = params.matrix();
    let delta = params.delta_table();
    let moment = batch_means(mc, unit, |rng| {
        draw_rhs_sample(f, alpha, &kernel, &delta, p, norm, rng)
    })?;
    Ok(root_with_error(moment, p))
}

/// `∫_0^∞ g(t) dt` for a sampled integrand on the fixed panel rule.
///
/// The panel rule runs in `s` with `u = s^p` so the `u^{1/p−1}` growth at
/// small times is absorbed. Node `k` uses random substream `unit_base + k`.
pub(crate) fn integrate_sampled<G>(p: f64, quad: &QuadratureSpec, mut sample: G) -> Result<RhsEstimate>
where
    G: FnMut(usize, f64) -> Result<IntegrandEstimate>,
{
    quad.validate()?;
    let sub = match quad.substitution {
        Substitution::ExponentialPower(k) => Substitution::ExponentialPower(k),
        Substitution::Exponential => Substitution::ExponentialPower(p),
    };
    let rule = panel_rule(0.0, 1.0, quad.panels);
    let mut values = Vec::with_capacity(rule.len());
    let mut value = 0.0;
    let mut var = 0.0;
    for (k, &(v, w)) in rule.iter().enumerate() {
        let (t, jac) = time_map(v, sub);
        let g = if jac == 0.0 {
            IntegrandEstimate {
                moment: McEstimate {
                    mean: 0.0,
                    stderr: 0.0,
                    samples: 0,
                },
                value: 0.0,
                value_stderr: 0.0,
            }
        } else {
            sample(k, t)?
        };
        let y = g.value * jac;
        values.push(y);
        value += w * y;
        var += (w * jac * g.value_stderr).powi(2);
    }
    let mut it = values.iter();
    let check = integrate_panels(|_| Ok(*it.next().expect("same rule")), 0.0, 1.0, quad.panels)?;
    debug_assert!((check.value - value).abs() <= 1e-9 * value.abs().max(1.0));
    Ok(RhsEstimate {
        value,
        quadrature_error: check.error,
        mc_error: var.sqrt(),
        evaluations: rule.len(),
    })
}

/// `4α(1−α) ∫_0^∞ (E‖Σ_i δ_i(t) D_i f(ε)‖^p)^{1/p} dt`.
pub fn theorem_rhs(
    f: &CubeFunction,
    alpha: f64,
    p: f64,
    norm: &NormSpec,
    quad: &QuadratureSpec,
    mode: &EvalMode,
) -> Result<RhsEstimate> {
    check_alpha(alpha)?;
    check_moment(p)?;
    let scale = 4.0 * alpha * (1.0 - alpha);
    if f.is_constant() {
        return Ok(RhsEstimate {
            value: 0.0,
            quadrature_error: 0.0,
            mc_error: 0.0,
            evaluations: 0,
        });
    }
    match mode {
        EvalMode::Exact => {
            check_table_dim("theorem_rhs", f.dim_n(), MAX_EXACT_JOINT_DIM)?;
            let r = integrate_time(|t| rhs_integrand_exact(f, alpha, t, p, norm), quad)?;
            Ok(RhsEstimate {
                value: r.value,
                quadrature_error: r.error,
                mc_error: 0.0,
                evaluations: r.evaluations,
            }
            .scaled(scale))
        }
        EvalMode::MonteCarlo(mc) => {
            let est = integrate_sampled(p, quad, |k, t| rhs_integrand_mc(f, alpha, t, p, norm, mc, k as u64))?;
            Ok(est.scaled(scale))
        }
    }
}

/// Checks the biased-cube Pisier inequality for `f`.
pub fn verify_theorem(
    f: &CubeFunction,
    alpha: f64,
    p: f64,
    norm: &NormSpec,
    quad: &QuadratureSpec,
    mode: &EvalMode,
) -> Result<InequalityReport> {
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let lhs = f.centered_lp_moment(&measure, p, norm)?;
    let rhs = theorem_rhs(f, alpha, p, norm, quad, mode)?;
    let mut params = params! {
        "n" => f.dim_n(), "d" => f.dim_d(), "alpha" => alpha, "p" => p,
        "q" => norm.q, "T" => norm.type_constant,
        "quadrature_tolerance" => quad.tolerance,
    };
    let mut notes = vec![format!("quadrature_error={:.3e}", rhs.quadrature_error)];
    let (pass, error_estimate) = match mode {
        EvalMode::Exact => (
            lhs <= rhs.value * (1.0 + EXACT_RATIO_SLACK) + rhs.quadrature_error,
            rhs.quadrature_error,
        ),
        EvalMode::MonteCarlo(mc) => {
            params.insert("seed".into(), mc.seed.into());
            params.insert("samples".into(), mc.samples.into());
            params.insert("batches".into(), mc.batches.into());
            notes.push(format!("mc_error={:.3e} (root of batch-means CI, approximate)", rhs.mc_error));
            (
                lhs <= rhs.value + 3.0 * rhs.mc_error + rhs.quadrature_error,
                rhs.mc_error + rhs.quadrature_error,
            )
        }
    };
    Ok(InequalityReport {
        lhs,
        rhs: rhs.value,
        ratio: ratio(lhs, rhs.value),
        method: mode.method(),
        error_estimate,
        params,
        pass,
        notes,
    })
}

/// `min(α, 1−α)`, with a flag saying whether the reflection was applied.
pub fn effective_alpha(alpha: f64) -> (f64, bool) {
    if alpha >= 0.5 {
        (1.0 - alpha, true)
    } else {
        (alpha, false)
    }
}

/// Right side of the type-p corollary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRhs {
    pub value: f64,
    pub gradient_moment_sum: f64,
    pub effective_alpha: f64,
    pub reflected: bool,
}

/// `32 T α^{1/p} (Σ_i E‖D_i f‖^p)^{1/p}`, with `α ↦ 1 − α` applied when
/// `α ≥ 1/2`.
pub fn corollary_rhs(f: &CubeFunction, alpha: f64, p: f64, norm: &NormSpec) -> Result<CorollaryRhs> {
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let sum = f.gradient_moment_sum(&measure, p, norm)?;
    let (a, reflected) = effective_alpha(alpha);
    Ok(CorollaryRhs {
        value: 32.0 * norm.type_constant * a.powf(1.0 / p) * root(sum, p),
        gradient_moment_sum: sum,
        effective_alpha: a,
        reflected,
    })
}

/// Checks the type-p corollary exactly.
pub fn verify_corollary(f: &CubeFunction, alpha: f64, p: f64, norm: &NormSpec) -> Result<InequalityReport> {
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let lhs = f.centered_lp_moment(&measure, p, norm)?;
    let rhs = corollary_rhs(f, alpha, p, norm)?;
    let mut notes = Vec::new();
    if rhs.reflected {
        notes.push(format!("alpha >= 1/2: bound uses 1 - alpha = {}", rhs.effective_alpha));
    }
    Ok(InequalityReport {
        lhs,
        rhs: rhs.value,
        ratio: ratio(lhs, rhs.value),
        method: Method::Exact,
        error_estimate: 0.0,
        params: params! {
            "n" => f.dim_n(), "d" => f.dim_d(), "alpha" => alpha, "p" => p,
            "q" => norm.q, "T" => norm.type_constant,
        },
        pass: lhs <= rhs.value * (1.0 + EXACT_RATIO_SLACK),
        notes,
    })
}

/// `(α (2(1−α))^p + (1−α)(2α)^p)^{1/p}`: the centered moment of `ε_1`, and of
/// the scaled identity in `ℓ_p^n` for every `n`.
pub fn sharpness_closed_form(alpha: f64, p: f64) -> f64 {
    (alpha * (2.0 * (1.0 - alpha)).powf(p) + (1.0 - alpha) * (2.0 * alpha).powf(p)).powf(1.0 / p)
}

/// One row of [`sharpness_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub alpha: f64,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `lhs / α^{1/p}`.
    pub order_ratio: f64,
    /// `2^{1−1/p}(1−α) ≤ order_ratio ≤ 4`.
    pub within_band: bool,
}

/// Scans the scaled-identity example over `alpha_grid ⊂ (0, 1/2)`.
///
/// `lhs` is the closed form; `rhs` is the corollary bound `32 α^{1/p}` (with
/// `T = 1`, and `Σ_i E‖D_i f‖^p = 1` for this example).
pub fn sharpness_scan(p: f64, n: usize, alpha_grid: &[f64]) -> Result<Vec<SharpnessRow>> {
    check_moment(p)?;
    if n == 0 {
        return Err(crate::error::invalid("n", "must be positive"));
    }
    alpha_grid
        .iter()
        .map(|&alpha| {
            check_alpha(alpha)?;
            if alpha >= 0.5 {
                return Err(crate::error::invalid("alpha", format!("{alpha} is not below 1/2")));
            }
            let lhs = sharpness_closed_form(alpha, p);
            let rhs = 32.0 * alpha.powf(1.0 / p);
            let order_ratio = lhs / alpha.powf(1.0 / p);
            let lower = 2f64.powf(1.0 - 1.0 / p) * (1.0 - alpha);
            Ok(SharpnessRow {
                alpha,
                p,
                lhs,
                rhs,
                ratio: lhs / rhs,
                order_ratio,
                within_band: order_ratio >= lower * (1.0 - 1e-12) && order_ratio <= 4.0,
            })
        })
        .collect()
}

/// The corollary's constant chain: the bound obtained by inserting the δ moment
/// estimate into the theorem, `8α(1−α) T p (2α)^{1/p−1}`, next to the stated
/// `32 T α^{1/p}`. Returns `(derived, stated)` with `T = 1`.
pub fn corollary_constant_chain(alpha: f64, p: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if alpha >= 0.5 {
        return Err(crate::error::invalid("alpha", "the chain assumes alpha < 1/2"));
    }
    let derived = 8.0 * alpha * (1.0 - alpha) * p * (2.0 * alpha).powf(1.0 / p - 1.0);
    let stated = 32.0 * alpha.powf(1.0 / p);
    Ok((derived, stated))
}

/// Guard used by the CLI before dispatching an exact run.
pub fn check_exact_size(n: usize) -> Result<()> {
    if n > MAX_EXACT_JOINT_DIM {
        return Err(Error::DimensionTooLarge {
            op: "exact joint enumeration",
            n,
            max: MAX_EXACT_JOINT_DIM,
        });
    }
    Ok(())
}
