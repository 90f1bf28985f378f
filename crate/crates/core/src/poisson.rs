//! The product-Poisson inequality, its type-p corollary, and the bridge from
//! the biased cube at `α = 1/n`.
//!
//! Functions on `N^m` are stored on the box `{0,…,K−1}^m` and extended
//! constantly beyond it (each coordinate is clamped to `K − 1`). Under that
//! extension every forward difference vanishes at the cutoff, and lumping the
//! Poisson tail `P(N_i ≥ K−1)` into the last cell makes lattice sums exact for
//! the extended function. What is reported as truncation error is the worst
//! case for a bounded `f` that differs from the extension beyond the box.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{check_table_dim, CubeFunction};
use crate::error::{check_moment, check_positive_time, invalid, Error, Result};
use crate::inequality::{integrate_sampled, EvalMode, IntegrandEstimate, RhsEstimate, EXACT_RATIO_SLACK};
use crate::mc::{batch_means, McSpec};
use crate::norm::{root, NormSpec};
use crate::params;
use crate::quadrature::{integrate_time, QuadratureSpec};
use crate::report::{ratio, InequalityReport, Method};
use crate::semigroup::KernelParams;

/// Largest number of table rows `K^m`.
pub const MAX_POISSON_TABLE: usize = 1 << 24;

/// Limit on `m · P(Poisson(1) ≥ K)`.
pub const CUTOFF_MASS_LIMIT: f64 = 1e-8;

/// Largest joint state count `K^m · J^m` for the exact Poisson integrand.
pub const MAX_EXACT_POISSON_STATES: usize = 1 << 22;

/// Largest `m · n` for structured cube functions.
pub const MAX_STRUCTURED_DIM: usize = 20;

/// A bounded `f : N^m → R^d` given on `{0,…,K−1}^m`.
///
/// Row index of `(x_0, …, x_{m−1})` is `Σ_i x_i K^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFunction {
    m: usize,
    k: usize,
    d: usize,
    values: Vec<f64>,
}

fn table_rows(m: usize, k: usize) -> Result<usize> {
    if m == 0 {
        return Err(invalid("m", "must be positive"));
    }
    if k < 2 {
        return Err(invalid("k", format!("cutoff {k} is below 2")));
    }
    let mut rows = 1usize;
    for _ in 0..m {
        rows = rows
            .checked_mul(k)
            .filter(|r| *r <= MAX_POISSON_TABLE)
            .ok_or(Error::DimensionTooLarge {
                op: "poisson table",
                n: m,
                max: MAX_POISSON_TABLE.ilog(k) as usize,
            })?;
    }
    Ok(rows)
}

impl PoissonFunction {
    pub fn from_values(m: usize, k: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        let rows = table_rows(m, k)?;
        if d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        if values.len() != rows * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {rows} rows of {d} values, got {} values",
                values.len()
            )));
        }
        Ok(PoissonFunction { m, k, d, values })
    }

    /// Tabulates `f(x, out)` over the box.
    pub fn from_fn(m: usize, k: usize, d: usize, mut f: impl FnMut(&[usize], &mut [f64])) -> Result<Self> {
        let rows = table_rows(m, k)?;
        if d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        let mut values = vec![0.0; rows * d];
        let mut x = vec![0usize; m];
        for (r, chunk) in values.chunks_mut(d).enumerate() {
            decode(r, k, &mut x);
            f(&x, chunk);
        }
        Ok(PoissonFunction { m, k, d, values })
    }

    pub fn constant(m: usize, k: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(m, k, value.len(), |_, o| o.copy_from_slice(value))
    }

    pub fn dim_m(&self) -> usize {
        self.m
    }

    pub fn cutoff(&self) -> usize {
        self.k
    }

    pub fn dim_d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.d..(r + 1) * self.d]
    }

    /// Row index of `x` after clamping each coordinate to `K − 1`.
    pub fn index_clamped(&self, x: &[usize]) -> usize {
        x.iter().rev().fold(0, |acc, &xi| acc * self.k + xi.min(self.k - 1))
    }

    /// Value at any lattice point, using the constant extension.
    pub fn eval(&self, x: &[usize]) -> Result<&[f64]> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch(format!("point has {} coordinates, m = {}", x.len(), self.m)));
        }
        Ok(self.row(self.index_clamped(x)))
    }

    /// `max ‖f(x)‖` over the table, which is also the sup of the extension.
    pub fn sup_norm(&self, norm: &NormSpec) -> f64 {
        self.values.chunks(self.d).map(|v| norm.norm(v)).fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.row(0);
        self.values.chunks(self.d).all(|r| r == first)
    }
}

fn decode(mut r: usize, k: usize, x: &mut [usize]) {
    for xi in x.iter_mut() {
        *xi = r % k;
        r /= k;
    }
}

/// Forward difference `D_i^Z f(x) = f(x + e_i) − f(x)` on the box; zero at
/// `x_i = K − 1`.
pub fn dz_derivative(f: &PoissonFunction, i: usize) -> Result<PoissonFunction> {
    if i >= f.m {
        return Err(Error::IndexOutOfRange { index: i, n: f.m });
    }
    let stride = f.k.pow(i as u32);
    let d = f.d;
    let mut out = vec![0.0; f.values.len()];
    for r in 0..f.len() {
        if (r / stride) % f.k + 1 < f.k {
            let (a, b) = (f.row(r + stride), f.row(r));
            for j in 0..d {
                out[r * d + j] = a[j] - b[j];
            }
        }
    }
    PoissonFunction::from_values(f.m, f.k, d, out)
}

/// `P(η = j)` for `η ~ Poisson(λ)`, `j = 0..len`.
pub fn poisson_pmf(lambda: f64, len: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(len);
    let mut p = (-lambda).exp();
    for j in 0..len {
        pmf.push(p);
        p *= lambda / (j + 1) as f64;
    }
    pmf
}

/// `P(η ≥ len)` for `η ~ Poisson(λ)`, summed forward from `len` so it keeps
/// full relative accuracy.
pub fn poisson_tail(lambda: f64, len: usize) -> f64 {
    let mut p = (-lambda).exp();
    for j in 1..=len {
        p *= lambda / j as f64;
    }
    let mut tail = 0.0;
    let mut j = len;
    while p > tail * 1e-18 {
        tail += p;
        j += 1;
        p *= lambda / j as f64;
    }
    tail
}

/// Poisson(1) weights on `{0,…,K−1}` with the tail mass lumped into `K − 1`.
pub fn lumped_weights(k: usize) -> Vec<f64> {
    let mut w = poisson_pmf(1.0, k);
    w[k - 1] += poisson_tail(1.0, k);
    w
}

/// Checks `m · P(Poisson(1) ≥ K)` against [`CUTOFF_MASS_LIMIT`].
pub fn check_cutoff(m: usize, k: usize) -> Result<f64> {
    let mass = m as f64 * poisson_tail(1.0, k);
    if mass > CUTOFF_MASS_LIMIT {
        return Err(Error::CutoffMassTooLarge {
            mass,
            limit: CUTOFF_MASS_LIMIT,
        });
    }
    Ok(mass)
}

/// `Σ_x Π_i w(x_i) h(x)` over the box with lumped weights.
fn lattice_sum(f: &PoissonFunction, mut h: impl FnMut(usize) -> f64) -> f64 {
    let w = lumped_weights(f.k);
    let mut x = vec![0usize; f.m];
    let mut total = 0.0;
    for r in 0..f.len() {
        decode(r, f.k, &mut x);
        let weight: f64 = x.iter().map(|&xi| w[xi]).product();
        total += weight * h(r);
    }
    total
}

/// `E f(N)` for `N ~ Poisson(1)^{⊗m}`.
pub fn poisson_expect(f: &PoissonFunction) -> Vec<f64> {
    (0..f.d)
        .map(|j| lattice_sum(f, |r| f.row(r)[j]))
        .collect()
}

/// A truncated-lattice value with the worst-case effect of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    pub value: f64,
    pub tail_error_bound: f64,
    /// `m · P(Poisson(1) ≥ K)`.
    pub outside_mass: f64,
}

/// `(E‖f(N) − E f(N)‖^p)^{1/p}`.
///
/// Exact for the constant extension. The bound `4 ‖f‖_∞ (mass)^{1/p}` covers
/// any other `f` with the same sup norm that agrees on the box.
pub fn poisson_lhs(f: &PoissonFunction, p: f64, norm: &NormSpec) -> Result<Truncated> {
    check_moment(p)?;
    let outside_mass = check_cutoff(f.m, f.k)?;
    if f.is_constant() {
        return Ok(Truncated {
            value: 0.0,
            tail_error_bound: 0.0,
            outside_mass,
        });
    }
    let mean = poisson_expect(f);
    let mut diff = vec![0.0; f.d];
    let moment = lattice_sum(f, |r| {
        for (j, x) in diff.iter_mut().enumerate() {
            *x = f.row(r)[j] - mean[j];
        }
        norm.norm_pow(&diff, p)
    });
    Ok(Truncated {
        value: root(moment, p),
        tail_error_bound: 4.0 * f.sup_norm(norm) * root(outside_mass, p),
        outside_mass,
    })
}

/// `Σ_i E‖D_i^Z f(N)‖^p`.
pub fn poisson_gradient_sum(f: &PoissonFunction, p: f64, norm: &NormSpec) -> Result<f64> {
    check_moment(p)?;
    let mut total = 0.0;
    for i in 0..f.m {
        let g = dz_derivative(f, i)?;
        total += lattice_sum(&g, |r| norm.norm_pow(g.row(r), p));
    }
    Ok(total)
}

/// Checks `(E‖f − Ef‖^p)^{1/p} ≤ 4 T (Σ_i E‖D_i^Z f‖^p)^{1/p}` on the lattice.
pub fn verify_poisson_corollary(f: &PoissonFunction, p: f64, norm: &NormSpec) -> Result<InequalityReport> {
    let lhs = poisson_lhs(f, p, norm)?;
    let sum = poisson_gradient_sum(f, p, norm)?;
    let rhs = 4.0 * norm.type_constant * root(sum, p);
    Ok(InequalityReport {
        lhs: lhs.value,
        rhs,
        ratio: ratio(lhs.value, rhs),
        method: Method::Exact,
        error_estimate: lhs.tail_error_bound,
        params: params! {
            "m" => f.m, "K" => f.k, "d" => f.d, "p" => p,
            "q" => norm.q, "T" => norm.type_constant,
        },
        pass: lhs.value <= rhs * (1.0 + EXACT_RATIO_SLACK),
        notes: vec![format!("outside_mass={:.3e}", lhs.outside_mass)],
    })
}

/// `λ(t) = 1 − e^{−t}`.
fn eta_rate(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `η̃ = e^{−t} − e^{−t} η / (1 − e^{−t})`.
pub fn eta_tilde_value(t: f64, eta: u64) -> f64 {
    let decay = (-t).exp();
    decay - decay * eta as f64 / eta_rate(t)
}

/// One draw of the centered multiplier `η̃(t)` with its time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaTilde {
    pub t: f64,
    pub value: f64,
}

/// Poisson draw by sequential inversion.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the cap only matters when rounding leaves cdf just below u
    while u > cdf && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

pub fn sample_eta_tilde<R: Rng + ?Sized>(t: f64, rng: &mut R) -> Result<EtaTilde> {
    check_positive_time(t)?;
    let eta = sample_poisson(eta_rate(t), rng);
    Ok(EtaTilde {
        t,
        value: eta_tilde_value(t, eta),
    })
}

/// `E η̃² = e^{−2t} / (1 − e^{−t})`.
pub fn eta_tilde_second_moment(t: f64) -> Result<f64> {
    check_positive_time(t)?;
    Ok((-2.0 * t).exp() / eta_rate(t))
}

/// Number of `η` values kept so the neglected part of `E|η̃|^p`-type sums is
/// below `1e−18` relative to the scale `λ^{−2}`.
fn eta_support(lambda: f64) -> usize {
    let mut j = 2usize;
    let mut pj = (-lambda).exp() * lambda * lambda / 2.0;
    while j < 60 && pj * (j as f64 / lambda).powi(2) > 1e-18 {
        j += 1;
        pj *= lambda / j as f64;
    }
    j + 1
}

/// `E|η̃(t)|^p` by a truncated exact Poisson sum.
pub fn eta_tilde_abs_moment(t: f64, p: f64) -> Result<f64> {
    check_positive_time(t)?;
    check_moment(p)?;
    let lambda = eta_rate(t);
    let pmf = poisson_pmf(lambda, eta_support(lambda));
    Ok(pmf
        .iter()
        .enumerate()
        .map(|(j, w)| w * eta_tilde_value(t, j as u64).abs().powf(p))
        .sum())
}

/// Exact `E‖Σ_i η̃_i(t) D_i^Z f(N)‖^p` by enumerating `N` on the lumped box and
/// `η` on a truncated support.
pub fn poisson_rhs_moment_exact(f: &PoissonFunction, t: f64, p: f64, norm: &NormSpec) -> Result<f64> {
    check_positive_time(t)?;
    check_moment(p)?;
    let lambda = eta_rate(t);
    let support = eta_support(lambda);
    let eta_states = support
        .checked_pow(f.m as u32)
        .filter(|s| s.saturating_mul(f.len()) <= MAX_EXACT_POISSON_STATES)
        .ok_or(Error::DimensionTooLarge {
            op: "exact poisson integrand",
            n: f.m,
            max: 2,
        })?;
    let grads: Vec<PoissonFunction> = (0..f.m).map(|i| dz_derivative(f, i)).collect::<Result<_>>()?;
    let pmf = poisson_pmf(lambda, support);
    let tilde: Vec<f64> = (0..support).map(|j| eta_tilde_value(t, j as u64)).collect();
    let mut eta = vec![0usize; f.m];
    let mut v = vec![0.0; f.d];
    Ok(lattice_sum(f, |r| {
        if grads.iter().all(|g| g.row(r).iter().all(|x| *x == 0.0)) {
            return 0.0;
        }
        let mut inner = 0.0;
        for s in 0..eta_states {
            decode(s, support, &mut eta);
            let w: f64 = eta.iter().map(|&e| pmf[e]).product();
            v.iter_mut().for_each(|x| *x = 0.0);
            for (i, g) in grads.iter().enumerate() {
                let c = tilde[eta[i]];
                for (acc, gi) in v.iter_mut().zip(g.row(r)) {
                    *acc += c * gi;
                }
            }
            inner += w * norm.norm_pow(&v, p);
        }
        inner
    }))
}

/// Importance-weighted Monte Carlo estimate of the Poisson integrand.
///
/// `η_i` is drawn from `Poisson(max(λ, 1/2))` and reweighted, so the rare
/// `η ≥ 1` events that dominate at small `t` are sampled often.
pub fn poisson_rhs_integrand_mc(
    f: &PoissonFunction,
    t: f64,
    p: f64,
    norm: &NormSpec,
    mc: &McSpec,
    unit: u64,
) -> Result<IntegrandEstimate> {
    check_positive_time(t)?;
    check_moment(p)?;
    let grads: Vec<PoissonFunction> = (0..f.m).map(|i| dz_derivative(f, i)).collect::<Result<_>>()?;
    let lambda = eta_rate(t);
    let proposal = lambda.max(0.5);
    let log_ratio = (lambda / proposal).ln();
    let moment = batch_means(mc, unit, |rng: &mut ChaCha8Rng| {
        let mut n = vec![0usize; f.m];
        for x in n.iter_mut() {
            *x = sample_poisson(1.0, rng) as usize;
        }
        let r = f.index_clamped(&n);
        let mut v = vec![0.0; f.d];
        let mut log_w = 0.0;
        for g in &grads {
            let eta = sample_poisson(proposal, rng);
            log_w += eta as f64 * log_ratio + proposal - lambda;
            let c = eta_tilde_value(t, eta);
            for (acc, gi) in v.iter_mut().zip(g.row(r)) {
                *acc += c * gi;
            }
        }
        log_w.exp() * norm.norm_pow(&v, p)
    })?;
    let value = root(moment.mean.max(0.0), p);
    let value_stderr = if moment.mean > 0.0 {
        moment.stderr * moment.mean.powf(1.0 / p - 1.0) / p
    } else {
        0.0
    };
    Ok(IntegrandEstimate {
        moment,
        value,
        value_stderr,
    })
}

/// `∫_0^∞ (E‖Σ_i η̃_i(t) D_i^Z f(N)‖^p)^{1/p} dt`.
pub fn poisson_theorem_rhs(
    f: &PoissonFunction,
    p: f64,
    norm: &NormSpec,
    quad: &QuadratureSpec,
    mode: &EvalMode,
) -> Result<RhsEstimate> {
    check_moment(p)?;
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
            let r = integrate_time(|t| Ok(root(poisson_rhs_moment_exact(f, t, p, norm)?, p)), quad)?;
            Ok(RhsEstimate {
                value: r.value,
                quadrature_error: r.error,
                mc_error: 0.0,
                evaluations: r.evaluations,
            })
        }
        EvalMode::MonteCarlo(mc) => {
            integrate_sampled(p, quad, |k, t| poisson_rhs_integrand_mc(f, t, p, norm, mc, k as u64))
        }
    }
}

/// Checks the Poisson inequality; in sampling mode the contract is
/// `lhs ≤ rhs + 3·(propagated error)`.
pub fn verify_poisson_theorem(
    f: &PoissonFunction,
    p: f64,
    norm: &NormSpec,
    quad: &QuadratureSpec,
    mode: &EvalMode,
) -> Result<InequalityReport> {
    let lhs = poisson_lhs(f, p, norm)?;
    let rhs = poisson_theorem_rhs(f, p, norm, quad, mode)?;
    let mut params = params! {
        "m" => f.m, "K" => f.k, "d" => f.d, "p" => p,
        "q" => norm.q, "T" => norm.type_constant,
        "quadrature_tolerance" => quad.tolerance,
    };
    let mut notes = vec![
        format!("outside_mass={:.3e}", lhs.outside_mass),
        format!("tail_error_bound={:.3e}", lhs.tail_error_bound),
        format!("quadrature_error={:.3e}", rhs.quadrature_error),
    ];
    let pass = match mode {
        EvalMode::Exact => lhs.value <= rhs.value * (1.0 + EXACT_RATIO_SLACK) + rhs.quadrature_error,
        EvalMode::MonteCarlo(mc) => {
            params.insert("seed".into(), mc.seed.into());
            params.insert("samples".into(), mc.samples.into());
            params.insert("batches".into(), mc.batches.into());
            notes.push(format!("mc_error={:.3e} (approximate)", rhs.mc_error));
            lhs.value <= rhs.value + 3.0 * rhs.mc_error + rhs.quadrature_error
        }
    };
    Ok(InequalityReport {
        lhs: lhs.value,
        rhs: rhs.value,
        ratio: ratio(lhs.value, rhs.value),
        method: mode.method(),
        error_estimate: rhs.mc_error + rhs.quadrature_error,
        params,
        pass,
        notes,
    })
}

/// Sum of the Y-recoded coordinates in each row of an `m × n` cube point.
fn row_sums(eps: usize, m: usize, n: usize, out: &mut [usize]) {
    let mask = (1usize << n) - 1;
    for (i, s) in out.iter_mut().enumerate().take(m) {
        *s = ((eps >> (i * n)) & mask).count_ones() as usize;
    }
}

/// `g(ε) = f(Σ_j Y_{1j}, …, Σ_j Y_{mj})` on `{−1,1}^{m×n}`, `Y = (ε+1)/2`.
///
/// Coordinate `(i, j)` is bit `i·n + j`; row sums are clamped at `K − 1`.
pub fn build_structured_g(f: &PoissonFunction, n: usize) -> Result<CubeFunction> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    check_table_dim("build_structured_g", f.m * n, MAX_STRUCTURED_DIM)?;
    let mut sums = vec![0usize; f.m];
    CubeFunction::from_fn(f.m * n, f.d, |x, out| {
        row_sums(x.index() as usize, f.m, n, &mut sums);
        out.copy_from_slice(f.row(f.index_clamped(&sums)));
    })
}

/// Largest pointwise gap between `D_{ij} g` and
/// `½[f(S) − f(S − ε_{ij} e_i)]`.
pub fn structured_derivative_residual(f: &PoissonFunction, n: usize) -> Result<f64> {
    let g = build_structured_g(f, n)?;
    let mut worst = 0.0f64;
    let mut sums = vec![0usize; f.m];
    for i in 0..f.m {
        for j in 0..n {
            let bit = i * n + j;
            let dg = g.derivative_d(bit)?;
            for eps in 0..g.len() {
                row_sums(eps, f.m, n, &mut sums);
                let here = f.row(f.index_clamped(&sums)).to_vec();
                if eps >> bit & 1 == 1 {
                    sums[i] -= 1;
                } else {
                    sums[i] += 1;
                }
                let there = f.row(f.index_clamped(&sums));
                for c in 0..f.d {
                    let want = 0.5 * (here[c] - there[c]);
                    worst = worst.max((dg.row(eps)[c] - want).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// `P(X = k)`, `X ~ Binomial(trials, q)`, for `k = 0..len`.
pub fn binomial_pmf(trials: usize, q: f64, len: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; len];
    if len == 0 {
        return pmf;
    }
    if q <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if q >= 1.0 {
        if trials < len {
            pmf[trials] = 1.0;
        }
        return pmf;
    }
    // the recurrence runs in log space so a subnormal (1−q)^n start loses nothing
    let mut log_p = trials as f64 * (-q).ln_1p();
    let log_odds = q.ln() - (-q).ln_1p();
    for (k, slot) in pmf.iter_mut().enumerate().take(trials + 1) {
        *slot = log_p.exp();
        log_p += ((trials - k) as f64 / (k + 1) as f64).ln() + log_odds;
    }
    pmf
}

/// One row of the binomial-limit table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub n: usize,
    pub t: f64,
    pub tv_distance: f64,
    /// Prelimit plus limit mass outside the support box.
    pub outside_mass: f64,
}

/// Limit on the mass the support box may leave out.
pub const TV_OUTSIDE_LIMIT: f64 = 1e-8;

/// Total variation between the law of `(S_n, B^{(n)})` and
/// `Poisson(1) ⊗ Poisson(1 − e^{−t})`, for each `n`.
///
/// `S_n ~ Binomial(n, 1/n)` and, given `S_n = k`,
/// `B^{(n)} ~ Binomial(n − k, (1 − e^{−t})/n)`: the number of `−1` coordinates
/// that the walk at `α = 1/n` has moved to `+1` by time `t`.
pub fn binomial_limit_experiment(n_list: &[usize], t: f64, support_cutoff: usize) -> Result<Vec<TvRow>> {
    check_positive_time(t)?;
    if support_cutoff < 2 {
        return Err(invalid("support_cutoff", "must be at least 2"));
    }
    let c = support_cutoff;
    let lambda = eta_rate(t);
    let limit_n = poisson_pmf(1.0, c);
    let limit_b = poisson_pmf(lambda, c);
    let limit_out = 1.0 - limit_n.iter().sum::<f64>() * limit_b.iter().sum::<f64>();
    n_list
        .par_iter()
        .map(|&n| {
            if n < 2 {
                return Err(invalid("n", format!("{n} is below 2")));
            }
            let alpha = 1.0 / n as f64;
            let q = KernelParams::new(alpha, t)?.matrix()[0][1];
            let s = binomial_pmf(n, alpha, c);
            let mut inside = 0.0;
            let mut tv = 0.0;
            for (k, &sk) in s.iter().enumerate() {
                let b = binomial_pmf(n.saturating_sub(k), q, c);
                for (j, &bj) in b.iter().enumerate() {
                    let pre = sk * bj;
                    inside += pre;
                    tv += (pre - limit_n[k] * limit_b[j]).abs();
                }
            }
            let outside_mass = (1.0 - inside).max(0.0) + limit_out.max(0.0);
            if outside_mass > TV_OUTSIDE_LIMIT {
                return Err(Error::CutoffMassTooLarge {
                    mass: outside_mass,
                    limit: TV_OUTSIDE_LIMIT,
                });
            }
            Ok(TvRow {
                n,
                t,
                tv_distance: 0.5 * tv,
                outside_mass,
            })
        })
        .collect()
}

/// `TV(Binomial(n, 1/n), Poisson(1))` on `{0,…,cutoff−1}`.
pub fn binomial_poisson_marginal_tv(n: usize, support_cutoff: usize) -> f64 {
    let b = binomial_pmf(n, 1.0 / n as f64, support_cutoff);
    let p = poisson_pmf(1.0, support_cutoff);
    0.5 * b.iter().zip(&p).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Per-row state of the count reduction: probability, row sum, and the
/// coefficient sums over the `+1` and `−1` coordinates of the row.
#[derive(Debug, Clone, Copy)]
struct RowState {
    prob: f64,
    k: usize,
    plus: f64,
    minus: f64,
}

/// Row states are dropped below this probability.
const ROW_STATE_FLOOR: f64 = 1e-20;

fn row_states(n: usize, alpha: f64, params: &KernelParams) -> Vec<RowState> {
    let kernel = params.matrix();
    let delta = params.delta_table();
    let s = binomial_pmf(n, alpha, n + 1);
    let mut out = Vec::new();
    for (k, &sk) in s.iter().enumerate() {
        // A of the k plus-coordinates stay up; B of the n−k minus-coordinates move up
        let a_pmf = binomial_pmf(k, kernel[1][1], k + 1);
        let b_pmf = binomial_pmf(n - k, kernel[0][1], n - k + 1);
        for (a, &pa) in a_pmf.iter().enumerate() {
            for (b, &pb) in b_pmf.iter().enumerate() {
                let prob = sk * pa * pb;
                if prob < ROW_STATE_FLOOR {
                    continue;
                }
                out.push(RowState {
                    prob,
                    k,
                    plus: a as f64 * delta[1][1] + (k - a) as f64 * delta[1][0],
                    minus: b as f64 * delta[0][1] + (n - k - b) as f64 * delta[0][0],
                });
            }
        }
    }
    out
}

/// The cube integrand for `g = build_structured_g(f, n)` at `α = 1/n`, by
/// reducing the `4^{mn}` joint states to per-row counts. Returns the full
/// moment and the moment of the `ε_{ij} = +1` part alone, both with the `1/n`
/// factor inside the norm.
fn structured_moments(f: &PoissonFunction, n: usize, t: f64, p: f64, norm: &NormSpec) -> Result<(f64, f64)> {
    let alpha = 1.0 / n as f64;
    let params = KernelParams::new(alpha, t)?;
    let rows = row_states(n, alpha, &params);
    let m = f.m;
    let d = f.d;
    let scale = 1.0 / n as f64;
    let mut idx = vec![0usize; m];
    let mut sums = vec![0usize; m];
    let mut full = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let (mut total_full, mut total_plus) = (0.0, 0.0);
    let states = rows.len().pow(m as u32);
    for s in 0..states {
        decode(s, rows.len(), &mut idx);
        let mut prob = 1.0;
        for i in 0..m {
            let r = rows[idx[i]];
            prob *= r.prob;
            sums[i] = r.k;
        }
        let here = f.row(f.index_clamped(&sums));
        full.iter_mut().for_each(|x| *x = 0.0);
        plus.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let r = rows[idx[i]];
            if r.k > 0 {
                sums[i] = r.k - 1;
                let down = f.row(f.index_clamped(&sums));
                for c in 0..d {
                    let term = scale * r.plus * 0.5 * (here[c] - down[c]);
                    full[c] += term;
                    plus[c] += term;
                }
            }
            sums[i] = r.k + 1;
            let up = f.row(f.index_clamped(&sums));
            for c in 0..d {
                full[c] += scale * r.minus * 0.5 * (here[c] - up[c]);
            }
            sums[i] = r.k;
        }
        total_full += prob * norm.norm_pow(&full, p);
        total_plus += prob * norm.norm_pow(&plus, p);
    }
    Ok((total_full, total_plus))
}

/// `E‖g(ε) − E g‖^p` at `α = 1/n` through the row-sum law.
fn structured_lhs(f: &PoissonFunction, n: usize, p: f64, norm: &NormSpec) -> f64 {
    if f.is_constant() {
        return 0.0;
    }
    let s = binomial_pmf(n, 1.0 / n as f64, n + 1);
    let mut law = vec![0.0; f.len()];
    let mut x = vec![0usize; f.m];
    let states = (n + 1).pow(f.m as u32);
    for st in 0..states {
        decode(st, n + 1, &mut x);
        let prob: f64 = x.iter().map(|&k| s[k]).product();
        law[f.index_clamped(&x)] += prob;
    }
    let mut mean = vec![0.0; f.d];
    for (r, w) in law.iter().enumerate() {
        for (acc, v) in mean.iter_mut().zip(f.row(r)) {
            *acc += w * v;
        }
    }
    let mut diff = vec![0.0; f.d];
    let moment: f64 = law
        .iter()
        .enumerate()
        .map(|(r, w)| {
            for (c, x) in diff.iter_mut().enumerate() {
                *x = f.row(r)[c] - mean[c];
            }
            w * norm.norm_pow(&diff, p)
        })
        .sum();
    root(moment, p)
}

/// One `n` of the scaling-limit demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub cube_lhs: f64,
    pub cube_rhs: f64,
    /// Contribution of the `ε_{ij} = +1` coordinates alone.
    pub plus_part: f64,
    pub lhs_gap: f64,
    pub rhs_gap: f64,
}

/// Cube-side quantities for `g` against the Poisson quantities for `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub poisson_lhs: f64,
    pub poisson_rhs: RhsEstimate,
    pub rows: Vec<ScalingRow>,
}

/// For each `n`, the cube inequality for `g = build_structured_g(f, n)` at
/// `α = 1/n`, written as `4(1 − 1/n) ∫ (E‖(1/n) Σ δ_{ij} D_{ij} g‖^p)^{1/p} dt`,
/// next to the Poisson inequality for `f`.
pub fn scaling_limit_demo(
    f: &PoissonFunction,
    n_list: &[usize],
    p: f64,
    norm: &NormSpec,
    quad: &QuadratureSpec,
    mode: &EvalMode,
) -> Result<ScalingReport> {
    check_moment(p)?;
    for &n in n_list {
        if n < 2 {
            return Err(invalid("n", format!("{n} is below 2")));
        }
        check_table_dim("scaling_limit_demo", f.m * n, MAX_STRUCTURED_DIM)?;
    }
    let poisson_lhs = poisson_lhs(f, p, norm)?.value;
    let poisson_rhs = poisson_theorem_rhs(f, p, norm, quad, mode)?;
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let cube_lhs = structured_lhs(f, n, p, norm);
            let (cube_rhs, plus_part) = if f.is_constant() {
                (0.0, 0.0)
            } else {
                let factor = 4.0 * (1.0 - 1.0 / n as f64);
                let full = integrate_time(|t| Ok(root(structured_moments(f, n, t, p, norm)?.0, p)), quad)?;
                let plus = integrate_time(|t| Ok(root(structured_moments(f, n, t, p, norm)?.1, p)), quad)?;
                (factor * full.value, factor * plus.value)
            };
            Ok(ScalingRow {
                n,
                cube_lhs,
                cube_rhs,
                plus_part,
                lhs_gap: (cube_lhs - poisson_lhs).abs(),
                rhs_gap: (cube_rhs - poisson_rhs.value).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingReport {
        poisson_lhs,
        poisson_rhs,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::BiasedMeasure;
    use crate::inequality::rhs_moment_exact;
    use rand::SeedableRng;

    fn indicator_zero(k: usize) -> PoissonFunction {
        PoissonFunction::from_fn(1, k, 1, |x, o| o[0] = f64::from(x[0] == 0)).unwrap()
    }

    fn random_pf(m: usize, k: usize, d: usize, seed: u64) -> PoissonFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PoissonFunction::from_fn(m, k, d, |_, o| o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn table_guards() {
        assert!(PoissonFunction::from_values(1, 3, 1, vec![0.0; 2]).is_err());
        assert!(PoissonFunction::from_values(0, 3, 1, vec![]).is_err());
        assert!(PoissonFunction::from_values(1, 1, 1, vec![0.0]).is_err());
        assert!(matches!(
            PoissonFunction::from_values(30, 12, 1, vec![]),
            Err(Error::DimensionTooLarge { .. })
        ));
        let f = random_pf(2, 3, 1, 0);
        assert_eq!(f.eval(&[5, 1]).unwrap(), f.eval(&[2, 1]).unwrap());
        assert!(f.eval(&[1]).is_err());
    }

    #[test]
    fn dz_examples() {
        let c = PoissonFunction::constant(2, 5, &[3.0]).unwrap();
        assert!(dz_derivative(&c, 1).unwrap().values().iter().all(|v| *v == 0.0));
        let f = PoissonFunction::from_fn(1, 6, 1, |x, o| o[0] = x[0] as f64).unwrap();
        let g = dz_derivative(&f, 0).unwrap();
        assert_eq!(g.values(), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let h = PoissonFunction::from_fn(2, 5, 1, |x, o| o[0] = (x[0] * x[1]) as f64).unwrap();
        let dh = dz_derivative(&h, 0).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let want = if a < 4 { b as f64 } else { 0.0 };
                assert_eq!(dh.eval(&[a, b]).unwrap()[0], want);
            }
        }
        assert!(dz_derivative(&h, 2).is_err());
    }

    #[test]
    fn lumped_weights_sum_to_one() {
        for k in [2, 5, 12, 16] {
            let s: f64 = lumped_weights(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-15, "{k} {s}");
        }
        let tail = poisson_tail(1.0, 12);
        let direct = 1.0 - poisson_pmf(1.0, 12).iter().sum::<f64>();
        assert!((tail - direct).abs() < 1e-15);
        assert!(check_cutoff(3, 12).is_ok());
        assert!(matches!(check_cutoff(1, 6), Err(Error::CutoffMassTooLarge { .. })));
    }

    #[test]
    fn lhs_examples() {
        let c = PoissonFunction::constant(2, 12, &[1.0, 2.0]).unwrap();
        assert_eq!(poisson_lhs(&c, 2.0, &NormSpec::euclidean()).unwrap().value, 0.0);
        let f = indicator_zero(12);
        let e = (-1.0f64).exp();
        let got = poisson_lhs(&f, 1.0, &NormSpec::lp(1.0).unwrap()).unwrap();
        assert!((got.value - 2.0 * e * (1.0 - e)).abs() < 1e-15);
        assert!(got.tail_error_bound < 1e-8);
    }

    #[test]
    fn truncation_is_stable() {
        let norm = NormSpec::lp(1.5).unwrap();
        let f12 = random_pf(2, 12, 2, 8);
        let f16 = PoissonFunction::from_fn(2, 16, 2, |x, o| o.copy_from_slice(f12.eval(x).unwrap())).unwrap();
        let (a, b) = (poisson_lhs(&f12, 1.5, &norm).unwrap(), poisson_lhs(&f16, 1.5, &norm).unwrap());
        assert!((a.value - b.value).abs() < 1e-8);
        // a function that changes beyond the smaller box
        let g16 = PoissonFunction::from_fn(1, 16, 1, |x, o| o[0] = if x[0] >= 12 { 1.0 } else { 0.0 }).unwrap();
        let g12 = PoissonFunction::constant(1, 12, &[0.0]).unwrap();
        let diff = poisson_lhs(&g16, 1.5, &norm).unwrap().value - poisson_lhs(&g12, 1.5, &norm).unwrap().value;
        assert!(diff.abs() <= poisson_lhs(&g12, 1.5, &norm).unwrap().tail_error_bound.max(4.0 * poisson_tail(1.0, 12).powf(1.0 / 1.5)));
    }

    #[test]
    fn eta_tilde_moments() {
        for t in [0.05, 0.5, 1.0, 3.0] {
            let lambda = eta_rate(t);
            let pmf = poisson_pmf(lambda, eta_support(lambda));
            let mean: f64 = pmf.iter().enumerate().map(|(j, w)| w * eta_tilde_value(t, j as u64)).sum();
            assert!(mean.abs() < 1e-13, "{t} {mean}");
            let second = eta_tilde_abs_moment(t, 2.0).unwrap();
            let closed = eta_tilde_second_moment(t).unwrap();
            assert!((second - closed).abs() < 1e-12 * closed, "{second} {closed}");
            for p in [1.0, 1.25, 1.5, 1.75, 2.0] {
                let lp = eta_tilde_abs_moment(t, p).unwrap().powf(1.0 / p);
                assert!(lp <= closed.sqrt() * (1.0 + 1e-12));
            }
        }
        assert!(eta_tilde_second_moment(0.0).is_err());
    }

    #[test]
    fn eta_tilde_sampler_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_eta_tilde(1.0, &mut rng).unwrap().value).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sigma = eta_tilde_second_moment(1.0).unwrap().sqrt();
        assert!(mean.abs() <= 4.0 * sigma / 1e3, "{mean}");
        assert!(sample_eta_tilde(-1.0, &mut rng).is_err());
    }

    #[test]
    fn poisson_sampler_matches_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let k = sample_poisson(0.7, &mut rng) as usize;
            if k < 6 {
                counts[k] += 1;
            }
        }
        for (k, w) in poisson_pmf(0.7, 6).iter().enumerate() {
            let freq = counts[k] as f64 / n as f64;
            let sd = (w * (1.0 - w) / n as f64).sqrt();
            assert!((freq - w).abs() < 4.0 * sd + 1e-12, "{k}");
        }
    }

    #[test]
    fn corollary_examples() {
        let norm = NormSpec::lp(2.0).unwrap();
        let c = PoissonFunction::constant(1, 12, &[4.0]).unwrap();
        let rep = verify_poisson_corollary(&c, 2.0, &norm).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.ratio), (0.0, 0.0, 0.0));

        // f(k) = min(k, K−1): D^Z f = 1 below the cutoff, so the rhs is
        // 4 (P(N < K−1))^{1/p}
        for p in [1.0, 2.0] {
            let norm = NormSpec::lp(p).unwrap();
            let f = PoissonFunction::from_fn(1, 12, 1, |x, o| o[0] = x[0] as f64).unwrap();
            let rep = verify_poisson_corollary(&f, p, &norm).unwrap();
            let below: f64 = poisson_pmf(1.0, 11).iter().sum();
            assert!((rep.rhs - 4.0 * below.powf(1.0 / p)).abs() < 1e-13);
            assert!(rep.pass && rep.ratio < 1.0);
        }
    }

    #[test]
    fn theorem_exact_and_mc() {
        let quad = QuadratureSpec::default();
        for p in [1.0, 2.0] {
            let norm = NormSpec::lp(p).unwrap();
            let f = indicator_zero(12);
            let exact = verify_poisson_theorem(&f, p, &norm, &quad, &EvalMode::Exact).unwrap();
            assert!(exact.pass, "{exact:?}");
            if p == 1.0 {
                // equality: both sides are 2e^{−1}(1 − e^{−1})
                let e = (-1.0f64).exp();
                assert!((exact.rhs - 2.0 * e * (1.0 - e)).abs() < 1e-9);
            } else {
                assert!(exact.ratio < 1.0);
            }
            let mc = EvalMode::MonteCarlo(McSpec::new(20_000, 11, 10).unwrap());
            let sampled = verify_poisson_theorem(&f, p, &norm, &quad, &mc).unwrap();
            assert!(sampled.pass, "{sampled:?}");
            let gap = (sampled.rhs - exact.rhs).abs();
            assert!(gap < 4.0 * sampled.error_estimate + 1e-3 * exact.rhs, "{gap} {sampled:?} {exact:?}");
        }
        let c = PoissonFunction::constant(2, 12, &[1.0]).unwrap();
        let rep = verify_poisson_theorem(&c, 2.0, &NormSpec::lp(2.0).unwrap(), &quad, &EvalMode::Exact).unwrap();
        assert_eq!((rep.lhs, rep.rhs), (0.0, 0.0));
    }

    #[test]
    fn mc_integrand_matches_exact() {
        let f = random_pf(2, 12, 1, 21);
        let norm = NormSpec::lp(1.5).unwrap();
        for t in [0.01, 0.7, 3.0] {
            let exact = poisson_rhs_moment_exact(&f, t, 1.5, &norm).unwrap();
            let mc = McSpec::new(100_000, 4, 20).unwrap();
            let est = poisson_rhs_integrand_mc(&f, t, 1.5, &norm, &mc, 0).unwrap();
            let z = (est.moment.mean - exact).abs() / est.moment.stderr;
            assert!(z < 4.0, "t={t} z={z} {exact} {:?}", est.moment);
        }
    }

    #[test]
    fn structured_g_examples() {
        let c = PoissonFunction::constant(1, 5, &[2.0]).unwrap();
        assert!(build_structured_g(&c, 3).unwrap().is_constant());
        let f = PoissonFunction::from_fn(1, 5, 1, |x, o| o[0] = x[0] as f64).unwrap();
        let g = build_structured_g(&f, 2).unwrap();
        for x in 0..4usize {
            assert_eq!(g.row(x)[0], x.count_ones() as f64);
        }
        assert!(build_structured_g(&f, 21).is_err());
        for seed in 0..5 {
            for (m, n) in [(1, 4), (2, 3), (2, 4)] {
                let f = random_pf(m, 4, 2, seed);
                assert!(structured_derivative_residual(&f, n).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn count_reduction_matches_joint_enumeration() {
        let norm = NormSpec::lp(1.5).unwrap();
        for (m, n) in [(1usize, 4usize), (2, 3)] {
            let f = random_pf(m, 6, 2, 5);
            let g = build_structured_g(&f, n).unwrap();
            let alpha = 1.0 / n as f64;
            for t in [0.2, 1.5] {
                let generic = rhs_moment_exact(&g, alpha, t, 1.5, &norm).unwrap();
                let (full, _) = structured_moments(&f, n, t, 1.5, &norm).unwrap();
                // the reduction keeps 1/n inside the norm
                let want = generic / (n as f64).powf(1.5);
                assert!((full - want).abs() < 1e-12 * want.max(1e-300), "{full} {want}");
            }
            let measure = BiasedMeasure::new(alpha, m * n).unwrap();
            let generic_lhs = g.centered_lp_moment(&measure, 1.5, &norm).unwrap();
            assert!((structured_lhs(&f, n, 1.5, &norm) - generic_lhs).abs() < 1e-13);
        }
    }

    #[test]
    fn binomial_limit_examples() {
        for t in [0.5, 1.0, 3.0, 50.0] {
            let rows = binomial_limit_experiment(&[4, 16, 64, 256], t, 30).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].tv_distance < w[0].tv_distance, "{t} {rows:?}");
            }
            assert!(rows[3].tv_distance < 0.02);
        }
        let m: Vec<f64> = [4, 16, 64, 256].iter().map(|&n| binomial_poisson_marginal_tv(n, 30)).collect();
        for (w, n) in m.windows(2).zip([4.0, 16.0, 64.0]) {
            assert!(w[1] < w[0]);
            // law of rare events: TV ≤ 1/n here
            assert!(w[0] <= 1.0 / n);
        }
        assert!(matches!(
            binomial_limit_experiment(&[4], 1.0, 5),
            Err(Error::CutoffMassTooLarge { .. })
        ));
        assert!(binomial_limit_experiment(&[1], 1.0, 30).is_err());
    }

    #[test]
    fn binomial_pmf_sums_and_mean() {
        let pmf = binomial_pmf(20, 0.3, 21);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let mean: f64 = pmf.iter().enumerate().map(|(k, w)| k as f64 * w).sum();
        assert!((mean - 6.0).abs() < 1e-13);
        assert_eq!(binomial_pmf(5, 0.0, 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn scaling_demo_gaps_shrink() {
        let f = indicator_zero(12);
        let norm = NormSpec::lp(2.0).unwrap();
        let quad = QuadratureSpec::default();
        let rep = scaling_limit_demo(&f, &[4, 8, 16], 2.0, &norm, &quad, &EvalMode::Exact).unwrap();
        for w in rep.rows.windows(2) {
            assert!(w[1].rhs_gap < w[0].rhs_gap, "{rep:?}");
            assert!(w[1].lhs_gap < w[0].lhs_gap, "{rep:?}");
            assert!(w[1].plus_part < w[0].plus_part, "{rep:?}");
        }
        let c = PoissonFunction::constant(1, 12, &[1.0]).unwrap();
        let zero = scaling_limit_demo(&c, &[4, 8], 2.0, &norm, &quad, &EvalMode::Exact).unwrap();
        assert!(zero.rows.iter().all(|r| r.cube_lhs == 0.0 && r.cube_rhs == 0.0));
        assert_eq!(zero.poisson_rhs.value, 0.0);
    }
}
