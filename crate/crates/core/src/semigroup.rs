//! Heat semigroup of the biased random walk on `{−1, 1}^n`.
//!
//! Each coordinate is an independent two-state chain that, at rate 1,
//! refreshes its value from `μ_i`. Its one-step kernel at time `t` is
//!
//! ```text
//! p_t(x, y) = (1 − e^{−t})/2 · (2α − 1) y + (1 + e^{−t} x y)/2
//! ```
//!
//! and `P_t` acts on tables by applying that 2×2 kernel along every axis.

use rand::Rng;

use crate::cube::{check_table_dim, BiasedMeasure, CubeFunction, CubePoint, MAX_TABLE_DIM};
use crate::error::{check_alpha, check_moment, check_positive_time, invalid, Error, Result};
use crate::norm::pow;

/// Largest `n` for which [`verify_dipt`] enumerates all `4^n` pairs.
pub const MAX_DIPT_DIM: usize = 12;

/// Bias and time driving the kernel and the δ coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    alpha: f64,
    t: f64,
    decay: f64,
}

impl KernelParams {
    pub fn new(alpha: f64, t: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid("t", format!("{t} is not >= 0")));
        }
        Ok(KernelParams {
            alpha,
            t,
            decay: (-t).exp(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `e^{−t}`.
    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// `1 − e^{−t}`, accurate for small `t`.
    pub fn one_minus_decay(&self) -> f64 {
        -(-self.t).exp_m1()
    }

    /// The 2×2 kernel as `[[p(−1,−1), p(−1,+1)], [p(+1,−1), p(+1,+1)]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let mut k = [[0.0; 2]; 2];
        for (a, row) in k.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry = one_d_kernel(self, pm(a), pm(b));
            }
        }
        k
    }

    /// δ values indexed as `[eps bit][x(t) bit]`; entries with a zero
    /// kernel weight (only possible at `t = 0`) are set to 0.
    pub(crate) fn delta_table(&self) -> [[f64; 2]; 2] {
        let mut table = [[0.0; 2]; 2];
        for (a, row) in table.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry = delta_coef(self, pm(a), pm(b)).unwrap_or(0.0);
            }
        }
        table
    }
}

#[inline]
fn pm(bit: usize) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

fn check_sign(name: &'static str, v: f64) -> Result<()> {
    if v == 1.0 || v == -1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} is not ±1")))
    }
}

/// `p_t(x, y)` for a single coordinate; `x, y ∈ {−1, +1}`.
pub fn one_d_kernel(params: &KernelParams, x: f64, y: f64) -> f64 {
    0.5 * twice_kernel(params, x, y)
}

/// `2 p_t(x, y)`. For `x ≠ y` the term `1 − e^{−t}` is taken from `expm1` so
/// small times keep full relative accuracy.
fn twice_kernel(params: &KernelParams, x: f64, y: f64) -> f64 {
    let omd = params.one_minus_decay();
    let same = if x * y > 0.0 { 1.0 + params.decay } else { omd };
    omd * (2.0 * params.alpha - 1.0) * y + same
}

/// `(P_t f)(x) = Σ_y Π_i p_t(x_i, y_i) f(y)`, applied one axis at a time.
pub fn apply_pt(f: &CubeFunction, params: &KernelParams) -> Result<CubeFunction> {
    check_table_dim("apply_pt", f.dim_n(), MAX_TABLE_DIM)?;
    let k = params.matrix();
    let d = f.dim_d();
    let mut out = f.clone();
    let values = out.values_mut();
    let mut lo_row = vec![0.0; d];
    for i in 0..f.dim_n() {
        let bit = 1usize << i;
        for x in 0..f.len() {
            if x & bit != 0 {
                continue;
            }
            let hi = x | bit;
            lo_row.copy_from_slice(&values[x * d..(x + 1) * d]);
            for j in 0..d {
                let a = lo_row[j];
                let b = values[hi * d + j];
                values[x * d + j] = k[0][0] * a + k[0][1] * b;
                values[hi * d + j] = k[1][0] * a + k[1][1] * b;
            }
        }
    }
    Ok(out)
}

/// `Δf = −Σ_i D_i^α f`.
pub fn generator(f: &CubeFunction, alpha: f64) -> Result<CubeFunction> {
    check_alpha(alpha)?;
    let mut acc = CubeFunction::zeros(f.dim_n(), f.dim_d())?;
    for i in 0..f.dim_n() {
        let term = f.derivative_dalpha(i, alpha)?;
        for (a, t) in acc.values_mut().iter_mut().zip(term.values()) {
            *a -= t;
        }
    }
    Ok(acc)
}

fn check_same_shape(f: &CubeFunction, g: &CubeFunction) -> Result<()> {
    if f.dim_n() != g.dim_n() || f.dim_d() != g.dim_d() {
        return Err(Error::DimensionMismatch(format!(
            "(n, d) = ({}, {}) vs ({}, {})",
            f.dim_n(),
            f.dim_d(),
            g.dim_n(),
            g.dim_d()
        )));
    }
    Ok(())
}

/// `E(f, g) = −E_μ[f · Δg]`; vector-valued inputs are reduced entrywise and
/// summed.
pub fn dirichlet_form(f: &CubeFunction, g: &CubeFunction, alpha: f64) -> Result<f64> {
    check_same_shape(f, g)?;
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let by_k = measure.weights_by_popcount();
    let lap = generator(g, alpha)?;
    let mut acc = 0.0;
    for x in 0..f.len() {
        let dot: f64 = f.row(x).iter().zip(lap.row(x)).map(|(a, b)| a * b).sum();
        acc -= by_k[x.count_ones() as usize] * dot;
    }
    Ok(acc)
}

/// `4α(1 − α) Σ_i E_μ[D_i f · D_i g]`, the gradient form of the Dirichlet form.
pub fn dirichlet_form_gradient(f: &CubeFunction, g: &CubeFunction, alpha: f64) -> Result<f64> {
    check_same_shape(f, g)?;
    let measure = BiasedMeasure::new(alpha, f.dim_n())?;
    let by_k = measure.weights_by_popcount();
    let mut acc = 0.0;
    for i in 0..f.dim_n() {
        let df = f.derivative_d(i)?;
        let dg = g.derivative_d(i)?;
        for x in 0..f.len() {
            let dot: f64 = df.row(x).iter().zip(dg.row(x)).map(|(a, b)| a * b).sum();
            acc += by_k[x.count_ones() as usize] * dot;
        }
    }
    Ok(4.0 * alpha * (1.0 - alpha) * acc)
}

/// `δ_i(t) = e^{−t} ε_i X_i / ((1 − e^{−t})(2α − 1) X_i + 1 + e^{−t} ε_i X_i)`.
///
/// The denominator is `2 p_t(ε_i, X_i)`; it vanishes only at `t = 0` with
/// `ε_i ≠ X_i`, which is reported as [`Error::DeltaUndefined`].
pub fn delta_coef(params: &KernelParams, eps_i: f64, xt_i: f64) -> Result<f64> {
    check_sign("eps_i", eps_i)?;
    check_sign("xt_i", xt_i)?;
    if params.t == 0.0 && eps_i != xt_i {
        return Err(Error::DeltaUndefined);
    }
    Ok(params.decay * eps_i * xt_i / twice_kernel(params, eps_i, xt_i))
}

/// `D_i p_t(ε_i, X_i) / p_t(ε_i, X_i)` with `D_i` acting on the first argument;
/// a second route to [`delta_coef`].
pub fn delta_coef_ratio(params: &KernelParams, eps_i: f64, xt_i: f64) -> Result<f64> {
    check_sign("eps_i", eps_i)?;
    check_sign("xt_i", xt_i)?;
    let here = one_d_kernel(params, eps_i, xt_i);
    if here == 0.0 {
        return Err(Error::DeltaUndefined);
    }
    let there = one_d_kernel(params, -eps_i, xt_i);
    Ok(0.5 * (here - there) / here)
}

/// Exact `E[|δ_i(t)|^p | X_i(0) = x] = Σ_y p_t(x, y) |δ(x, y)|^p`.
pub fn delta_abs_moment(params: &KernelParams, p: f64, x: f64) -> Result<f64> {
    check_positive_time(params.t)?;
    check_moment(p)?;
    check_sign("x", x)?;
    let mut acc = 0.0;
    for y in [-1.0, 1.0] {
        acc += one_d_kernel(params, x, y) * pow(delta_coef(params, x, y)?.abs(), p);
    }
    Ok(acc)
}

/// Exact `E[δ_i(t) | X_i(0) = x]`.
pub fn delta_conditional_mean(params: &KernelParams, x: f64) -> Result<f64> {
    check_positive_time(params.t)?;
    let mut acc = 0.0;
    for y in [-1.0, 1.0] {
        acc += one_d_kernel(params, x, y) * delta_coef(params, x, y)?;
    }
    Ok(acc)
}

/// Uniform bound `(2α)^{1−p} e^{−tp} (1 − e^{−t})^{1−p}` on the δ moments,
/// valid for `α < 1/2`.
pub fn delta_moment_bound(alpha: f64, t: f64, p: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive_time(t)?;
    check_moment(p)?;
    let one_minus = -(-t).exp_m1();
    Ok((2.0 * alpha).powf(1.0 - p) * (-t * p).exp() * one_minus.powf(1.0 - p))
}

/// Returns `max_x ‖D_i P_t f(x) − E_x[δ_i(t) f(X(t))]‖_∞`.
///
/// The left side goes through [`apply_pt`]; the right side enumerates every
/// `(x, X(t))` pair with product kernel weights.
pub fn verify_dipt(f: &CubeFunction, params: &KernelParams, i: usize) -> Result<f64> {
    check_positive_time(params.t)?;
    check_table_dim("verify_dipt", f.dim_n(), MAX_DIPT_DIM)?;
    if i >= f.dim_n() {
        return Err(Error::IndexOutOfRange { index: i, n: f.dim_n() });
    }
    let lhs = apply_pt(f, params)?.derivative_d(i)?;
    let k = params.matrix();
    let delta = params.delta_table();
    let (n, d) = (f.dim_n(), f.dim_d());
    let mut rhs = vec![0.0; d];
    let mut worst = 0.0_f64;
    for x in 0..f.len() {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..f.len() {
            let mut w = 1.0;
            for j in 0..n {
                w *= k[x >> j & 1][y >> j & 1];
            }
            let c = w * delta[x >> i & 1][y >> i & 1];
            for (r, v) in rhs.iter_mut().zip(f.row(y)) {
                *r += c * v;
            }
        }
        for (a, b) in lhs.row(x).iter().zip(&rhs) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Draws `X(t)` given `X(0) = eps`, coordinate by coordinate from the kernel.
pub fn sample_xt<R: Rng + ?Sized>(eps: CubePoint, params: &KernelParams, rng: &mut R) -> CubePoint {
    if params.t == 0.0 {
        return eps;
    }
    let up = [one_d_kernel(params, -1.0, 1.0), one_d_kernel(params, 1.0, 1.0)];
    let mut index = 0u64;
    for j in 0..eps.dim() {
        let from = (eps.index() >> j & 1) as usize;
        if rng.random::<f64>() < up[from] {
            index |= 1 << j;
        }
    }
    CubePoint::new(index, eps.dim()).expect("same dimension")
}

/// Draws `X(t)` from the clock construction: each coordinate keeps its value
/// until the first ring of a rate-1 Poisson clock and is then a fresh `μ_i`
/// draw. Same fixed-`t` law as [`sample_xt`]; kept as a cross-check.
pub fn sample_xt_clock<R: Rng + ?Sized>(eps: CubePoint, params: &KernelParams, rng: &mut R) -> CubePoint {
    let mut index = 0u64;
    for j in 0..eps.dim() {
        // N_t = 0 with probability e^{−t}; otherwise X_j(t) = Z_{N_t} ~ μ_j.
        let rang = rng.random::<f64>() >= params.decay;
        let plus = if rang {
            rng.random::<f64>() < params.alpha
        } else {
            eps.index() >> j & 1 == 1
        };
        if plus {
            index |= 1 << j;
        }
    }
    CubePoint::new(index, eps.dim()).expect("same dimension")
}

/// Draws `ε ~ μ`.
pub fn sample_measure<R: Rng + ?Sized>(measure: &BiasedMeasure, rng: &mut R) -> CubePoint {
    let mut index = 0u64;
    for j in 0..measure.dim() {
        if rng.random::<f64>() < measure.alpha() {
            index |= 1 << j;
        }
    }
    CubePoint::new(index, measure.dim()).expect("valid dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::sign;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALPHAS: [f64; 4] = [0.05, 0.1, 0.25, 0.49];
    const TIMES: [f64; 3] = [0.1, 1.0, 3.0];

    fn random_function(n: usize, d: usize, seed: u64) -> CubeFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CubeFunction::from_fn(n, d, |_, o| o.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let p0 = KernelParams::new(0.3, 0.0).unwrap();
        assert_eq!(one_d_kernel(&p0, 1.0, 1.0), 1.0);
        assert_eq!(one_d_kernel(&p0, 1.0, -1.0), 0.0);
        assert_eq!(one_d_kernel(&p0, -1.0, -1.0), 1.0);

        let late = KernelParams::new(0.3, 50.0).unwrap();
        for x in [-1.0, 1.0] {
            assert!((one_d_kernel(&late, x, 1.0) - 0.3).abs() < 1e-12);
            assert!((one_d_kernel(&late, x, -1.0) - 0.7).abs() < 1e-12);
        }

        let half = KernelParams::new(0.25, std::f64::consts::LN_2).unwrap();
        assert!((one_d_kernel(&half, -1.0, 1.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn kernel_rows_detailed_balance_stationarity() {
        for alpha in ALPHAS {
            for t in [0.0, 0.01, 0.1, 1.0, 3.0, 10.0] {
                let params = KernelParams::new(alpha, t).unwrap();
                let mu = |x: f64| if x > 0.0 { alpha } else { 1.0 - alpha };
                for x in [-1.0, 1.0] {
                    let row = one_d_kernel(&params, x, 1.0) + one_d_kernel(&params, x, -1.0);
                    assert!((row - 1.0).abs() <= 1e-15);
                    for y in [-1.0, 1.0] {
                        assert!(one_d_kernel(&params, x, y) >= 0.0);
                        let fwd = mu(x) * one_d_kernel(&params, x, y);
                        let back = mu(y) * one_d_kernel(&params, y, x);
                        assert!((fwd - back).abs() <= 1e-14);
                    }
                }
                for y in [-1.0, 1.0] {
                    let s: f64 = [-1.0, 1.0].iter().map(|&x| mu(x) * one_d_kernel(&params, x, y)).sum();
                    assert!((s - mu(y)).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn pt_identity_ergodicity_and_semigroup() {
        let f = random_function(5, 3, 11);
        let id = apply_pt(&f, &KernelParams::new(0.2, 0.0).unwrap()).unwrap();
        assert_eq!(id, f);

        let mean = f.expect(&BiasedMeasure::new(0.2, 5).unwrap()).unwrap();
        let late = apply_pt(&f, &KernelParams::new(0.2, 50.0).unwrap()).unwrap();
        for x in 0..f.len() {
            for (a, b) in late.row(x).iter().zip(&mean) {
                assert!((a - b).abs() < 1e-10);
            }
        }

        let s = apply_pt(&f, &KernelParams::new(0.2, 0.3).unwrap()).unwrap();
        let st = apply_pt(&s, &KernelParams::new(0.2, 0.7).unwrap()).unwrap();
        let direct = apply_pt(&f, &KernelParams::new(0.2, 1.0).unwrap()).unwrap();
        assert!(st.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn pt_matches_brute_force_sum() {
        let f = random_function(4, 2, 5);
        let params = KernelParams::new(0.15, 0.4).unwrap();
        let fast = apply_pt(&f, &params).unwrap();
        for x in 0..f.len() {
            let mut acc = [0.0; 2];
            for y in 0..f.len() {
                let w: f64 = (0..4).map(|j| one_d_kernel(&params, sign(x as u64, j), sign(y as u64, j))).product();
                acc[0] += w * f.row(y)[0];
                acc[1] += w * f.row(y)[1];
            }
            assert!((acc[0] - fast.row(x)[0]).abs() < 1e-14);
            assert!((acc[1] - fast.row(x)[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_examples() {
        let c = CubeFunction::constant(3, &[2.0]).unwrap();
        assert!(generator(&c, 0.3).unwrap().values().iter().all(|v| v.abs() < 1e-15));

        let alpha = 0.3;
        let x = CubeFunction::coordinate(1, 0).unwrap();
        let lap = generator(&x, alpha).unwrap();
        assert!((lap.row(1)[0] + (2.0 - 2.0 * alpha)).abs() < 1e-15);
        assert!((lap.row(0)[0] - 2.0 * alpha).abs() < 1e-15);
    }

    #[test]
    fn generator_is_time_derivative_of_pt() {
        let f = random_function(4, 2, 3);
        let (alpha, t) = (0.2, 0.5);
        let pt = apply_pt(&f, &KernelParams::new(alpha, t).unwrap()).unwrap();
        let lap = generator(&pt, alpha).unwrap();
        let mut prev_err = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let pth = apply_pt(&f, &KernelParams::new(alpha, t + h).unwrap()).unwrap();
            let err = pth
                .values()
                .iter()
                .zip(pt.values())
                .zip(lap.values())
                .fold(0.0_f64, |m, ((a, b), l)| m.max(((a - b) / h - l).abs()));
            assert!(err < 2.0 * h, "h={h} err={err}");
            assert!(err < prev_err);
            prev_err = err;
        }
    }

    #[test]
    fn dirichlet_examples() {
        let c = CubeFunction::constant(2, &[1.0]).unwrap();
        assert!(dirichlet_form(&c, &c, 0.3).unwrap().abs() < 1e-15);

        for alpha in ALPHAS {
            let x = CubeFunction::coordinate(1, 0).unwrap();
            let want = 4.0 * alpha * (1.0 - alpha);
            assert!((dirichlet_form(&x, &x, alpha).unwrap() - want).abs() < 1e-14);
            assert!((dirichlet_form_gradient(&x, &x, alpha).unwrap() - want).abs() < 1e-14);
        }

        let f = random_function(5, 1, 1);
        let g = random_function(5, 1, 2);
        let a = dirichlet_form(&f, &g, 0.1).unwrap();
        let b = dirichlet_form_gradient(&f, &g, 0.1).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(dirichlet_form(&f, &random_function(4, 1, 0), 0.1).is_err());
    }

    #[test]
    fn delta_examples() {
        let params = KernelParams::new(0.25, std::f64::consts::LN_2).unwrap();
        let v = delta_coef(&params, -1.0, 1.0).unwrap();
        assert!((v + 2.0).abs() < 1e-14);
        assert!((delta_coef_ratio(&params, -1.0, 1.0).unwrap() + 2.0).abs() < 1e-14);

        let zero = KernelParams::new(0.25, 0.0).unwrap();
        assert_eq!(delta_coef(&zero, -1.0, 1.0), Err(Error::DeltaUndefined));
        assert!(delta_coef(&zero, 1.0, 1.0).is_ok());

        for t in TIMES {
            let p = KernelParams::new(0.5, t).unwrap();
            let e = (-t).exp();
            for (eps, x) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                // at α = 1/2 the kernel is (1 + e^{−t} ε x)/2
                let denom = if eps * x > 0.0 { 1.0 + e } else { -(-t).exp_m1() };
                let want = e * eps * x / denom;
                assert!((delta_coef(&p, eps, x).unwrap() - want).abs() <= 1e-15 * want.abs().max(1.0));
            }
        }
        assert!(delta_coef(&params, 0.5, 1.0).is_err());
    }

    #[test]
    fn delta_two_forms_agree_and_mean_zero() {
        for alpha in ALPHAS {
            for t in [0.01, 0.1, 1.0, 3.0, 10.0] {
                let params = KernelParams::new(alpha, t).unwrap();
                for eps in [-1.0, 1.0] {
                    for x in [-1.0, 1.0] {
                        let a = delta_coef(&params, eps, x).unwrap();
                        let b = delta_coef_ratio(&params, eps, x).unwrap();
                        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{alpha} {t}");
                    }
                    assert!(delta_conditional_mean(&params, eps).unwrap().abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn delta_moment_examples() {
        for alpha in ALPHAS {
            for t in TIMES {
                let params = KernelParams::new(alpha, t).unwrap();
                for x in [-1.0, 1.0] {
                    // |δ| = e^{−t} / (2 p_t), so the first absolute moment is e^{−t}.
                    let m1 = delta_abs_moment(&params, 1.0, x).unwrap();
                    assert!((m1 - (-t).exp()).abs() < 1e-15);
                    for p in [1.0, 1.5, 2.0] {
                        let m = delta_abs_moment(&params, p, x).unwrap();
                        let bound = delta_moment_bound(alpha, t, p).unwrap();
                        assert!(m <= bound * (1.0 + 1e-12), "{alpha} {t} {p} {x}");
                    }
                }
            }
        }
        // continuity through α = 1/2
        let below = delta_abs_moment(&KernelParams::new(0.5 - 1e-9, 0.7).unwrap(), 2.0, 1.0).unwrap();
        let at = delta_abs_moment(&KernelParams::new(0.5, 0.7).unwrap(), 2.0, 1.0).unwrap();
        assert!((below - at).abs() < 1e-7);
        assert!(delta_abs_moment(&KernelParams::new(0.3, 0.0).unwrap(), 2.0, 1.0).is_err());
    }

    #[test]
    fn dipt_examples() {
        let params = KernelParams::new(0.3, 1.0).unwrap();
        let c = CubeFunction::constant(3, &[1.0, 2.0]).unwrap();
        assert!(verify_dipt(&c, &params, 1).unwrap() <= 1e-15);
        let x = CubeFunction::coordinate(1, 0).unwrap();
        assert!(verify_dipt(&x, &params, 0).unwrap() <= 1e-14);
        let f = random_function(5, 3, 9);
        let params = KernelParams::new(0.05, 0.2).unwrap();
        for i in 0..5 {
            assert!(verify_dipt(&f, &params, i).unwrap() <= 1e-12);
        }
        assert!(verify_dipt(&f, &params, 5).is_err());
        assert!(verify_dipt(&f, &KernelParams::new(0.05, 0.0).unwrap(), 0).is_err());
    }

    fn plus_frequency(
        sampler: fn(CubePoint, &KernelParams, &mut ChaCha8Rng) -> CubePoint,
        start: CubePoint,
        params: &KernelParams,
        draws: usize,
        seed: u64,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..draws {
            hits += sampler(start, params, &mut rng).ones() as usize;
        }
        hits as f64 / (draws * start.dim()) as f64
    }

    #[test]
    fn samplers_match_kernel() {
        let draws = 100_000;
        let ci = |p: f64, n: usize| 3.0 * (p * (1.0 - p) / n as f64).sqrt();

        let start = CubePoint::new(0, 1).unwrap();
        let params = KernelParams::new(0.25, std::f64::consts::LN_2).unwrap();
        for sampler in [sample_xt::<ChaCha8Rng>, sample_xt_clock::<ChaCha8Rng>] {
            let freq = plus_frequency(sampler, start, &params, draws, 1);
            assert!((freq - 0.125).abs() < ci(0.125, draws), "{freq}");
        }

        let start = CubePoint::new(0b1010, 4).unwrap();
        let late = KernelParams::new(0.1, 50.0).unwrap();
        let freq = plus_frequency(sample_xt::<ChaCha8Rng>, start, &late, draws, 2);
        assert!((freq - 0.1).abs() < ci(0.1, 4 * draws));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frozen = KernelParams::new(0.1, 0.0).unwrap();
        assert_eq!(sample_xt(start, &frozen, &mut rng), start);
    }

    #[test]
    fn sampler_replays_under_seed() {
        let params = KernelParams::new(0.2, 0.5).unwrap();
        let start = CubePoint::new(5, 6).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_xt(start, &params, &mut rng).index()).collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn dimension_guard() {
        let big = CubeFunction::zeros(13, 1).unwrap();
        let params = KernelParams::new(0.2, 0.5).unwrap();
        assert!(matches!(
            verify_dipt(&big, &params, 0),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn measure_sampler_frequency() {
        let measure = BiasedMeasure::new(0.3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 20_000;
        let ones: u32 = (0..draws).map(|_| sample_measure(&measure, &mut rng).ones()).sum();
        let freq = ones as f64 / (8 * draws) as f64;
        assert!((freq - 0.3).abs() < 3.0 * (0.21_f64 / (8.0 * draws as f64)).sqrt());
    }
}
