//! Gauss–Kronrod quadrature for `∫_0^∞ h(t) dt`.
//!
//! The half line is mapped onto `(0, 1)` and integrated with a 7/15-point
//! Gauss–Kronrod pair. No rule evaluates an endpoint, so integrands with an
//! integrable singularity at `t = 0` are fine. Two drivers share the rule:
//! [`integrate_adaptive`] bisects the worst interval until the error estimate
//! meets the tolerance, and [`integrate_panels`] uses a fixed set of equal
//! panels, which is what noisy (Monte Carlo) integrands need.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Change of variables from `t ∈ (0, ∞)` to the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Substitution {
    /// `u = 1 − e^{−t}`, `dt = du / (1 − u)`.
    Exponential,
    /// `u = 1 − e^{−t}` followed by `u = s^k`. With `k = p` an integrand that
    /// behaves like `u^{1/p − 1}` near zero becomes bounded in `s`.
    ExponentialPower(f64),
}

/// Quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Absolute error target for the adaptive driver.
    pub tolerance: f64,
    /// Interval budget for the adaptive driver.
    pub max_intervals: usize,
    /// Panel count for the fixed driver.
    pub panels: usize,
    pub substitution: Substitution,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            tolerance: 1e-8,
            max_intervals: 4000,
            panels: 4,
            substitution: Substitution::Exponential,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerance(tolerance: f64) -> Self {
        QuadratureSpec {
            tolerance,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid("tolerance", format!("{} is not > 0", self.tolerance)));
        }
        if self.max_intervals == 0 || self.panels == 0 {
            return Err(invalid("max_intervals", "interval and panel budgets must be positive"));
        }
        if let Substitution::ExponentialPower(k) = self.substitution {
            if !(k.is_finite() && k >= 1.0) {
                return Err(invalid("substitution", format!("power {k} is not >= 1")));
            }
        }
        Ok(())
    }
}

/// Value, error estimate and cost of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod estimate with the QUADPACK error heuristic.
fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs_sum = kron.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kron += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kron * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut error = ((kron - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    if !value.is_finite() {
        return Err(Error::Degenerate(format!(
            "non-finite integrand on ({a:e}, {b:e})"
        )));
    }
    Ok(Segment { a, b, value, error })
}

/// Globally adaptive Gauss–Kronrod on the open interval `(a, b)`.
pub fn integrate_adaptive<F>(mut f: F, a: f64, b: f64, tolerance: f64, max_intervals: usize) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let first = kronrod(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut total_value = first.value;
    let mut total_error = first.error;
    let mut heap = BinaryHeap::from([first]);
    while total_error > tolerance {
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence {
                tolerance,
                intervals: heap.len(),
                estimate: total_error,
                value: total_value,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further in floating point
            return Err(Error::QuadratureNonConvergence {
                tolerance,
                intervals: heap.len() + 1,
                estimate: total_error,
                value: total_value,
            });
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        evaluations += 30;
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // refresh the running sums to keep cancellation error out of them
        if heap.len() % 64 == 0 {
            total_value = heap.iter().map(|s| s.value).sum();
            total_error = heap.iter().map(|s| s.error).sum();
        }
    }
    let intervals = heap.len();
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
        intervals,
    })
}

/// Gauss–Kronrod over `panels` equal sub-intervals of `(a, b)`; the error is the
/// summed Kronrod−Gauss difference.
pub fn integrate_panels<F>(mut f: F, a: f64, b: f64, panels: usize) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let width = (b - a) / panels as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    for k in 0..panels {
        let lo = a + width * k as f64;
        let hi = if k + 1 == panels { b } else { lo + width };
        let seg = kronrod(&mut f, lo, hi)?;
        value += seg.value;
        error += seg.error;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations: 15 * panels,
        intervals: panels,
    })
}

/// The nodes `integrate_panels` would visit, in evaluation order.
pub fn panel_nodes(a: f64, b: f64, panels: usize) -> Vec<f64> {
    panel_rule(a, b, panels).into_iter().map(|(x, _)| x).collect()
}

/// `(node, Kronrod weight)` pairs of the panel rule, in evaluation order.
pub fn panel_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let width = (b - a) / panels as f64;
    let mut rule = Vec::with_capacity(15 * panels);
    for k in 0..panels {
        let lo = a + width * k as f64;
        let hi = if k + 1 == panels { b } else { lo + width };
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        rule.push((center, WGK[7] * half));
        for j in 0..7 {
            let dx = half * XGK[j];
            rule.push((center - dx, WGK[j] * half));
            rule.push((center + dx, WGK[j] * half));
        }
    }
    rule
}

/// Maps a unit-interval variable to `(t, dt/dv)`.
pub fn time_map(v: f64, substitution: Substitution) -> (f64, f64) {
    match substitution {
        Substitution::Exponential => {
            let t = -(-v).ln_1p();
            (t, 1.0 / (1.0 - v))
        }
        Substitution::ExponentialPower(k) => {
            let u = v.powf(k);
            // 1 − v^k, accurate when v is close to 1
            let one_minus_u = -(k * v.ln()).exp_m1();
            let t = -(-u).ln_1p();
            (t, k * v.powf(k - 1.0) / one_minus_u)
        }
    }
}

/// `∫_0^∞ h(t) dt`, adaptively.
pub fn integrate_time<F>(mut h: F, spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    spec.validate()?;
    let sub = spec.substitution;
    integrate_adaptive(
        |v| {
            let (t, jac) = time_map(v, sub);
            if jac == 0.0 {
                return Ok(0.0);
            }
            Ok(h(t)? * jac)
        },
        0.0,
        1.0,
        spec.tolerance,
        spec.max_intervals,
    )
}

/// `∫_0^∞ h(t) dt` on the fixed panel rule. The integrand receives the node
/// counter so callers can key random substreams on it.
pub fn integrate_time_panels<F>(mut h: F, spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    spec.validate()?;
    let sub = spec.substitution;
    let mut counter = 0usize;
    integrate_panels(
        |v| {
            let (t, jac) = time_map(v, sub);
            let node = counter;
            counter += 1;
            if jac == 0.0 {
                return Ok(0.0);
            }
            Ok(h(node, t)? * jac)
        },
        0.0,
        1.0,
        spec.panels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_adaptive(|x| Ok(x.powi(5) - 2.0 * x), 0.0, 2.0, 1e-13, 10).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn nodes_are_interior() {
        let nodes = panel_nodes(0.0, 1.0, 4);
        assert_eq!(nodes.len(), 60);
        assert!(nodes.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn panel_rule_matches_driver() {
        let f = |x: f64| (3.0 * x).cos() + x * x;
        let rule = panel_rule(0.0, 2.0, 3);
        let direct: f64 = rule.iter().map(|(x, w)| w * f(*x)).sum();
        let driven = integrate_panels(|x| Ok(f(x)), 0.0, 2.0, 3).unwrap();
        assert!((direct - driven.value).abs() < 1e-14);
        let order = panel_nodes(0.0, 2.0, 3);
        let mut seen = Vec::new();
        integrate_panels(
            |x| {
                seen.push(x);
                Ok(0.0)
            },
            0.0,
            2.0,
            3,
        )
        .unwrap();
        assert_eq!(order, seen);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate_adaptive(|x| Ok(x.powf(-0.5)), 0.0, 1.0, 1e-10, 4000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn half_line_exponential() {
        let spec = QuadratureSpec::with_tolerance(1e-12);
        let r = integrate_time(|t| Ok((-t).exp()), &spec).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = integrate_time(|t| Ok(t * (-2.0 * t).exp()), &spec).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn power_substitution_removes_singularity() {
        // ∫ e^{−t}/√(1 − e^{−t}) dt = 2, smooth under u = s^2
        let spec = QuadratureSpec {
            substitution: Substitution::ExponentialPower(2.0),
            panels: 2,
            ..Default::default()
        };
        let r = integrate_time_panels(|_, t| Ok((-t).exp() / (-(-t).exp_m1()).sqrt()), &spec).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn time_map_endpoints() {
        let (t, jac) = time_map(1e-300, Substitution::Exponential);
        assert!(t > 0.0 && (jac - 1.0).abs() < 1e-15);
        let (t, _) = time_map(1.0 - 1e-12, Substitution::ExponentialPower(1.5));
        assert!(t.is_finite() && t > 20.0);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let err = integrate_adaptive(|x| Ok(x.sin() / x.powf(0.99)), 0.0, 1.0, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::QuadratureNonConvergence { .. }));
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = QuadratureSpec {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(integrate_time(|_| Ok(0.0), &spec).is_err());
    }
}
