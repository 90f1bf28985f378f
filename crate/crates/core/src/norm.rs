use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Target space `ℓ_q^d` together with the type data used by the type-p bounds.
///
/// `q` is the norm exponent, `p` the Rademacher type exponent and
/// `type_constant` the constant `T` that multiplies the type-p bounds. `T` is
/// configuration: nothing in this crate estimates it. For `q = p ∈ [1, 2]`
/// the space has type `p` with constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub q: f64,
    pub p: f64,
    pub type_constant: f64,
}

impl NormSpec {
    pub fn new(q: f64, p: f64, type_constant: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(invalid("q", format!("{q} is not >= 1")));
        }
        if !(p.is_finite() && (1.0..=2.0).contains(&p)) {
            return Err(invalid("p", format!("type exponent {p} is not in [1, 2]")));
        }
        if !(type_constant.is_finite() && type_constant > 0.0) {
            return Err(invalid("T", format!("{type_constant} is not > 0")));
        }
        Ok(NormSpec {
            q,
            p,
            type_constant,
        })
    }

    /// `ℓ_p` with type `p` and constant 1.
    pub fn lp(p: f64) -> Result<Self> {
        Self::new(p, p, 1.0)
    }

    /// Euclidean norm, type 2 with constant 1.
    pub fn euclidean() -> Self {
        NormSpec {
            q: 2.0,
            p: 2.0,
            type_constant: 1.0,
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        if self.q == 1.0 {
            v.iter().map(|x| x.abs()).sum()
        } else if self.q == 2.0 {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            // rescale to avoid overflow in |v_j|^q
            let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(self.q)).sum();
            scale * s.powf(1.0 / self.q)
        }
    }

    /// `‖a − b‖` without allocating.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        if self.q == 1.0 {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
        } else if self.q == 2.0 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        } else {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            self.norm(&diff)
        }
    }

    /// `‖v‖^r`, with the `r == q` case computed without a root.
    pub fn norm_pow(&self, v: &[f64], r: f64) -> f64 {
        if r == self.q && self.q == 2.0 {
            v.iter().map(|x| x * x).sum()
        } else if r == self.q && self.q == 1.0 {
            v.iter().map(|x| x.abs()).sum()
        } else {
            pow(self.norm(v), r)
        }
    }
}

/// `x^r` for `x ≥ 0` with the common exponents special-cased.
pub(crate) fn pow(x: f64, r: f64) -> f64 {
    if r == 1.0 {
        x
    } else if r == 2.0 {
        x * x
    } else if x == 0.0 {
        0.0
    } else {
        x.powf(r)
    }
}

/// `x^(1/r)` for `x ≥ 0`.
pub(crate) fn root(x: f64, r: f64) -> f64 {
    if r == 1.0 {
        x
    } else if r == 2.0 {
        x.sqrt()
    } else if x <= 0.0 {
        0.0
    } else {
        x.powf(1.0 / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(NormSpec::new(0.5, 1.5, 1.0).is_err());
        assert!(NormSpec::new(2.0, 2.5, 1.0).is_err());
        assert!(NormSpec::new(2.0, 2.0, 0.0).is_err());
        assert!(NormSpec::new(3.0, 1.0, 2.0).is_ok());
    }

    #[test]
    fn norms_of_known_vectors() {
        let v = [3.0, -4.0];
        assert_eq!(NormSpec::lp(1.0).unwrap().norm(&v), 7.0);
        assert_eq!(NormSpec::euclidean().norm(&v), 5.0);
        let l3 = NormSpec::new(3.0, 2.0, 1.0).unwrap();
        assert!((l3.norm(&v) - 91.0_f64.powf(1.0 / 3.0)).abs() < 1e-14);
        assert_eq!(l3.norm(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn homogeneous() {
        let v = [0.3, -1.7, 2.2];
        for q in [1.0, 1.5, 2.0, 4.0] {
            let spec = NormSpec::new(q, 1.0, 1.0).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| -2.5 * x).collect();
            assert!((spec.norm(&scaled) - 2.5 * spec.norm(&v)).abs() < 1e-13);
        }
    }
}
