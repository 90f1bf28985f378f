//! The biased discrete cube `{−1, 1}^n`: points, the product measure, dense
//! function tables and the three discrete derivatives.
//!
//! Points are bitmasks: bit `j` set means coordinate `x_j = +1`, clear means
//! `x_j = −1`. Flipping a coordinate is an XOR and the measure of a point only
//! depends on its popcount.
//!
//! Everything here is an exact enumeration over the `2^n` table; other modules
//! use these routines as their reference values.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, check_moment, invalid, Error, Result};
use crate::norm::{pow, root, NormSpec};

/// Largest `n` for which dense `2^n` tables are built.
pub const MAX_TABLE_DIM: usize = 24;

/// Largest `n` representable as a [`CubePoint`] (sampling paths only).
pub const MAX_POINT_DIM: usize = 63;

/// A point of `{−1, 1}^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubePoint {
    index: u64,
    n: usize,
}

impl CubePoint {
    pub fn new(index: u64, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_POINT_DIM {
            return Err(invalid("n", format!("{n} is not in [1, {MAX_POINT_DIM}]")));
        }
        if index >> n != 0 {
            return Err(invalid("index", format!("{index} >= 2^{n}")));
        }
        Ok(CubePoint { index, n })
    }

    pub fn from_coords(coords: &[i8]) -> Result<Self> {
        let mut index = 0u64;
        for (j, &c) in coords.iter().enumerate() {
            match c {
                1 => index |= 1 << j,
                -1 => {}
                _ => return Err(invalid("coords", format!("entry {j} is {c}, not ±1"))),
            }
        }
        CubePoint::new(index, coords.len())
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coordinate `j` as `±1`.
    pub fn coord(&self, j: usize) -> i8 {
        sign(self.index, j) as i8
    }

    pub fn coords(&self) -> Vec<i8> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    pub fn flip(&self, j: usize) -> Result<Self> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange { index: j, n: self.n });
        }
        Ok(CubePoint {
            index: self.index ^ (1 << j),
            n: self.n,
        })
    }

    /// Number of `+1` coordinates.
    pub fn ones(&self) -> u32 {
        self.index.count_ones()
    }
}

/// Coordinate `j` of the point encoded by `x`, as `±1.0`.
#[inline]
pub fn sign(x: u64, j: usize) -> f64 {
    if x >> j & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn check_table_dim(op: &'static str, n: usize, max: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    if n > max {
        return Err(Error::DimensionTooLarge { op, n, max });
    }
    Ok(())
}

/// Product measure on `{−1, 1}^n` with `μ_i(+1) = α`, `μ_i(−1) = 1 − α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedMeasure {
    alpha: f64,
    n: usize,
}

impl BiasedMeasure {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if n == 0 || n > MAX_POINT_DIM {
            return Err(invalid("n", format!("{n} is not in [1, {MAX_POINT_DIM}]")));
        }
        Ok(BiasedMeasure { alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `α^k (1 − α)^(n − k)` for `k = 0..=n`.
    pub fn weights_by_popcount(&self) -> Vec<f64> {
        (0..=self.n)
            .map(|k| self.alpha.powi(k as i32) * (1.0 - self.alpha).powi((self.n - k) as i32))
            .collect()
    }

    pub fn weight(&self, x: CubePoint) -> f64 {
        let k = x.ones() as i32;
        self.alpha.powi(k) * (1.0 - self.alpha).powi(self.n as i32 - k)
    }

    /// Dense table of point weights, indexed by bitmask.
    pub fn weights(&self) -> Result<Vec<f64>> {
        check_table_dim("measure_weights", self.n, MAX_TABLE_DIM)?;
        let by_k = self.weights_by_popcount();
        Ok((0..1u64 << self.n)
            .map(|x| by_k[x.count_ones() as usize])
            .collect())
    }
}

/// A map `{−1, 1}^n → R^d` that can be evaluated pointwise.
///
/// Sampling estimators take this trait so they also run on implicit maps whose
/// `2^n` table would be too large to store.
pub trait CubeMap: Sync {
    fn dim_n(&self) -> usize;
    fn dim_d(&self) -> usize;
    fn eval_into(&self, x: u64, out: &mut [f64]);
}

/// A [`CubeMap`] backed by a closure.
pub struct FnMap<F> {
    n: usize,
    d: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    pub fn new(n: usize, d: usize, f: F) -> Result<Self> {
        if n == 0 || n > MAX_POINT_DIM || d == 0 {
            return Err(invalid("n", format!("bad shape n={n}, d={d}")));
        }
        Ok(FnMap { n, d, f })
    }
}

impl<F> CubeMap for FnMap<F>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    fn dim_n(&self) -> usize {
        self.n
    }
    fn dim_d(&self) -> usize {
        self.d
    }
    fn eval_into(&self, x: u64, out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Dense table of `2^n` vectors in `R^d`, row index = bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeFunction {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl CubeFunction {
    /// Builds a table from row-major values (`2^n` rows of `d` entries).
    pub fn from_values(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        check_table_dim("cube_function", n, MAX_TABLE_DIM)?;
        if d == 0 {
            return Err(invalid("d", "value dimension must be positive"));
        }
        let expected = (1usize << n) * d;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} values for n={n}, d={d}, got {}",
                values.len()
            )));
        }
        Ok(CubeFunction { n, d, values })
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        check_table_dim("cube_function", n, MAX_TABLE_DIM)?;
        Self::from_values(n, d, vec![0.0; (1usize << n) * d])
    }

    /// Tabulates `f` over every point.
    pub fn from_fn(n: usize, d: usize, mut f: impl FnMut(CubePoint, &mut [f64])) -> Result<Self> {
        let mut table = Self::zeros(n, d)?;
        for x in 0..table.len() {
            let point = CubePoint { index: x as u64, n };
            f(point, table.row_mut(x));
        }
        Ok(table)
    }

    pub fn constant(n: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(n, value.len(), |_, out| out.copy_from_slice(value))
    }

    /// `f(x) = x_j` as a scalar function.
    pub fn coordinate(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
        Self::from_fn(n, 1, |x, out| out[0] = sign(x.index, j))
    }

    /// `f(ε) = n^(−1/p) (ε_1, …, ε_n)` in `R^n`, the extremal example for the
    /// α^(1/p) order.
    pub fn scaled_identity(n: usize, p: f64) -> Result<Self> {
        check_moment(p)?;
        let scale = (n as f64).powf(-1.0 / p);
        Self::from_fn(n, n, |x, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = scale * sign(x.index, j);
            }
        })
    }

    /// The identity embedding `ε ↦ ε ∈ R^n`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |x, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = sign(x.index, j);
            }
        })
    }

    pub fn dim_n(&self) -> usize {
        self.n
    }

    pub fn dim_d(&self) -> usize {
        self.d
    }

    /// Number of table rows, `2^n`.
    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.d..(x + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.values[x * self.d..(x + 1) * self.d]
    }

    pub fn at(&self, x: CubePoint) -> Result<&[f64]> {
        if x.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "point has n={}, table has n={}",
                x.n, self.n
            )));
        }
        Ok(self.row(x.index as usize))
    }

    /// `c · f`.
    pub fn scaled(&self, c: f64) -> Self {
        CubeFunction {
            n: self.n,
            d: self.d,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        let first = self.row(0);
        (1..self.len()).all(|x| self.row(x) == first)
    }

    pub fn max_abs_diff(&self, other: &CubeFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    fn map_pairs(&self, i: usize, mut op: impl FnMut(usize, &[f64], &[f64], &mut [f64])) -> Self {
        let bit = 1usize << i;
        let mut out = vec![0.0; self.values.len()];
        for x in 0..self.len() {
            let flipped = x ^ bit;
            op(
                x,
                self.row(x),
                self.row(flipped),
                &mut out[x * self.d..(x + 1) * self.d],
            );
        }
        CubeFunction {
            n: self.n,
            d: self.d,
            values: out,
        }
    }

    /// `D_i f(x) = (f(x) − f(σ_i x)) / 2`.
    pub fn derivative_d(&self, i: usize) -> Result<Self> {
        self.check_index(i)?;
        Ok(self.map_pairs(i, |_, fx, fy, out| {
            for ((o, a), b) in out.iter_mut().zip(fx).zip(fy) {
                *o = 0.5 * (a - b);
            }
        }))
    }

    /// `∂_i f(x) = (f(x, x_i = +1) − f(x, x_i = −1)) / 2`; independent of `x_i`.
    pub fn derivative_partial(&self, i: usize) -> Result<Self> {
        self.check_index(i)?;
        Ok(self.map_pairs(i, |x, fx, fy, out| {
            let (plus, minus) = if x >> i & 1 == 1 { (fx, fy) } else { (fy, fx) };
            for ((o, a), b) in out.iter_mut().zip(plus).zip(minus) {
                *o = 0.5 * (a - b);
            }
        }))
    }

    /// `D_i^α f(x) = f(x) − [α f(x, x_i = +1) + (1 − α) f(x, x_i = −1)]`.
    pub fn derivative_dalpha(&self, i: usize, alpha: f64) -> Result<Self> {
        self.check_index(i)?;
        check_alpha(alpha)?;
        Ok(self.map_pairs(i, |x, fx, fy, out| {
            let (plus, minus) = if x >> i & 1 == 1 { (fx, fy) } else { (fy, fx) };
            for (j, o) in out.iter_mut().enumerate() {
                *o = fx[j] - (alpha * plus[j] + (1.0 - alpha) * minus[j]);
            }
        }))
    }

    /// All `D_i f`, `i = 0..n`.
    pub fn gradient_d(&self) -> Vec<CubeFunction> {
        (0..self.n)
            .map(|i| self.derivative_d(i).expect("index in range"))
            .collect()
    }

    fn check_measure(&self, measure: &BiasedMeasure) -> Result<()> {
        if measure.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "measure has n={}, function has n={}",
                measure.n, self.n
            )));
        }
        Ok(())
    }

    /// Exact `E_μ f`.
    pub fn expect(&self, measure: &BiasedMeasure) -> Result<Vec<f64>> {
        self.check_measure(measure)?;
        let by_k = measure.weights_by_popcount();
        let mut mean = vec![0.0; self.d];
        for x in 0..self.len() {
            let w = by_k[x.count_ones() as usize];
            for (m, v) in mean.iter_mut().zip(self.row(x)) {
                *m += w * v;
            }
        }
        Ok(mean)
    }

    /// Exact `(E_μ ‖f − E_μ f‖^p)^(1/p)`.
    pub fn centered_lp_moment(&self, measure: &BiasedMeasure, p: f64, norm: &NormSpec) -> Result<f64> {
        check_moment(p)?;
        let mean = self.expect(measure)?;
        if self.is_constant() {
            // the rounded mean need not equal the constant
            return Ok(0.0);
        }
        let by_k = measure.weights_by_popcount();
        let mut acc = 0.0;
        for x in 0..self.len() {
            acc += by_k[x.count_ones() as usize] * pow(norm.dist(self.row(x), &mean), p);
        }
        Ok(root(acc, p))
    }

    /// Exact `Σ_i E_μ ‖D_i f‖^p`.
    pub fn gradient_moment_sum(&self, measure: &BiasedMeasure, p: f64, norm: &NormSpec) -> Result<f64> {
        check_moment(p)?;
        self.check_measure(measure)?;
        let by_k = measure.weights_by_popcount();
        let mut total = 0.0;
        for i in 0..self.n {
            let bit = 1usize << i;
            for x in 0..self.len() {
                // ‖D_i f(x)‖ = ‖f(x) − f(σ_i x)‖ / 2
                let dist = 0.5 * norm.dist(self.row(x), self.row(x ^ bit));
                total += by_k[x.count_ones() as usize] * pow(dist, p);
            }
        }
        Ok(total)
    }
}

impl CubeMap for CubeFunction {
    fn dim_n(&self) -> usize {
        self.n
    }
    fn dim_d(&self) -> usize {
        self.d
    }
    fn eval_into(&self, x: u64, out: &mut [f64]) {
        out.copy_from_slice(self.row(x as usize));
    }
}
