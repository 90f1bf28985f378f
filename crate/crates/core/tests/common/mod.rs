//! Brute-force oracles written against the definitions, sharing no code with
//! the library beyond the table type.
#![allow(dead_code)]

use bcube_core::CubeFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_function(n: usize, d: usize, seed: u64) -> CubeFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..(1usize << n) * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    CubeFunction::from_values(n, d, values).unwrap()
}

pub fn coord(x: usize, i: usize) -> f64 {
    if x >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn weight(x: usize, n: usize, alpha: f64) -> f64 {
    (0..n).map(|i| if x >> i & 1 == 1 { alpha } else { 1.0 - alpha }).product()
}

pub fn lq(v: &[f64], q: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn mean(f: &CubeFunction, alpha: f64) -> Vec<f64> {
    let n = f.dim_n();
    let mut m = vec![0.0; f.dim_d()];
    for x in 0..1usize << n {
        for (j, acc) in m.iter_mut().enumerate() {
            *acc += weight(x, n, alpha) * f.row(x)[j];
        }
    }
    m
}

pub fn centered_moment(f: &CubeFunction, alpha: f64, p: f64, q: f64) -> f64 {
    let n = f.dim_n();
    let m = mean(f, alpha);
    let mut acc = 0.0;
    for x in 0..1usize << n {
        let diff: Vec<f64> = f.row(x).iter().zip(&m).map(|(a, b)| a - b).collect();
        acc += weight(x, n, alpha) * lq(&diff, q).powf(p);
    }
    acc.powf(1.0 / p)
}

/// `Σ_i E‖D_i f‖^p` straight from the definition.
pub fn gradient_sum(f: &CubeFunction, alpha: f64, p: f64, q: f64) -> f64 {
    let n = f.dim_n();
    let mut acc = 0.0;
    for i in 0..n {
        for x in 0..1usize << n {
            let y = x ^ (1 << i);
            let g: Vec<f64> = f.row(x).iter().zip(f.row(y)).map(|(a, b)| 0.5 * (a - b)).collect();
            acc += weight(x, n, alpha) * lq(&g, q).powf(p);
        }
    }
    acc
}

/// One-coordinate heat kernel from the closed form.
pub fn kernel_1d(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    let e = (-t).exp();
    (1.0 - e) / 2.0 * (2.0 * alpha - 1.0) * y + (1.0 + e * x * y) / 2.0
}

/// Full `2^n × 2^n` transition matrix.
pub fn kernel_matrix(n: usize, alpha: f64, t: f64) -> Vec<Vec<f64>> {
    let size = 1usize << n;
    (0..size)
        .map(|x| {
            (0..size)
                .map(|y| (0..n).map(|i| kernel_1d(alpha, t, coord(x, i), coord(y, i))).product())
                .collect()
        })
        .collect()
}

/// `(P_t f)(x)` by the full matrix.
pub fn apply_matrix(k: &[Vec<f64>], f: &CubeFunction) -> Vec<Vec<f64>> {
    k.iter()
        .map(|row| {
            let mut out = vec![0.0; f.dim_d()];
            for (y, w) in row.iter().enumerate() {
                for (j, acc) in out.iter_mut().enumerate() {
                    *acc += w * f.row(y)[j];
                }
            }
            out
        })
        .collect()
}

/// `Δf(x) = −Σ_i [f(x) − α f(x^{i+}) − (1−α) f(x^{i−})]`.
pub fn generator(f: &CubeFunction, alpha: f64) -> Vec<Vec<f64>> {
    let n = f.dim_n();
    (0..1usize << n)
        .map(|x| {
            let mut out = vec![0.0; f.dim_d()];
            for i in 0..n {
                let up = x | 1 << i;
                let down = x & !(1 << i);
                for (j, acc) in out.iter_mut().enumerate() {
                    *acc -= f.row(x)[j] - alpha * f.row(up)[j] - (1.0 - alpha) * f.row(down)[j];
                }
            }
            out
        })
        .collect()
}

/// `δ` from the definition `D_i p_t / p_t` with the kernel closed form.
pub fn delta(alpha: f64, t: f64, eps: f64, x: f64) -> f64 {
    let here = kernel_1d(alpha, t, eps, x);
    let there = kernel_1d(alpha, t, -eps, x);
    0.5 * (here - there) / here
}
