//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h` for every `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| - rel * |b|` over coordinates; `<= floor` means agreement.
pub fn worst_rel_excess(a: &[f64], b: &[f64], rel: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() - rel * y.abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Kronecker product `high ⊗ low` in little-endian qubit order.
pub fn kron_high_low(high: &[Complex64], low: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(high.len() * low.len());
    for h in high {
        for l in low {
            out.push(h * l);
        }
    }
    out
}

/// `x / |x|` zero-padded to `dim`.
pub fn normalized_padded(x: &[f64], dim: usize) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out: Vec<f64> = x.iter().map(|v| v / norm).collect();
    out.resize(dim, 0.0);
    out
}

/// Brute-force regression metrics.
pub mod metrics {
    pub fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn rmse(p: &[f64], y: &[f64]) -> f64 {
        let s: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        (s / y.len() as f64).sqrt()
    }

    pub fn mae(p: &[f64], y: &[f64]) -> f64 {
        p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
    }

    pub fn r2(p: &[f64], y: &[f64]) -> f64 {
        let my = mean(y);
        let res: f64 = p.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
        let tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        1.0 - res / tot
    }

    pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..a.len() {
            cov += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma).powi(2);
            vb += (b[i] - mb).powi(2);
        }
        cov / (va * vb).sqrt()
    }

    /// 1-based ranks; ties share the average of the positions they span.
    pub fn avg_ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&u| u < x).count() as f64;
                let equal = v.iter().filter(|&&u| u == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
        pearson(&avg_ranks(a), &avg_ranks(b))
    }
}
