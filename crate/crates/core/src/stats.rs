//! Small numerical helpers shared by the estimators: compensated summation,
//! deterministic chunked reductions and ordinary least squares.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Fixed reduction chunk. Partial sums are formed per chunk and combined in
/// chunk order, so results do not depend on the number of worker threads.
pub const REDUCTION_CHUNK: usize = 1 << 14;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums `f(item)` in parallel with a reproducible reduction order.
pub fn chunked_sum<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    chunked_sums::<T, _, 1>(items, |x| [f(x)])[0]
}

/// Vector-valued variant of [`chunked_sum`]: several sums in one pass.
pub fn chunked_sums<T, F, const K: usize>(items: &[T], f: F) -> [f64; K]
where
    T: Sync,
    F: Fn(&T) -> [f64; K] + Sync,
{
    let partials: Vec<[KahanSum; K]> = items
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = [KahanSum::new(); K];
            for item in chunk {
                let v = f(item);
                for (a, x) in acc.iter_mut().zip(v) {
                    a.add(x);
                }
            }
            acc
        })
        .collect();
    let mut total = [KahanSum::new(); K];
    for p in &partials {
        for (t, q) in total.iter_mut().zip(p) {
            t.merge(q);
        }
    }
    total.map(|t| t.value())
}

/// Mean and unbiased variance (two-pass, compensated).
pub fn mean_and_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = chunked_sum(values, |&x| x) / n;
    let ss = chunked_sum(values, |&x| (x - mean) * (x - mean));
    Some((mean, ss / (n - 1.0)))
}

/// Result of an ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_std_error: f64,
    pub slope_std_error: f64,
    pub n_points: usize,
}

/// Ordinary least squares with classical standard errors (residual variance
/// with `n - 2` degrees of freedom).
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "abscissa/ordinate length mismatch ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "linear fit needs at least 3 points, got {n}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in regression data".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= 1e-24 * scale * scale * nf {
        return Err(Error::Degenerate("all abscissas are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let s2 = rss / (nf - 2.0);
    let slope_std_error = (s2 / sxx).sqrt();
    let intercept_std_error = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    Ok(LinearFit {
        intercept,
        slope,
        intercept_std_error,
        slope_std_error,
        n_points: n,
    })
}
