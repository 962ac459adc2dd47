//! Small numerical reductions shared by the simulators.

use rayon::prelude::*;

/// Chunk length for parallel reductions. Fixed, so the summation tree does not
/// depend on the number of worker threads.
pub const REDUCTION_CHUNK: usize = 1 << 14;

/// `(max, sum(exp(x - max)))`, two passes over fixed chunks. The sum is
/// zero when `max` is not finite.
pub fn exp_sum_parts(xs: &[f64]) -> (f64, f64) {
    let max = xs
        .par_chunks(REDUCTION_CHUNK)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (max, 0.0);
    }
    let partial: Vec<f64> = xs
        .par_chunks(REDUCTION_CHUNK)
        .map(|c| c.iter().map(|&x| (x - max).exp()).sum::<f64>())
        .collect();
    (max, partial.iter().sum())
}

/// `log(sum(exp(x)))`, evaluated through [`exp_sum_parts`].
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    match exp_sum_parts(xs) {
        (max, _) if !max.is_finite() => max,
        (max, sum) => max + sum.ln(),
    }
}

/// `log(mean(exp(x)))`. Exactly zero for an all-zero input.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    match exp_sum_parts(xs) {
        (max, _) if !max.is_finite() => max,
        (max, sum) => max + (sum / xs.len() as f64).ln(),
    }
}

/// Sequential log-sum-exp for short inputs.
pub fn log_sum_exp_seq(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Chunked, order-fixed sum of `f(a[i], b[i])`.
pub fn paired_sum(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.par_chunks(REDUCTION_CHUNK)
        .zip(b.par_chunks(REDUCTION_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(&u, &v)| f(u, v)).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_slice(xs: &[f64]) -> Self {
        let mut acc = Welford::default();
        for &x in xs {
            acc.push(x);
        }
        acc.estimate()
    }

    /// Sample standard deviation recovered from the standard error.
    pub fn std_dev(&self) -> f64 {
        self.std_err * (self.n as f64).sqrt()
    }

    /// |mean - target| in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_err
    }
}

/// Streaming mean/variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Combines two accumulators (Chan et al.). Merge order must be fixed by the caller.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn estimate(&self) -> MeanEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        MeanEstimate {
            mean: self.mean,
            std_err: if self.n > 0 { (var / self.n as f64).sqrt() } else { f64::NAN },
            n: self.n,
        }
    }
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

/// Fits a line with weights `1/sigma^2`. The slope error is the model-based one
/// from the supplied sigmas.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (si * si);
        sw += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    LineFit { intercept, slope, slope_se: (sw / det).sqrt() }
}
