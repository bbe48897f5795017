//! Estimators and distances behind every Monte Carlo check.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Significance level used by default for two-sample KS comparisons.
pub const KS_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Unbiased.
    pub variance: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `(level, per-column quantile)`.
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

impl SampleSummary {
    pub fn quantile(&self, level: f64) -> Option<&[f64]> {
        self.quantiles
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, q)| q.as_slice())
    }
}

/// Linear interpolation between order statistics of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(x: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = x.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Column-wise moments and quantiles of an `n x k` sample.
pub fn summarize(samples: &DMatrix<f64>, levels: &[f64]) -> Result<SampleSummary> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { need: 2, got: n });
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("quantile level {l} outside [0, 1]")));
    }
    let mut mean = Vec::new();
    let mut variance = Vec::new();
    let mut std_error = Vec::new();
    let mut sorted_cols = Vec::new();
    for col in samples.column_iter() {
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        mean.push(m);
        variance.push(v);
        std_error.push((v / n as f64).sqrt());
        sorted_cols.push(sorted_copy(col.iter().copied()));
    }
    let quantiles = levels
        .iter()
        .map(|&l| (l, sorted_cols.iter().map(|s| quantile_sorted(s, l)).collect()))
        .collect();
    Ok(SampleSummary { n, mean, variance, std_error, quantiles })
}

/// Single-column convenience form of [`summarize`].
pub fn summarize1(samples: &[f64], levels: &[f64]) -> Result<SampleSummary> {
    summarize(&DMatrix::from_column_slice(samples.len(), 1, samples), levels)
}

/// Mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic <= self.threshold
    }
}

/// Asymptotic two-sample critical coefficient `c(alpha) = sqrt(-ln(alpha/2) / 2)`.
pub fn ks_critical(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic with its level-[`KS_ALPHA`] threshold.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < 10 {
            return Err(Error::InsufficientData { need: 10, got: s.len() });
        }
    }
    let xa = sorted_copy(a.iter().copied());
    let xb = sorted_copy(b.iter().copied());
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        // step past every copy of the smallest pending value in both samples
        let v = if xa[i].total_cmp(&xb[j]).is_le() { xa[i] } else { xb[j] };
        while i < n && xa[i].total_cmp(&v).is_eq() {
            i += 1;
        }
        while j < m && xb[j].total_cmp(&v).is_eq() {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(KsResult {
        statistic: d,
        threshold: ks_critical(KS_ALPHA) * ((nf + mf) / (nf * mf)).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Gaussian KDE with Silverman's bandwidth `1.06 sd n^{-1/5}`.
pub fn kde1d(samples: &[f64], grid: &[f64]) -> Result<Kde1d> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::InsufficientData { need: 10, got: n });
    }
    let (_, se) = mean_se(samples);
    let sd = se * (n as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("KDE sample has zero variance".into()));
    }
    let h = 1.06 * sd * (n as f64).powf(-0.2);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(Kde1d { grid: grid.to_vec(), density, bandwidth: h })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Pearson correlation between columns (inputs) over rows (draws).
pub fn corr_over_inputs(finals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, k) = finals.shape();
    if r < 2 {
        return Err(Error::InsufficientData { need: 2, got: r });
    }
    let mut centered = finals.clone();
    let mut sd = vec![0.0; k];
    for c in 0..k {
        let mut col = centered.column_mut(c);
        let m = col.sum() / r as f64;
        col.add_scalar_mut(-m);
        sd[c] = col.norm();
        if !(sd[c] > 0.0) {
            return Err(Error::Degenerate(format!("input {c} has zero variance across draws")));
        }
    }
    let mut out = DMatrix::identity(k, k);
    for a in 0..k {
        for b in (a + 1)..k {
            let rho = (centered.column(a).dot(&centered.column(b)) / (sd[a] * sd[b])).clamp(-1.0, 1.0);
            out[(a, b)] = rho;
            out[(b, a)] = rho;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadCovEstimate {
    /// `sum_t dx_i dx_j^T`.
    pub realized: DMatrix<f64>,
    /// Left-endpoint integral of the model rate.
    pub model: DMatrix<f64>,
    /// `|realized - model|_F / |model|_F`.
    pub rel_error: f64,
}

/// Realized quadratic covariation of two paths (`(L+1) x D`, rows are times)
/// against the integral of `model_rate` (one `D x D` rate per step).
pub fn quad_covariation(
    path_i: &DMatrix<f64>,
    path_j: &DMatrix<f64>,
    times: &[f64],
    model_rate: &[DMatrix<f64>],
) -> Result<QuadCovEstimate> {
    let (rows, d) = path_i.shape();
    if path_j.shape() != (rows, d) || times.len() != rows || model_rate.len() + 1 != rows {
        return Err(Error::Config("quadratic covariation inputs do not share a time grid".into()));
    }
    let mut realized = DMatrix::zeros(d, d);
    let mut model = DMatrix::zeros(d, d);
    for t in 0..rows - 1 {
        let di = (path_i.row(t + 1) - path_i.row(t)).transpose();
        let dj = (path_j.row(t + 1) - path_j.row(t)).transpose();
        realized.ger(1.0, &di, &dj, 1.0);
        if model_rate[t].shape() != (d, d) {
            return Err(Error::dim("model rate", d, model_rate[t].nrows()));
        }
        model += &model_rate[t] * (times[t + 1] - times[t]);
    }
    let rel_error = (&realized - &model).norm() / model.norm();
    Ok(QuadCovEstimate { realized, model, rel_error })
}
