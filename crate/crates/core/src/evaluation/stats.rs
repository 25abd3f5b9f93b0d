//! Agreement statistics, percentiles and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample size (after dropping zero differences) tested exactly.
pub const EXACT_MAX_N: usize = 25;
pub const LOA_Z: f64 = 1.96;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n - 1) standard deviation.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Percentile `q` in [0, 100], linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Parameter("pearson needs two equal-length samples of size >= 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mid-ranks (1-based) of `x`.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// absent when either coordinate has zero variance
    pub r: Option<f64>,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n_pairs: usize,
}

/// Bland-Altman bias and limits plus Pearson's r over `(estimate, reference)` pairs.
pub fn agreement(pairs: &[(f64, f64)]) -> Result<AgreementStats> {
    if pairs.len() < 2 {
        return Err(Error::Parameter("agreement needs at least two pairs".into()));
    }
    let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let reference: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|(e, r)| e - r).collect();
    let bias = mean(&diffs);
    let sd = sample_sd(&diffs);
    let r = match pearson(&est, &reference) {
        Ok(r) => Some(r),
        Err(Error::ZeroVariance) => None,
        Err(e) => return Err(e),
    };
    Ok(AgreementStats {
        r,
        bias,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
        n_pairs: pairs.len(),
    })
}

/// Two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. Up to 25
/// non-zero pairs the null distribution of W+ is enumerated exactly (as a
/// subset-sum count over doubled ranks); above that the normal approximation
/// with tie and continuity corrections is used. The p-value is
/// `min(1, 2·min(P(W+ ≤ w), P(W+ ≥ w)))`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter("paired samples differ in length".into()));
    }
    if a.len() < 6 {
        return Err(Error::Parameter(format!("need at least 6 pairs, got {}", a.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&v| v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let r = ranks(&mags);
    let w_plus: f64 = d.iter().zip(&r).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = r.iter().map(|v| (2.0 * v).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for &k in &doubled {
            for s in (k..=total).rev() {
                counts[s] += counts[s - k];
            }
        }
        let all = 2f64.powi(n as i32);
        let w = (2.0 * w_plus).round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
        let upper: f64 = counts[w..].iter().sum::<f64>() / all;
        return Ok((2.0 * lower.min(upper)).min(1.0));
    }

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let mut tie = 0.0;
    let mut sorted = mags.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w_plus - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}
