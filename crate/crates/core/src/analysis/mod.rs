//! Rank statistics behind the hypothesis tests, plus report and plot
//! emission.

pub mod plots;
mod report;
pub mod thesis;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub use report::{emit_report, AccuracyReport, AccuracyRow, EvalReport, QualityReport};

/// Two paired samples, e.g. accuracies of a base model (`a`) and its
/// variant (`b`) over the same experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedResults {
    pub labels: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedResults {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || labels.len() != a.len() {
            return Err(Error::Argument(format!(
                "paired results need equal non-empty lengths (labels {}, a {}, b {})",
                labels.len(),
                a.len(),
                b.len()
            )));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("paired result labels must be unique".into()));
        }
        Ok(PairedResults { labels, a, b })
    }

    pub fn swapped(&self) -> Self {
        PairedResults { labels: self.labels.clone(), a: self.b.clone(), b: self.a.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PMethod {
    Exact,
    TApproximation,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOutcome {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PMethod,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Visits every permutation of `v` (Heap's algorithm).
fn for_each_permutation(v: &mut [f64], f: &mut impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Largest sample size whose Spearman p-value is enumerated exactly.
pub const SPEARMAN_EXACT_MAX: usize = 10;

/// Spearman rank correlation with a two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationOutcome> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Argument(format!("spearman needs two series of equal length >= 3 ({} vs {})", x.len(), y.len())));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Degenerate("constant series has undefined ranks".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let rho = pearson(&rx, &ry);
    let n = x.len();
    if n <= SPEARMAN_EXACT_MAX {
        let (mut extreme, mut total) = (0u64, 0u64);
        let mut perm = ry.clone();
        for_each_permutation(&mut perm, &mut |p| {
            total += 1;
            if pearson(&rx, p).abs() >= rho.abs() - 1e-12 {
                extreme += 1;
            }
        });
        return Ok(CorrelationOutcome { rho, p_value: extreme as f64 / total as f64, n, method: PMethod::Exact });
    }
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0).map_err(|e| Error::Numeric(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    };
    Ok(CorrelationOutcome { rho, p_value, n, method: PMethod::TApproximation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOutcome {
    /// Sum of ranks of positive differences `b − a`.
    pub w_plus: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub zeros_discarded: usize,
    pub p_value: f64,
    pub method: PMethod,
}

/// Largest number of nonzero differences handled by the exact distribution.
pub const WILCOXON_EXACT_MAX: usize = 15;

/// Differences closer than this are treated as ties (and as zero).
const TIE_DECIMALS: f64 = 1e9;

fn snap(v: f64) -> f64 {
    (v * TIE_DECIMALS).round() / TIE_DECIMALS
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are discarded and
/// tied magnitudes share average ranks. Up to 15 nonzero pairs use the exact
/// null distribution of the (tied) ranks; above that the normal
/// approximation with continuity and tie correction.
pub fn wilcoxon_signed_rank(pairs: &PairedResults) -> Result<WilcoxonOutcome> {
    let diffs: Vec<f64> = pairs.a.iter().zip(&pairs.b).map(|(a, b)| snap(b - a)).collect();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let zeros_discarded = diffs.len() - nonzero.len();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let n = nonzero.len();
    let ranks = average_ranks(&nonzero.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = n as f64 * (n as f64 + 1.0) / 2.0;

    if n <= WILCOXON_EXACT_MAX {
        // Average ranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w2 = (2.0 * w_plus).round() as usize;
        let lower: u64 = counts[..=w2].iter().sum();
        let upper: u64 = counts[w2..].iter().sum();
        let p_value = (2.0 * lower.min(upper) as f64 / all).min(1.0);
        return Ok(WilcoxonOutcome { w_plus, n, zeros_discarded, p_value, method: PMethod::Exact });
    }

    let mean = total / 2.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    let p_value = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(WilcoxonOutcome { w_plus, n, zeros_discarded, p_value, method: PMethod::NormalApproximation })
}

#[cfg(test)]
mod tests;
