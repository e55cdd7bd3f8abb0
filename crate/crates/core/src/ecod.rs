//! Empirical-CDF outlier detection (ECOD).
//!
//! Each feature contributes the negative log of its empirical left and right
//! tail probabilities. The score of a sample is the largest of the summed left
//! tails, the summed right tails, and the skewness-selected tails.

use crate::error::{Error, Result};
use crate::stats;

/// Minimum number of samples for a usable empirical CDF.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Ecod {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub flags: Vec<bool>,
}

impl Ecod {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

fn skewness(xs: &[f64]) -> f64 {
    let m = stats::mean(xs);
    let v = stats::variance(xs);
    if !(v > 0.0) {
        return 0.0;
    }
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / xs.len() as f64;
    m3 / v.powf(1.5)
}

/// `-ln P(X <= x)` and `-ln P(X >= x)` for every sample of one feature.
fn tail_logs(xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let sorted = stats::sorted(xs);
    let nf = n as f64;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for &x in xs {
        let le = sorted.partition_point(|v| *v <= x);
        let ge = n - sorted.partition_point(|v| *v < x);
        left.push(-(le as f64 / nf).ln());
        right.push(-(ge as f64 / nf).ln());
    }
    (left, right)
}

/// Scores `features[j][i]` (feature `j`, sample `i`) and flags samples whose
/// score is strictly above the `(1 - contamination)` empirical quantile.
pub fn ecod(features: &[Vec<f64>], contamination: f64) -> Result<Ecod> {
    let n = features.first().map_or(0, Vec::len);
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SAMPLES,
            got: n,
        });
    }
    if features.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("features differ in length"));
    }
    if !(0.0..1.0).contains(&contamination) {
        return Err(Error::invalid("contamination must lie in [0, 1)"));
    }
    let mut o_left = vec![0.0; n];
    let mut o_right = vec![0.0; n];
    let mut o_auto = vec![0.0; n];
    for f in features {
        let (l, r) = tail_logs(f);
        let skew = skewness(f);
        for i in 0..n {
            o_left[i] += l[i];
            o_right[i] += r[i];
            o_auto[i] += if skew < 0.0 { l[i] } else { r[i] };
        }
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| o_left[i].max(o_right[i]).max(o_auto[i]))
        .collect();
    let threshold = stats::quantile(&scores, 1.0 - contamination);
    let flags = scores.iter().map(|&s| s > threshold).collect();
    Ok(Ecod {
        scores,
        threshold,
        flags,
    })
}
