//! Summary statistics of sample sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean and unbiased standard deviation.
pub fn fit_normal(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a normal fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Running means recorded after `n` attempted samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub r_am: f64,
    pub r_vm: f64,
    pub r_fm: f64,
}

/// True when none of the three running means moved by `threshold` or more
/// over the trailing `window` samples. The comparison starts from the last
/// checkpoint at least `window` samples before the latest one; a history
/// too short to contain such a checkpoint is not converged.
pub fn convergence_check(history: &[Checkpoint], window: usize, threshold: f64) -> bool {
    let Some(last) = history.last() else { return false };
    let Some(anchor) = history.iter().rposition(|c| c.n + window <= last.n) else {
        return false;
    };
    let base = history[anchor];
    history[anchor..].iter().all(|c| {
        (c.r_am - base.r_am).abs() < threshold
            && (c.r_vm - base.r_vm).abs() < threshold
            && (c.r_fm - base.r_fm).abs() < threshold
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub count: usize,
}

/// Equal-width histogram over the range of `values`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in finite {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin { center: lo + (k as f64 + 0.5) * width, count })
        .collect()
}
