use serde::{Deserialize, Serialize};

pub const QUARTILE_METHOD: &str = "linear interpolation at p*(n-1) on the sorted sample";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    /// Smallest data point at or above `q1 - 1.5 * IQR`.
    pub whisker_low: f64,
    /// Largest data point at or below `q3 + 1.5 * IQR`.
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of an ascending slice by linear interpolation at `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `None` for an empty input. Non-finite values are dropped.
pub fn boxplot_stats(v: &[f64]) -> Option<BoxStats> {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let q1 = quantile(&s, 0.25);
    let q3 = quantile(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |x: &&f64| **x >= lo_fence && **x <= hi_fence;
    let whisker_low = *s.iter().find(inside).expect("quartiles lie inside the fences");
    let whisker_high = *s.iter().rev().find(inside).expect("quartiles lie inside the fences");
    let outliers = s.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect();
    Some(BoxStats {
        n: s.len(),
        median: quantile(&s, 0.5),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}
