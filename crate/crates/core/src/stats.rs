//! Small descriptive-statistics helpers.

use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile of sorted data (the "type 7" definition:
/// position `p * (n - 1)` between order statistics).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let w = pos - lo as f64;
            sorted[lo] + w * (sorted[hi] - sorted[lo])
        }
    }
}

/// Five-number summary plus mean and Tukey whiskers, ready for a boxplot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl Summary {
    pub fn from_sorted(sorted: &[f64]) -> Self {
        let n = sorted.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
                whisker_low: f64::NAN,
                whisker_high: f64::NAN,
            };
        }
        let q1 = quantile_sorted(sorted, 0.25);
        let q3 = quantile_sorted(sorted, 0.75);
        let fence = 1.5 * (q3 - q1);
        let whisker_low = *sorted.iter().find(|&&v| v >= q1 - fence).unwrap_or(&sorted[0]);
        let whisker_high = *sorted.iter().rev().find(|&&v| v <= q3 + fence).unwrap_or(&sorted[n - 1]);
        Self {
            n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            min: sorted[0],
            q1,
            median: quantile_sorted(sorted, 0.5),
            q3,
            max: sorted[n - 1],
            whisker_low,
            whisker_high,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
