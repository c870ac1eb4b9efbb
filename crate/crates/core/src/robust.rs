//! Weighted median and the weighted-MAD normalization used by the depth loss.

use crate::error::{Error, Result};

/// Floor on the MAD so that constant maps normalize to zero instead of NaN.
pub const EPS_MAD: f64 = 1e-6;

/// Lower weighted median: the smallest value whose cumulative weight reaches half the total.
///
/// Samples are sorted stably by value, so the result is always one of the inputs.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    weighted_median_index(values, weights).map(|i| values[i])
}

/// Index of the element selected by [`weighted_median`]; ties keep their input order.
pub fn weighted_median_index(values: &[f64], weights: &[f64]) -> Result<usize> {
    if values.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::Domain("weighted median of an empty set".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("total weight must be positive".into()));
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let half = 0.5 * total;
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= half {
            return Ok(i);
        }
    }
    // Rounding in the running sum can leave acc a hair below half.
    Ok(*order.last().unwrap())
}

/// Center and spread of a weighted-MAD normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmadStats {
    pub median: f64,
    pub mad: f64,
    /// Element selected as the median.
    pub median_index: usize,
    /// Element whose deviation was selected as the MAD.
    pub mad_index: usize,
}

impl WmadStats {
    pub fn compute(values: &[f64], weights: &[f64]) -> Result<Self> {
        let median_index = weighted_median_index(values, weights)?;
        let median = values[median_index];
        let deviations: Vec<f64> = values.iter().map(|v| (v - median).abs()).collect();
        let mad_index = weighted_median_index(&deviations, weights)?;
        Ok(Self {
            median,
            mad: deviations[mad_index],
            median_index,
            mad_index,
        })
    }

    /// Divisor actually applied, `max(mad, EPS_MAD)`.
    #[inline]
    pub fn scale(&self) -> f64 {
        self.mad.max(EPS_MAD)
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.median) / self.scale()
    }
}

/// Weighted-MAD normalization: `(v - m) / max(s, EPS_MAD)` with `m` the weighted median and
/// `s` the weighted median absolute deviation about `m`.
pub fn wmad_normalize(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let stats = WmadStats::compute(values, weights)?;
    Ok(values.iter().map(|&v| stats.normalize(v)).collect())
}
