//! Pseudo-label corruption: per-view global scale, smooth multiplicative field and optional
//! gross-outlier rectangles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{DepthMap, GridUpsampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    /// Per-view scale drawn log-uniformly from this range.
    pub scale_range: (f64, f64),
    /// Maximum absolute log-depth deviation of the smooth field.
    pub amplitude: f64,
    pub octaves: usize,
    /// Image-area fraction covered by a rectangle whose depth is tripled.
    pub outlier_fraction: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            scale_range: (0.7, 1.3),
            amplitude: 0.1,
            octaves: 2,
            outlier_fraction: 0.0,
        }
    }
}

impl CorruptionConfig {
    /// Exact pseudo depth: no scale, no field, no outliers.
    pub fn none() -> Self {
        Self {
            scale_range: (1.0, 1.0),
            amplitude: 0.0,
            octaves: 0,
            outlier_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        let ok = lo > 0.0
            && hi >= lo
            && hi.is_finite()
            && (0.0..=0.5).contains(&self.amplitude)
            && (0.0..1.0).contains(&self.outlier_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid corruption config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDepth {
    pub depth: DepthMap,
    /// Global multiplier applied to the whole view.
    pub scale: f64,
    /// Log multiplier of the smooth field per pixel (before outliers).
    pub field: Vec<f64>,
}

/// Low-frequency value noise rescaled so its largest magnitude equals `amplitude`.
pub fn smooth_field(width: usize, height: usize, octaves: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut field = vec![0.0; width * height];
    if octaves == 0 || amplitude == 0.0 {
        return field;
    }
    for o in 0..octaves {
        let nodes = (1usize << (o + 1)) + 1;
        let grid: Vec<f64> = (0..nodes * nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = GridUpsampler::new(nodes, width, height).upsample(&grid);
        let weight = 0.5f64.powi(o as i32);
        field.iter_mut().zip(layer).for_each(|(f, v)| *f += weight * v);
    }
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        field.iter_mut().for_each(|f| *f *= amplitude / peak);
    }
    field
}

/// Corrupts an exact depth map into a pseudo label `gt * scale * exp(field)`.
pub fn corrupt_depth(gt: &DepthMap, cfg: &CorruptionConfig, seed: u64) -> Result<PseudoDepth> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.scale_range;
    let scale = if hi > lo {
        rng.gen_range(lo.ln()..hi.ln()).exp()
    } else {
        lo
    };
    let field = smooth_field(gt.width, gt.height, cfg.octaves, cfg.amplitude, &mut rng);
    let mut values: Vec<f64> = gt
        .values
        .iter()
        .zip(&field)
        .map(|(&d, &f)| if f == 0.0 { d * scale } else { d * scale * f.exp() })
        .collect();

    if cfg.outlier_fraction > 0.0 {
        let side = cfg.outlier_fraction.sqrt();
        let rw = ((gt.width as f64 * side).round() as usize).clamp(1, gt.width);
        let rh = ((gt.height as f64 * side).round() as usize).clamp(1, gt.height);
        let x0 = rng.gen_range(0..=gt.width - rw);
        let y0 = rng.gen_range(0..=gt.height - rh);
        for r in y0..y0 + rh {
            for c in x0..x0 + rw {
                values[r * gt.width + c] *= 3.0;
            }
        }
    }
    Ok(PseudoDepth {
        depth: DepthMap::new(gt.width, gt.height, values)?,
        scale,
        field,
    })
}
