//! Dense per-view rasters, sparse correspondences and the interpolation stencils over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pixel};

/// Row-major positive depth raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    /// Builds a depth map, rejecting non-positive or non-finite values.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{}x{} depth map needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "depth at pixel index {i} is {}, must be positive and finite",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_shape(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Confidence stored as logits; the confidence itself is `2 * sigmoid(logit)`, inside (0, 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub logits: Vec<f64>,
}

impl ConfidenceMap {
    pub fn neutral(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            logits: vec![0.0; width * height],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| confidence_from_logit(l)).collect()
    }
}

#[inline]
pub fn confidence_from_logit(logit: f64) -> f64 {
    2.0 / (1.0 + (-logit).exp())
}

/// Inverse of [`confidence_from_logit`] for `w` in (0, 2).
#[inline]
pub fn logit_from_confidence(w: f64) -> f64 {
    (w / (2.0 - w)).ln()
}

/// Matches between two views, `(u_i, u_j)` per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub view_i: usize,
    pub view_j: usize,
    pub pairs: Vec<(Pixel, Pixel)>,
}

impl CorrespondenceSet {
    pub fn new(view_i: usize, view_j: usize, pairs: Vec<(Pixel, Pixel)>) -> Self {
        Self {
            view_i,
            view_j,
            pairs,
        }
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    /// Checks view indices and that every pixel lies inside its image.
    pub fn validate(&self, intrinsics: &[CameraIntrinsics]) -> Result<()> {
        let n = intrinsics.len();
        if self.view_i == self.view_j || self.view_i >= n || self.view_j >= n {
            return Err(Error::InvalidProblem(format!(
                "correspondence set ({}, {}) does not reference two distinct views of {n}",
                self.view_i, self.view_j
            )));
        }
        let (ki, kj) = (&intrinsics[self.view_i], &intrinsics[self.view_j]);
        for (k, (ui, uj)) in self.pairs.iter().enumerate() {
            if !ki.contains(*ui) || !kj.contains(*uj) {
                return Err(Error::Domain(format!(
                    "match {k} of set ({}, {}) has a pixel outside its image: {ui:?} / {uj:?}",
                    self.view_i, self.view_j
                )));
            }
        }
        Ok(())
    }
}

/// Four raster indices and weights of a bilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl Stencil {
    /// Stencil at continuous coordinates `(x, y)` on a `width x height` raster whose samples sit at
    /// integer coordinates. Coordinates are clamped to the sample span.
    pub fn at(x: f64, y: f64, width: usize, height: usize) -> Self {
        let (x0, x1, fx) = axis(x, width);
        let (y0, y1, fy) = axis(y, height);
        Self {
            index: [
                y0 * width + x0,
                y0 * width + x1,
                y1 * width + x0,
                y1 * width + x1,
            ],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }

    #[inline]
    pub fn sample(&self, raster: &[f64]) -> f64 {
        self.index
            .iter()
            .zip(&self.weight)
            .map(|(&i, &w)| w * raster[i])
            .sum()
    }
}

fn axis(x: f64, n: usize) -> (usize, usize, f64) {
    if n <= 1 {
        return (0, 0, 0.0);
    }
    let x = x.clamp(0.0, (n - 1) as f64);
    let i0 = (x.floor() as usize).min(n - 2);
    (i0, i0 + 1, x - i0 as f64)
}

/// Depth at a continuous pixel, read by bilinear interpolation of inverse depth.
///
/// Inverse depth is affine in pixel coordinates over a plane, so the lookup is exact on planar
/// surfaces. Returns the depth and the stencil used.
pub fn sample_depth(depth: &[f64], width: usize, height: usize, u: Pixel) -> (f64, Stencil) {
    let st = Stencil::at(u.x, u.y, width, height);
    let inv: f64 = st
        .index
        .iter()
        .zip(&st.weight)
        .map(|(&i, &w)| w / depth[i])
        .sum();
    (1.0 / inv, st)
}

/// Bilinear upsampling of a `G x G` grid onto an image, corners aligned.
#[derive(Debug, Clone)]
pub struct GridUpsampler {
    pub grid: usize,
    pub width: usize,
    pub height: usize,
    stencils: Vec<Stencil>,
}

impl GridUpsampler {
    pub fn new(grid: usize, width: usize, height: usize) -> Self {
        let sx = if width > 1 { (grid - 1) as f64 / (width - 1) as f64 } else { 0.0 };
        let sy = if height > 1 { (grid - 1) as f64 / (height - 1) as f64 } else { 0.0 };
        let stencils = (0..height)
            .flat_map(|r| (0..width).map(move |c| (c, r)))
            .map(|(c, r)| Stencil::at(c as f64 * sx, r as f64 * sy, grid, grid))
            .collect();
        Self {
            grid,
            width,
            height,
            stencils,
        }
    }

    pub fn upsample(&self, grid: &[f64]) -> Vec<f64> {
        self.stencils.iter().map(|s| s.sample(grid)).collect()
    }

    /// Adjoint of [`upsample`](Self::upsample): accumulates per-pixel values back onto grid nodes.
    pub fn scatter(&self, pixel_values: &[f64], out: &mut [f64]) {
        for (s, &g) in self.stencils.iter().zip(pixel_values) {
            for (&i, &w) in s.index.iter().zip(&s.weight) {
                out[i] += w * g;
            }
        }
    }
}
