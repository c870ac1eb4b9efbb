//! Correspondence sampling with occlusion testing, pixel noise and outliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, project, to_world, Pixel};
use crate::maps::{CorrespondenceSet, Stencil};

use super::scene::{pixel_direction, GroundTruthScene};

/// Relative depth tolerance of the visibility test.
pub const OCCLUSION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchNoiseConfig {
    /// Standard deviation of isotropic Gaussian noise on `u_j`, in pixels.
    pub sigma: f64,
    /// Fraction of matches whose `u_j` is replaced by a uniformly random pixel.
    pub outlier_rate: f64,
    pub count: usize,
    /// Views `i < j` are paired when `j - i` is at most this.
    pub max_view_gap: usize,
}

impl Default for MatchNoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            outlier_rate: 0.0,
            count: 200,
            max_view_gap: 2,
        }
    }
}

impl MatchNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma >= 0.0 && self.sigma.is_finite() && (0.0..1.0).contains(&self.outlier_rate) && self.max_view_gap >= 1 {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid match config {self:?}")))
        }
    }

    /// View pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self, views: usize) -> Vec<(usize, usize)> {
        (0..views)
            .flat_map(|i| ((i + 1)..views.min(i + self.max_view_gap + 1)).map(move |j| (i, j)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledMatches {
    pub set: CorrespondenceSet,
    /// False when fewer than the requested number of matches could be found.
    pub complete: bool,
}

/// Samples matches from pixel centers of view `i` into view `j`.
///
/// A match is kept when its surface point is on a plane, projects inside view `j`, is the
/// first surface hit along the ray of view `j` (within [`OCCLUSION_TOLERANCE`]), and the four
/// pixels around its projection see the same plane. On such matches inverse-depth bilinear
/// lookup is exact, so noise-free matches are exactly consistent with the true geometry.
pub fn sample_correspondences(
    scene: &GroundTruthScene,
    i: usize,
    j: usize,
    cfg: &MatchNoiseConfig,
    seed: u64,
) -> Result<SampledMatches> {
    cfg.validate()?;
    let n = scene.views.len();
    if i == j || i >= n || j >= n {
        return Err(Error::Domain(format!("invalid view pair ({i}, {j}) of {n}")));
    }
    let (vi, vj) = (&scene.views[i], &scene.views[j]);
    let (ki, kj) = (&vi.intrinsics, &vj.intrinsics);
    let inv_j = vj.pose.inverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(cfg.count);
    let max_attempts = cfg.count * 50;

    for _ in 0..max_attempts {
        if pairs.len() == cfg.count {
            break;
        }
        let (c, r) = (rng.gen_range(0..ki.width), rng.gen_range(0..ki.height));
        let idx = r * ki.width + c;
        let id = vi.primitive_ids[idx];
        if !scene.world.primitives[id].is_plane() {
            continue;
        }
        let ui = Pixel::new(c as f64, r as f64);
        let p = to_world(&backproject(ui, vi.depth.values[idx], ki)?, &vi.pose);
        let pc = inv_j.transform_point(&p);
        let Ok(uj) = project(&pc, kj) else { continue };
        if !kj.contains(uj) {
            continue;
        }
        let dir = pixel_direction(kj, &vj.pose, uj);
        match scene.world.raycast(&vj.pose.translation, &dir) {
            Some(hit) if hit.primitive == id && (hit.t - pc.z).abs() <= OCCLUSION_TOLERANCE * pc.z => {}
            _ => continue,
        }
        let st = Stencil::at(uj.x, uj.y, kj.width, kj.height);
        if st.index.iter().any(|&q| vj.primitive_ids[q] != id) {
            continue;
        }

        let mut noisy = uj;
        if cfg.sigma > 0.0 {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            noisy.x = (uj.x + cfg.sigma * dx).clamp(0.0, (kj.width - 1) as f64);
            noisy.y = (uj.y + cfg.sigma * dy).clamp(0.0, (kj.height - 1) as f64);
        }
        if cfg.outlier_rate > 0.0 && rng.gen_bool(cfg.outlier_rate) {
            noisy = Pixel::new(
                rng.gen_range(0.0..=(kj.width - 1) as f64),
                rng.gen_range(0.0..=(kj.height - 1) as f64),
            );
        }
        pairs.push((ui, noisy));
    }
    let complete = pairs.len() == cfg.count;
    Ok(SampledMatches {
        set: CorrespondenceSet::new(i, j, pairs),
        complete,
    })
}
