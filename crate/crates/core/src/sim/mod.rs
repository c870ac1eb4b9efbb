//! Synthetic ground truth: analytic scenes, corrupted pseudo depth and noisy matches.

mod corrupt;
mod matches;
mod random;
mod scene;

pub use corrupt::{corrupt_depth, smooth_field, CorruptionConfig, PseudoDepth};
pub use matches::{sample_correspondences, MatchNoiseConfig, SampledMatches, OCCLUSION_TOLERANCE};
pub use random::{random_instance, RandomInstanceSpec};
pub use scene::{
    generate_scene, look_rotation, pixel_direction, render, GroundTruthScene, GroundTruthView, Hit,
    Panel, Primitive, World,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::PoseSE3;
use crate::losses::HyperParams;
use crate::problem::{Problem, SceneState, View};

/// A generated problem together with the truth it was made from.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub problem: Problem,
    pub truth: GroundTruthScene,
    /// Global multiplier applied to each view's pseudo depth.
    pub pseudo_scales: Vec<f64>,
    /// False if some pair yielded fewer matches than requested.
    pub complete: bool,
}

/// Corrupts every view of `scene` and samples matches for every configured pair.
pub fn build_problem(
    scene: GroundTruthScene,
    corruption: &CorruptionConfig,
    matches: &MatchNoiseConfig,
    seed: u64,
) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Vec::with_capacity(scene.views.len());
    let mut pseudo_scales = Vec::with_capacity(scene.views.len());
    for v in &scene.views {
        let pseudo = corrupt_depth(&v.depth, corruption, rng.gen())?;
        pseudo_scales.push(pseudo.scale);
        views.push(View {
            intrinsics: v.intrinsics,
            pseudo: pseudo.depth,
        });
    }
    let mut sets = Vec::new();
    let mut complete = true;
    for (i, j) in matches.pairs(scene.views.len()) {
        let sampled = sample_correspondences(&scene, i, j, matches, rng.gen())?;
        complete &= sampled.complete;
        sets.push(sampled.set);
    }
    let problem = Problem::new(views, sets, HyperParams::default())?;
    Ok(Fixture {
        problem,
        truth: scene,
        pseudo_scales,
        complete,
    })
}

/// Generates a scene and builds its problem in one step.
pub fn fixture(
    views: usize,
    width: usize,
    height: usize,
    corruption: &CorruptionConfig,
    matches: &MatchNoiseConfig,
    seed: u64,
) -> Result<Fixture> {
    let scene = generate_scene(views, width, height, seed)?;
    build_problem(scene, corruption, matches, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))
}

impl Fixture {
    /// The state that reproduces the true geometry in the gauge of view 0.
    ///
    /// World coordinates are those of camera 0, scaled by view 0's pseudo-depth scale, and each
    /// log-scale undoes its view's pseudo scale relative to view 0. Residuals are zero and
    /// confidences neutral.
    pub fn ground_truth_state(&self, grid_size: usize) -> Result<SceneState> {
        let mut state = SceneState::init(&self.problem, grid_size)?;
        let anchor_inv = self.truth.views[0].pose.inverse();
        let s0 = self.pseudo_scales[0];
        for (k, v) in state.views.iter_mut().enumerate() {
            let rel = anchor_inv.compose(&self.truth.views[k].pose);
            v.pose = PoseSE3 {
                rotation: rel.rotation,
                translation: rel.translation * s0,
            };
            v.log_scale = if k == 0 { 0.0 } else { (s0 / self.pseudo_scales[k]).ln() };
        }
        state.views[0].pose = PoseSE3::identity();
        Ok(state)
    }
}
