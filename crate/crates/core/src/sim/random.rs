//! Small random problems and states for gradient checking.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{se3_exp, CameraIntrinsics, Pixel, TangentSE3};
use crate::losses::HyperParams;
use crate::maps::{CorrespondenceSet, DepthMap};
use crate::problem::{Problem, SceneState, View};

/// Shape of a random instance.
#[derive(Debug, Clone, Copy)]
pub struct RandomInstanceSpec {
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub matches: usize,
    pub grid_size: usize,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        Self {
            views: 2,
            width: 8,
            height: 8,
            matches: 20,
            grid_size: 3,
        }
    }
}

/// A problem with smooth random pseudo depths, a chain of random (geometrically meaningless)
/// matches, and a state with random poses, scales, residuals and logits.
pub fn random_instance(spec: RandomInstanceSpec, seed: u64) -> (Problem, SceneState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let k = CameraIntrinsics::new(
        w as f64,
        w as f64,
        (w as f64 - 1.0) * 0.5,
        (h as f64 - 1.0) * 0.5,
        w,
        h,
    )
    .expect("valid intrinsics");

    let views: Vec<View> = (0..spec.views)
        .map(|_| {
            let base = rng.gen_range(3.0..6.0);
            let (a, b, c) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(0.5..2.0));
            let values = (0..h)
                .flat_map(|r| (0..w).map(move |col| (col as f64, r as f64)))
                .map(|(x, y)| base + a * x + b * y + 0.4 * (c * x + 0.7 * y).sin() + hash_jitter(x, y, c))
                .collect();
            View {
                intrinsics: k,
                pseudo: DepthMap::new(w, h, values).expect("positive depth"),
            }
        })
        .collect();

    let pixel = |rng: &mut ChaCha8Rng| {
        Pixel::new(
            rng.gen_range(0.0..(w - 1) as f64),
            rng.gen_range(0.0..(h - 1) as f64),
        )
    };
    let sets: Vec<CorrespondenceSet> = (1..spec.views)
        .map(|j| {
            let i = rng.gen_range(0..j);
            let pairs = (0..spec.matches).map(|_| (pixel(&mut rng), pixel(&mut rng))).collect();
            CorrespondenceSet::new(i, j, pairs)
        })
        .collect();
    let problem = Problem::new(views, sets, HyperParams::default()).expect("valid random problem");

    let mut state = SceneState::init(&problem, spec.grid_size).expect("grid size >= 1");
    for v in state.views.iter_mut() {
        let omega = Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
        let t = Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        v.pose = se3_exp(&TangentSE3::new(omega, t));
        v.log_scale = rng.gen_range(-0.3..0.3);
        v.residual.iter_mut().for_each(|r| *r = rng.gen_range(-0.2..0.2));
        v.logits.iter_mut().for_each(|l| *l = rng.gen_range(-1.5..1.5));
    }
    (problem, state)
}

fn hash_jitter(x: f64, y: f64, c: f64) -> f64 {
    0.05 * ((x * 12.9898 + y * 78.233 + c).sin() * 43758.5453).fract()
}
