//! Registration problems and the optimizable scene state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{retract_left, CameraIntrinsics, PoseSE3, TangentSE3};
use crate::losses::HyperParams;
use crate::maps::{ConfidenceMap, CorrespondenceSet, DepthMap, GridUpsampler};

/// One input view: calibration plus its monocular (pseudo) depth.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub intrinsics: CameraIntrinsics,
    pub pseudo: DepthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub views: Vec<View>,
    pub correspondences: Vec<CorrespondenceSet>,
    pub hyperparams: HyperParams,
}

impl Problem {
    /// Validates shapes, matches and connectivity of the view graph.
    ///
    /// Every declared correspondence set is an edge of the view graph, including sets
    /// without matches.
    pub fn new(
        views: Vec<View>,
        correspondences: Vec<CorrespondenceSet>,
        hyperparams: HyperParams,
    ) -> Result<Self> {
        let problem = Self {
            views,
            correspondences,
            hyperparams,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.len() < 2 {
            return Err(Error::InvalidProblem(format!(
                "need at least 2 views, got {}",
                self.views.len()
            )));
        }
        self.hyperparams.validate()?;
        for (i, v) in self.views.iter().enumerate() {
            v.intrinsics.validate()?;
            let k = &v.intrinsics;
            if !v.pseudo.same_shape(k.width, k.height) {
                return Err(Error::Shape(format!(
                    "view {i}: depth is {}x{} but intrinsics say {}x{}",
                    v.pseudo.width, v.pseudo.height, k.width, k.height
                )));
            }
            if let Some(p) = v.pseudo.values.iter().position(|d| !(*d > 0.0) || !d.is_finite()) {
                return Err(Error::Domain(format!(
                    "view {i}: pseudo depth at pixel index {p} is not positive"
                )));
            }
        }
        let intrinsics = self.intrinsics();
        for set in &self.correspondences {
            set.validate(&intrinsics)?;
        }
        if !self.is_connected() {
            return Err(Error::InvalidProblem(
                "correspondence graph does not connect all views".into(),
            ));
        }
        Ok(())
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn intrinsics(&self) -> Vec<CameraIntrinsics> {
        self.views.iter().map(|v| v.intrinsics).collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.views.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for set in &self.correspondences {
            if set.view_i < n && set.view_j < n {
                let (a, b) = (find(&mut parent, set.view_i), find(&mut parent, set.view_j));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|i| find(&mut parent, i) == root)
    }
}

/// Optimizable parameters of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub pose: PoseSE3,
    /// Global log depth multiplier.
    pub log_scale: f64,
    /// `G x G` log-depth correction, row-major, bilinearly upsampled to the image.
    pub residual: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Poses, depth deformations and confidences of every view.
///
/// Predicted depth is `pseudo * exp(log_scale + upsample(residual))`. In flat gradient
/// vectors each view contributes `[omega(3), v(3), log_scale, residual(G*G), logits(H*W)]`,
/// where the pose entries are derivatives under the left perturbation `exp(delta) * pose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub grid_size: usize,
    pub views: Vec<ViewState>,
}

pub const POSE_DOF: usize = 6;

/// Which block a flat parameter index falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Pose,
    LogScale,
    Residual,
    Confidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    offsets: Vec<usize>,
    grid_len: usize,
    pixel_counts: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn view_offset(&self, view: usize) -> usize {
        self.offsets[view]
    }

    pub fn pose(&self, view: usize) -> usize {
        self.offsets[view]
    }

    pub fn log_scale(&self, view: usize) -> usize {
        self.offsets[view] + POSE_DOF
    }

    pub fn residual(&self, view: usize) -> std::ops::Range<usize> {
        let s = self.log_scale(view) + 1;
        s..s + self.grid_len
    }

    pub fn logits(&self, view: usize) -> std::ops::Range<usize> {
        let s = self.residual(view).end;
        s..s + self.pixel_counts[view]
    }

    /// Maps a flat index to `(view, block)`.
    pub fn locate(&self, index: usize) -> (usize, Block) {
        let view = self.offsets.partition_point(|&o| o <= index) - 1;
        let block = if index < self.log_scale(view) {
            Block::Pose
        } else if index == self.log_scale(view) {
            Block::LogScale
        } else if index < self.residual(view).end {
            Block::Residual
        } else {
            Block::Confidence
        };
        (view, block)
    }
}

impl SceneState {
    /// Identity poses, unit scales, zero residuals and neutral confidence (W = 1).
    pub fn init(problem: &Problem, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::Domain("residual grid size must be at least 1".into()));
        }
        let views = problem
            .views
            .iter()
            .map(|v| ViewState {
                pose: PoseSE3::identity(),
                log_scale: 0.0,
                residual: vec![0.0; grid_size * grid_size],
                logits: vec![0.0; v.pseudo.len()],
            })
            .collect();
        Ok(Self { grid_size, views })
    }

    pub fn layout(&self) -> ParamLayout {
        let grid_len = self.grid_size * self.grid_size;
        let mut offsets = Vec::with_capacity(self.views.len() + 1);
        let mut pixel_counts = Vec::with_capacity(self.views.len());
        let mut at = 0;
        for v in &self.views {
            offsets.push(at);
            pixel_counts.push(v.logits.len());
            at += POSE_DOF + 1 + grid_len + v.logits.len();
        }
        ParamLayout {
            offsets,
            grid_len,
            pixel_counts,
            total: at,
        }
    }

    /// Checks that the state fits `problem`.
    pub fn check_against(&self, problem: &Problem) -> Result<()> {
        if self.views.len() != problem.views.len() {
            return Err(Error::Shape(format!(
                "state has {} views, problem has {}",
                self.views.len(),
                problem.views.len()
            )));
        }
        for (i, (s, v)) in self.views.iter().zip(&problem.views).enumerate() {
            if s.residual.len() != self.grid_size * self.grid_size || s.logits.len() != v.pseudo.len()
            {
                return Err(Error::Shape(format!("view {i}: parameter sizes do not match problem")));
            }
        }
        Ok(())
    }

    /// Applies a step in parameter space: left-multiplied exponential for poses, addition elsewhere.
    pub fn retract(&self, delta: &[f64]) -> SceneState {
        let layout = self.layout();
        assert_eq!(delta.len(), layout.len(), "delta does not match state layout");
        let views = self
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = layout.pose(i);
                let xi = TangentSE3::from_slice(&delta[p..p + POSE_DOF]);
                let pose = if delta[p..p + POSE_DOF].iter().all(|d| *d == 0.0) {
                    v.pose
                } else {
                    retract_left(&xi, &v.pose)
                };
                let residual = v
                    .residual
                    .iter()
                    .zip(&delta[layout.residual(i)])
                    .map(|(a, b)| a + b)
                    .collect();
                let logits = v
                    .logits
                    .iter()
                    .zip(&delta[layout.logits(i)])
                    .map(|(a, b)| a + b)
                    .collect();
                ViewState {
                    pose,
                    log_scale: v.log_scale + delta[layout.log_scale(i)],
                    residual,
                    logits,
                }
            })
            .collect();
        SceneState {
            grid_size: self.grid_size,
            views,
        }
    }

    pub fn confidence(&self, view: usize, width: usize, height: usize) -> ConfidenceMap {
        ConfidenceMap {
            width,
            height,
            logits: self.views[view].logits.clone(),
        }
    }

    pub fn poses(&self) -> Vec<PoseSE3> {
        self.views.iter().map(|v| v.pose).collect()
    }
}

/// Predicted depth of one view: `pseudo * exp(log_scale + upsample(residual))`.
pub fn predicted_depth(view: &ViewState, pseudo: &DepthMap, up: &GridUpsampler) -> Vec<f64> {
    let offsets = up.upsample(&view.residual);
    pseudo
        .values
        .iter()
        .zip(offsets)
        .map(|(&d, r)| d * (view.log_scale + r).exp())
        .collect()
}

pub fn upsamplers(problem: &Problem, grid_size: usize) -> Vec<GridUpsampler> {
    problem
        .views
        .iter()
        .map(|v| GridUpsampler::new(grid_size, v.pseudo.width, v.pseudo.height))
        .collect()
}
