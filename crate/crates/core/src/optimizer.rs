//! First-order minimization of the total loss over poses, depth deformations and confidences.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject, so3_exp, to_world, Point3, PoseSE3};
use crate::losses::{LossBreakdown, Objective};
use crate::maps::{ConfidenceMap, DepthMap};
use crate::problem::{Block, ParamLayout, Problem, SceneState, POSE_DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub pose: f64,
    pub log_scale: f64,
    pub residual: f64,
    pub confidence: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            pose: 1e-2,
            log_scale: 1e-2,
            residual: 1e-3,
            confidence: 1e-2,
        }
    }
}

impl LearningRates {
    /// Rates with the default block ratios and the given pose rate.
    pub fn scaled(base: f64) -> Self {
        Self {
            pose: base,
            log_scale: base,
            residual: base * 0.1,
            confidence: base,
        }
    }

    fn for_block(&self, block: Block) -> f64 {
        match block {
            Block::Pose => self.pose,
            Block::LogScale => self.log_scale,
            Block::Residual => self.residual,
            Block::Confidence => self.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub max_iters: usize,
    pub lr: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Learning-rate multiplier reached at `max_iters` by the cosine schedule.
    pub final_lr_factor: f64,
    /// Converged once the relative change of the total loss stays below this...
    pub rel_tol: f64,
    /// ...for this many consecutive iterations.
    pub patience: usize,
    pub grid_size: usize,
    pub seed: u64,
    /// Worker threads for loss evaluation; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            lr: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            final_lr_factor: 1e-2,
            rel_tol: 1e-7,
            patience: 50,
            grid_size: 16,
            seed: 0,
            threads: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = &self.lr;
        let rates_ok = [lr.pose, lr.log_scale, lr.residual, lr.confidence]
            .iter()
            .all(|r| r.is_finite() && *r > 0.0);
        if !rates_ok || self.max_iters == 0 || self.grid_size == 0 {
            return Err(Error::Domain(format!("invalid optimizer configuration {self:?}")));
        }
        Ok(())
    }

    /// Cosine decay from 1 at iteration 0 to `final_lr_factor` at `max_iters`.
    pub fn lr_factor(&self, iteration: usize) -> f64 {
        let progress = (iteration as f64 / self.max_iters as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.final_lr_factor + (1.0 - self.final_lr_factor) * cos
    }
}

/// Adam first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Advances the moments with `grad` and returns the bias-corrected step direction
    /// `m_hat / (sqrt(v_hat) + eps)` (to be scaled by minus the learning rate).
    pub fn direction(&mut self, grad: &[f64], beta1: f64, beta2: f64, eps: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        self.m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(grad)
            .map(|((m, v), &g)| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + eps)
            })
            .collect()
    }
}

/// Zeroes the view-0 pose and log-scale entries of a gradient (or step).
pub fn project_gauge(layout: &ParamLayout, values: &mut [f64]) {
    let p = layout.pose(0);
    values[p..p + POSE_DOF].fill(0.0);
    values[layout.log_scale(0)] = 0.0;
}

/// Pins view 0 to the identity pose and unit scale.
pub fn apply_gauge_fix(state: &mut SceneState) {
    if let Some(v) = state.views.first_mut() {
        v.pose = PoseSE3::identity();
        v.log_scale = 0.0;
    }
}

/// One Adam update with block learning rates times the cosine factor and the gauge projected
/// out.
///
/// Poses are stepped in a pivot chart: the rotation part turns camera `i` about the point
/// `pivots[i]` ahead of it on its optical axis, the translation part shifts it in world
/// coordinates measured in units of `pivots[i]`.
pub fn step(
    state: &SceneState,
    gradient: &[f64],
    adam: &mut AdamState,
    config: &OptimConfig,
    iteration: usize,
    pivots: &[f64],
) -> Result<SceneState> {
    let layout = state.layout();
    if gradient.len() != layout.len() || adam.m.len() != layout.len() || pivots.len() != state.views.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries and {} pivots, state layout {} with {} views",
            gradient.len(),
            pivots.len(),
            layout.len(),
            state.views.len()
        )));
    }
    if let Some(index) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    let centers = pivot_points(state, pivots);
    let mut grad = gradient.to_vec();
    to_pivot_chart(&layout, &centers, &mut grad);
    project_gauge(&layout, &mut grad);
    let dir = adam.direction(&grad, config.beta1, config.beta2, config.adam_eps);
    let factor = config.lr_factor(iteration);
    let mut delta: Vec<f64> = dir
        .iter()
        .enumerate()
        .map(|(k, d)| -config.lr.for_block(layout.locate(k).1) * factor * d)
        .collect();
    for (i, z) in pivots.iter().enumerate() {
        let p = layout.pose(i);
        delta[p + 3..p + POSE_DOF].iter_mut().for_each(|d| *d *= z);
    }
    project_gauge(&layout, &mut delta);
    let mut next = retract_pivoted(state, &layout, &centers, &delta);
    apply_gauge_fix(&mut next);
    Ok(next)
}

/// Harmonic mean of each view's depth, used as the pivot distance.
pub fn pivot_depths(depths: &[Vec<f64>]) -> Vec<f64> {
    depths
        .iter()
        .map(|d| d.len() as f64 / d.iter().map(|z| 1.0 / z).sum::<f64>())
        .collect()
}

fn pivot_points(state: &SceneState, pivots: &[f64]) -> Vec<Point3> {
    state
        .views
        .iter()
        .zip(pivots)
        .map(|(v, &z)| v.pose.translation + v.pose.rotation.column(2) * z)
        .collect()
}

/// Converts left-perturbation pose gradients to the pivot chart. With `c` the pivot, the chart
/// step `(w, v)` equals the left step `(w, v + c x w)`, so only the rotation part changes.
fn to_pivot_chart(layout: &ParamLayout, centers: &[Point3], grad: &mut [f64]) {
    for (i, c) in centers.iter().enumerate() {
        let p = layout.pose(i);
        let gv = Vector3::new(grad[p + 3], grad[p + 4], grad[p + 5]);
        let extra = gv.cross(c);
        for a in 0..3 {
            grad[p + a] += extra[a];
        }
    }
}

fn retract_pivoted(state: &SceneState, layout: &ParamLayout, centers: &[Point3], delta: &[f64]) -> SceneState {
    let mut rest = delta.to_vec();
    for i in 0..state.views.len() {
        let p = layout.pose(i);
        rest[p..p + POSE_DOF].fill(0.0);
    }
    let mut next = state.retract(&rest);
    for (i, (v, c)) in next.views.iter_mut().zip(centers).enumerate() {
        let d = &delta[layout.pose(i)..layout.pose(i) + POSE_DOF];
        if d.iter().all(|x| *x == 0.0) {
            continue;
        }
        let rot = so3_exp(&Vector3::new(d[0], d[1], d[2]));
        v.pose = PoseSE3 {
            rotation: rot * v.pose.rotation,
            translation: c + rot * (v.pose.translation - c) + Vector3::new(d[3], d[4], d[5]),
        };
    }
    next
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub poses: Vec<PoseSE3>,
    pub depths: Vec<DepthMap>,
    pub confidences: Vec<ConfidenceMap>,
    /// Per view, row-major world points.
    pub point_maps: Vec<Vec<Point3>>,
    pub loss_history: Vec<LossBreakdown>,
    pub converged: bool,
    pub iterations: usize,
    pub state: SceneState,
}

impl Solution {
    pub fn from_state(problem: &Problem, state: SceneState, history: Vec<LossBreakdown>, converged: bool, iterations: usize) -> Result<Self> {
        let obj = Objective::new(problem, problem.hyperparams, state.grid_size);
        let depths = obj
            .depths(&state)
            .into_iter()
            .zip(&problem.views)
            .map(|(d, v)| DepthMap::new(v.pseudo.width, v.pseudo.height, d))
            .collect::<Result<Vec<_>>>()?;
        let point_maps = point_maps(problem, &state.poses(), &depths)?;
        let confidences = problem
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| state.confidence(i, v.pseudo.width, v.pseudo.height))
            .collect();
        Ok(Self {
            poses: state.poses(),
            depths,
            confidences,
            point_maps,
            loss_history: history,
            converged,
            iterations,
            state,
        })
    }
}

fn point_maps(problem: &Problem, poses: &[PoseSE3], depths: &[DepthMap]) -> Result<Vec<Vec<Point3>>> {
    problem
        .views
        .iter()
        .zip(poses)
        .zip(depths)
        .map(|((v, pose), d)| point_map(&v.intrinsics, pose, d))
        .collect()
}

/// World-frame point of every pixel of one view.
pub fn point_map(k: &crate::geometry::CameraIntrinsics, pose: &PoseSE3, depth: &DepthMap) -> Result<Vec<Point3>> {
    let mut out = Vec::with_capacity(depth.len());
    for r in 0..depth.height {
        for c in 0..depth.width {
            let u = crate::geometry::Pixel::new(c as f64, r as f64);
            out.push(to_world(&backproject(u, depth.at(c, r), k)?, pose));
        }
    }
    Ok(out)
}

/// Point maps of a state's predicted depths under its poses.
pub fn export_pointmap(state: &SceneState, problem: &Problem) -> Result<Vec<Vec<Point3>>> {
    let obj = Objective::new(problem, problem.hyperparams, state.grid_size);
    let depths = obj
        .depths(state)
        .into_iter()
        .zip(&problem.views)
        .map(|(d, v)| DepthMap::new(v.pseudo.width, v.pseudo.height, d))
        .collect::<Result<Vec<_>>>()?;
    point_maps(problem, &state.poses(), &depths)
}

/// Minimizes the total loss from the identity initialization.
pub fn solve(problem: &Problem, config: &OptimConfig) -> Result<Solution> {
    config.validate()?;
    problem.validate()?;
    let state = SceneState::init(problem, config.grid_size)?;
    solve_from(problem, config, state)
}

/// Minimizes the total loss starting from `state`.
pub fn solve_from(problem: &Problem, config: &OptimConfig, state: SceneState) -> Result<Solution> {
    config.validate()?;
    state.check_against(problem)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_loop(problem, config, state))
}

fn run_loop(problem: &Problem, config: &OptimConfig, mut state: SceneState) -> Result<Solution> {
    let objective = Objective::new(problem, problem.hyperparams, state.grid_size);
    apply_gauge_fix(&mut state);
    let mut adam = AdamState::new(state.layout().len());
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(config.max_iters + 1);
    let mut calm = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    let first = objective.evaluate(&state)?;
    let mut pivots = pivot_depths(&first.depths);
    let mut current = first.breakdown;
    if !current.total.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            last_finite: Box::new(state),
        });
    }

    for it in 0..config.max_iters {
        let next = step(&state, &current.gradient, &mut adam, config, it, &pivots)?;
        let evaluation = objective.evaluate(&next)?;
        let eval = evaluation.breakdown;
        if !eval.total.is_finite() {
            return Err(Error::Diverged {
                iteration: it + 1,
                last_finite: Box::new(state),
            });
        }
        let change = (eval.total - current.total).abs() / current.total.abs().max(1e-12);
        history.push(LossBreakdown {
            gradient: Vec::new(),
            ..current
        });
        state = next;
        current = eval;
        pivots = pivot_depths(&evaluation.depths);
        iterations = it + 1;
        calm = if change < config.rel_tol { calm + 1 } else { 0 };
        if calm >= config.patience {
            converged = true;
            break;
        }
    }
    history.push(LossBreakdown {
        gradient: Vec::new(),
        ..current
    });
    Solution::from_state(problem, state, history, converged, iterations)
}
