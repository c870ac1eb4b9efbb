//! Training objective: scale-invariant depth loss with learned confidence, angular registration
//! loss, their weighted sum, analytic gradients, and a central-difference gradient checker.
//!
//! The depth loss compares weighted-MAD normalized maps. The confidence enters the normalization
//! only as a detached weight. The gradient w.r.t. depth includes the normalization statistics
//! through the elements the weighted medians select, so it is the exact derivative wherever the
//! selection is locally constant. [`Objective::evaluate_detached`] evaluates with externally
//! supplied normalization weights so that finite differences see the same detachment.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::maps::{confidence_from_logit, sample_depth, ConfidenceMap, CorrespondenceSet, DepthMap, GridUpsampler};
use crate::problem::{predicted_depth, upsamplers, Problem, SceneState, POSE_DOF};
use crate::robust::{WmadStats, EPS_MAD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the `-log W` confidence barrier.
    pub alpha: f64,
    /// Weight of the registration term in the total loss.
    pub lambda: f64,
    pub charbonnier_eps: f64,
    /// Floor on the cross-product norm in the angle gradient.
    pub angle_eps: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 0.5,
            charbonnier_eps: 1e-6,
            angle_eps: 1e-12,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.lambda, self.charbonnier_eps, self.angle_eps];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("hyperparameters must be positive: {self:?}")))
        }
    }
}

/// Smoothed absolute value `sqrt(x^2 + eps^2) - eps` and its derivative.
#[inline]
pub fn charbonnier(x: f64, eps: f64) -> (f64, f64) {
    let r = (x * x + eps * eps).sqrt();
    (x * x / (r + eps), x / r)
}

/// `ln(2 * sigmoid(logit))`, accurate for large negative logits.
#[inline]
fn ln_confidence(logit: f64) -> f64 {
    if logit >= 0.0 {
        std::f64::consts::LN_2 - (-logit).exp().ln_1p()
    } else {
        std::f64::consts::LN_2 + logit - logit.exp().ln_1p()
    }
}

/// Mean over pixels of `W * e - alpha * ln W` with `W = 2 * sigmoid(logit)`, and its gradient
/// with respect to the logits. `residuals` are the per-pixel errors `e`.
pub fn confidence_term(residuals: &[f64], logits: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let n = residuals.len() as f64;
    let mut loss = 0.0;
    let grad = residuals
        .iter()
        .zip(logits)
        .map(|(&e, &l)| {
            let w = confidence_from_logit(l);
            loss += w * e - alpha * ln_confidence(l);
            (e - alpha / w) * w * (1.0 - 0.5 * w) / n
        })
        .collect();
    (loss / n, grad)
}

/// Normalization statistics of one view's predicted and pseudo depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthStats {
    pub pred: WmadStats,
    pub pseudo: WmadStats,
}

impl DepthStats {
    pub fn compute(pred: &[f64], pseudo: &[f64], weights: &[f64]) -> Result<Self> {
        Ok(Self {
            pred: WmadStats::compute(pred, weights)?,
            pseudo: WmadStats::compute(pseudo, weights)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoss {
    pub loss: f64,
    pub grad_pred: Vec<f64>,
    pub grad_logits: Vec<f64>,
    pub stats: DepthStats,
}

/// Per-pixel residuals `rho(Γ(pred) - Γ(pseudo))` and their derivatives w.r.t. `pred`.
fn depth_residuals(pred: &[f64], pseudo: &[f64], stats: &DepthStats, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let inv_scale = 1.0 / stats.pred.scale();
    pred.iter()
        .zip(pseudo)
        .map(|(&p, &q)| {
            let (e, de) = charbonnier(stats.pred.normalize(p) - stats.pseudo.normalize(q), eps);
            (e, de * inv_scale)
        })
        .unzip()
}

/// Adds the derivative of the loss through the median and MAD of `pred` to `grad`, which holds
/// the derivative with the statistics held fixed.
///
/// With `g = dL/dΓ`, the median contributes `-sum(g) / s` at its selected element and the MAD
/// contributes `-sum(g Γ) / s` times the derivative of the selected deviation.
fn add_statistics_gradient(pred: &[f64], stats: &WmadStats, grad: &mut [f64]) {
    // grad holds g / s, so these sums already carry the 1 / s factor
    let g_sum: f64 = grad.iter().sum();
    let g_gamma: f64 = grad.iter().zip(pred).map(|(g, &x)| g * stats.normalize(x)).sum();
    grad[stats.median_index] -= g_sum;
    if stats.mad >= EPS_MAD {
        let sign = (pred[stats.mad_index] - stats.median).signum();
        grad[stats.mad_index] -= g_gamma * sign;
        grad[stats.median_index] += g_gamma * sign;
    }
}

fn depth_loss_with(
    pred: &[f64],
    pseudo: &[f64],
    logits: &[f64],
    hp: &HyperParams,
    gamma_weights: Option<&[f64]>,
) -> Result<DepthLoss> {
    if pred.len() != pseudo.len() || pred.len() != logits.len() {
        return Err(Error::Shape(format!(
            "depth loss inputs have {} / {} / {} pixels",
            pred.len(),
            pseudo.len(),
            logits.len()
        )));
    }
    if let Some(i) = pseudo.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Domain(format!("pseudo depth at pixel index {i} is not positive")));
    }
    let stats = match gamma_weights {
        Some(w) => DepthStats::compute(pred, pseudo, w)?,
        None => {
            let weights: Vec<f64> = logits.iter().map(|&l| confidence_from_logit(l)).collect();
            DepthStats::compute(pred, pseudo, &weights)?
        }
    };
    let (residuals, dres) = depth_residuals(pred, pseudo, &stats, hp.charbonnier_eps);
    let (loss, grad_logits) = confidence_term(&residuals, logits, hp.alpha);
    let n = pred.len() as f64;
    let mut grad_pred: Vec<f64> = dres
        .iter()
        .zip(logits)
        .map(|(&d, &l)| confidence_from_logit(l) * d / n)
        .collect();
    add_statistics_gradient(pred, &stats.pred, &mut grad_pred);
    Ok(DepthLoss {
        loss,
        grad_pred,
        grad_logits,
        stats,
    })
}

/// Depth loss of one view, averaged over pixels, with gradients w.r.t. the predicted depth and
/// the confidence logits.
pub fn depth_loss(pred: &DepthMap, pseudo: &DepthMap, conf: &ConfidenceMap, alpha: f64) -> Result<DepthLoss> {
    if !pred.same_shape(pseudo.width, pseudo.height) || !pred.same_shape(conf.width, conf.height) {
        return Err(Error::Shape("depth, pseudo depth and confidence differ in size".into()));
    }
    let hp = HyperParams {
        alpha,
        ..HyperParams::default()
    };
    depth_loss_with(&pred.values, &pseudo.values, &conf.logits, &hp, None)
}

/// Angle between two vectors in `[0, pi]`, computed as `atan2(|a x b|, a . b)`.
pub fn vector_angle(a: &Point3, b: &Point3) -> Result<f64> {
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::Domain("angle with a zero-length vector".into()));
    }
    Ok(a.cross(b).norm().atan2(a.dot(b)))
}

/// Angle and its gradients w.r.t. both arguments. The cross-product norm is floored at
/// `eps` in the gradient; a zero-length argument yields zero angle and zero gradient.
pub fn vector_angle_grad(a: &Point3, b: &Point3, eps: f64) -> (f64, Point3, Point3) {
    let c = a.cross(b);
    let n = c.norm();
    let d = a.dot(b);
    let denom = n * n + d * d;
    if denom == 0.0 {
        return (0.0, Vector3::zeros(), Vector3::zeros());
    }
    let theta = n.atan2(d);
    let nc = n.max(eps);
    let ga = (b.cross(&c) * (d / nc) - b * n) / denom;
    let gb = (c.cross(a) * (d / nc) - a * n) / denom;
    (theta, ga, gb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationLoss {
    /// Mean angle over all terms (0 when there are none).
    pub loss: f64,
    pub terms: usize,
    /// Gradient of `loss` in the state layout.
    pub gradient: Vec<f64>,
}

/// Sum of angles of one correspondence set (both anchor directions) and its sparse gradient.
struct SetContribution {
    angle_sum: f64,
    terms: usize,
    pose_grad: [(usize, [f64; POSE_DOF]); 2],
    /// `(view, pixel index, d sum / d depth)`.
    depth_grad: Vec<(usize, usize, f64)>,
}

struct ViewGeometry<'a> {
    depth: &'a [f64],
    width: usize,
    height: usize,
    k: &'a crate::geometry::CameraIntrinsics,
    pose: &'a crate::geometry::PoseSE3,
}

fn set_contribution(set: &CorrespondenceSet, views: &[ViewGeometry<'_>], angle_eps: f64) -> SetContribution {
    let mut out = SetContribution {
        angle_sum: 0.0,
        terms: 0,
        pose_grad: [(set.view_i, [0.0; POSE_DOF]), (set.view_j, [0.0; POSE_DOF])],
        depth_grad: Vec::with_capacity(set.pairs.len() * 16),
    };
    for (ui, uj) in &set.pairs {
        // slot 0 is view_i, slot 1 is view_j
        let sides = [(0usize, *ui), (1usize, *uj)];
        let lifted: Vec<_> = sides
            .iter()
            .map(|&(slot, u)| {
                let g = &views[out.pose_grad[slot].0];
                let (d, st) = sample_depth(g.depth, g.width, g.height, u);
                let dir = g.pose.rotation * g.k.ray(u);
                (d, st, dir)
            })
            .collect();

        for (anchor, other) in [(0usize, 1usize), (1, 0)] {
            let (va, vb) = (out.pose_grad[anchor].0, out.pose_grad[other].0);
            let (da, _, ref dir_a) = lifted[anchor];
            let (db, _, ref dir_b) = lifted[other];
            let ta = views[va].pose.translation;
            let pb = dir_b * db + views[vb].pose.translation;
            let a = dir_a * da;
            let b = pb - ta;
            let (theta, ga, gb) = vector_angle_grad(&a, &b, angle_eps);
            out.angle_sum += theta;
            out.terms += 1;

            // Left perturbation: d a = w_a x a ; d b = w_b x p_b + v_b - w_a x t_a - v_a.
            let w_a = a.cross(&ga) - ta.cross(&gb);
            let w_b = pb.cross(&gb);
            let ga_pose = &mut out.pose_grad[anchor].1;
            for r in 0..3 {
                ga_pose[r] += w_a[r];
                ga_pose[3 + r] -= gb[r];
            }
            let gb_pose = &mut out.pose_grad[other].1;
            for r in 0..3 {
                gb_pose[r] += w_b[r];
                gb_pose[3 + r] += gb[r];
            }

            for (slot, g) in [(anchor, ga.dot(dir_a)), (other, gb.dot(dir_b))] {
                let view = out.pose_grad[slot].0;
                let (d, st, _) = &lifted[slot];
                let depth = views[view].depth;
                for (&q, &w) in st.index.iter().zip(&st.weight) {
                    if w != 0.0 {
                        let dq = depth[q];
                        out.depth_grad.push((view, q, g * d * d * w / (dq * dq)));
                    }
                }
            }
        }
    }
    out
}

/// Loss value, its parts and the gradient in the state layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth_term: f64,
    pub registration_term: f64,
    pub total: f64,
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

/// Output of one objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub stats: Vec<DepthStats>,
    /// Predicted depth of each view.
    pub depths: Vec<Vec<f64>>,
}

/// The total loss of a problem, with per-view upsamplers prepared once.
pub struct Objective<'a> {
    problem: &'a Problem,
    hp: HyperParams,
    upsamplers: Vec<GridUpsampler>,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a Problem, hp: HyperParams, grid_size: usize) -> Self {
        Self {
            problem,
            hp,
            upsamplers: upsamplers(problem, grid_size),
        }
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    pub fn depths(&self, state: &SceneState) -> Vec<Vec<f64>> {
        state
            .views
            .par_iter()
            .zip(&self.problem.views)
            .zip(&self.upsamplers)
            .map(|((s, v), up)| predicted_depth(s, &v.pseudo, up))
            .collect()
    }

    pub fn evaluate(&self, state: &SceneState) -> Result<Evaluation> {
        self.run(state, None)
    }

    /// Evaluates with the given per-pixel weights inside the normalization instead of the
    /// state's own confidences.
    pub fn evaluate_detached(&self, state: &SceneState, gamma_weights: &[Vec<f64>]) -> Result<Evaluation> {
        if gamma_weights.len() != state.views.len() {
            return Err(Error::Shape("one weight map per view required".into()));
        }
        self.run(state, Some(gamma_weights))
    }

    fn registration(&self, state: &SceneState, depths: &[Vec<f64>]) -> (f64, usize, Vec<[f64; POSE_DOF]>, Vec<Vec<f64>>) {
        let geo: Vec<ViewGeometry<'_>> = self
            .problem
            .views
            .iter()
            .zip(depths)
            .zip(&state.views)
            .map(|((v, d), s)| ViewGeometry {
                depth: d,
                width: v.pseudo.width,
                height: v.pseudo.height,
                k: &v.intrinsics,
                pose: &s.pose,
            })
            .collect();
        let contributions: Vec<SetContribution> = self
            .problem
            .correspondences
            .par_iter()
            .map(|set| set_contribution(set, &geo, self.hp.angle_eps))
            .collect();

        let terms: usize = contributions.iter().map(|c| c.terms).sum();
        let mut pose_grad = vec![[0.0; POSE_DOF]; depths.len()];
        let mut depth_grad: Vec<Vec<f64>> = depths.iter().map(|d| vec![0.0; d.len()]).collect();
        if terms == 0 {
            return (0.0, 0, pose_grad, depth_grad);
        }
        let norm = 1.0 / terms as f64;
        let mut sum = 0.0;
        for c in &contributions {
            sum += c.angle_sum;
            for (view, g) in &c.pose_grad {
                for (acc, v) in pose_grad[*view].iter_mut().zip(g) {
                    *acc += v * norm;
                }
            }
            for &(view, q, g) in &c.depth_grad {
                depth_grad[view][q] += g * norm;
            }
        }
        (sum * norm, terms, pose_grad, depth_grad)
    }

    fn run(&self, state: &SceneState, gamma_weights: Option<&[Vec<f64>]>) -> Result<Evaluation> {
        state.check_against(self.problem)?;
        let depths = self.depths(state);
        let n_views = depths.len();

        let per_view: Vec<DepthLoss> = depths
            .par_iter()
            .enumerate()
            .map(|(i, pred)| {
                depth_loss_with(
                    pred,
                    &self.problem.views[i].pseudo.values,
                    &state.views[i].logits,
                    &self.hp,
                    gamma_weights.map(|w| w[i].as_slice()),
                )
            })
            .collect::<Result<_>>()?;

        let (reg_loss, _terms, reg_pose, reg_depth) = self.registration(state, &depths);

        let inv_views = 1.0 / n_views as f64;
        let depth_term = per_view.iter().map(|d| d.loss).sum::<f64>() * inv_views;
        let lambda = self.hp.lambda;

        let layout = state.layout();
        let mut gradient = vec![0.0; layout.len()];
        for i in 0..n_views {
            let p = layout.pose(i);
            for (g, r) in gradient[p..p + POSE_DOF].iter_mut().zip(&reg_pose[i]) {
                *g = lambda * r;
            }
            // d/d(log depth) = depth * d/d depth
            let dlog: Vec<f64> = depths[i]
                .iter()
                .zip(&per_view[i].grad_pred)
                .zip(&reg_depth[i])
                .map(|((&d, &gd), &gr)| d * (inv_views * gd + lambda * gr))
                .collect();
            gradient[layout.log_scale(i)] = dlog.iter().sum();
            self.upsamplers[i].scatter(&dlog, &mut gradient[layout.residual(i)]);
            for (g, l) in gradient[layout.logits(i)].iter_mut().zip(&per_view[i].grad_logits) {
                *g = inv_views * l;
            }
        }

        Ok(Evaluation {
            breakdown: LossBreakdown {
                depth_term,
                registration_term: reg_loss,
                total: depth_term + lambda * reg_loss,
                gradient,
            },
            stats: per_view.iter().map(|d| d.stats).collect(),
            depths,
        })
    }
}

/// Mean angular registration loss and its gradient in the state layout.
pub fn registration_loss(state: &SceneState, problem: &Problem, angle_eps: f64) -> Result<RegistrationLoss> {
    let hp = HyperParams {
        angle_eps,
        ..problem.hyperparams
    };
    let obj = Objective::new(problem, hp, state.grid_size);
    state.check_against(problem)?;
    let depths = obj.depths(state);
    let (loss, terms, pose, depth) = obj.registration(state, &depths);
    let layout = state.layout();
    let mut gradient = vec![0.0; layout.len()];
    for i in 0..state.views.len() {
        let p = layout.pose(i);
        gradient[p..p + POSE_DOF].copy_from_slice(&pose[i]);
        let dlog: Vec<f64> = depths[i].iter().zip(&depth[i]).map(|(d, g)| d * g).collect();
        gradient[layout.log_scale(i)] = dlog.iter().sum();
        obj.upsamplers[i].scatter(&dlog, &mut gradient[layout.residual(i)]);
    }
    Ok(RegistrationLoss {
        loss,
        terms,
        gradient,
    })
}

pub fn total_loss(state: &SceneState, problem: &Problem, hp: &HyperParams) -> Result<LossBreakdown> {
    Ok(Objective::new(problem, *hp, state.grid_size).evaluate(state)?.breakdown)
}

/// Compares the analytic gradient with central differences at `probe_count` randomly chosen
/// parameters and returns `max |g - g_fd| / max(1, |g_fd|)`.
///
/// Both sides detach the confidence inside the normalization at its unperturbed value; the
/// statistics themselves are recomputed. Pose parameters are perturbed by left multiplication
/// with the exponential of the probe step.
pub fn finite_difference_check(
    state: &SceneState,
    problem: &Problem,
    hp: &HyperParams,
    probe_count: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    if probe_count == 0 || !(step > 0.0) {
        return Err(Error::Domain("need at least one probe and a positive step".into()));
    }
    let obj = Objective::new(problem, *hp, state.grid_size);
    let base = obj.evaluate(state)?;
    let weights: Vec<Vec<f64>> = state
        .views
        .iter()
        .map(|v| v.logits.iter().map(|&l| confidence_from_logit(l)).collect())
        .collect();
    let layout = state.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut delta = vec![0.0; layout.len()];
    for _ in 0..probe_count {
        let k = rng.gen_range(0..layout.len());
        delta[k] = step;
        let plus = obj.evaluate_detached(&state.retract(&delta), &weights)?.breakdown.total;
        delta[k] = -step;
        let minus = obj.evaluate_detached(&state.retract(&delta), &weights)?.breakdown.total;
        delta[k] = 0.0;
        let fd = (plus - minus) / (2.0 * step);
        let err = (base.breakdown.gradient[k] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use crate::geometry::{CameraIntrinsics, Pixel, PoseSE3};
    use crate::maps::DepthMap;
    use crate::problem::View;

    #[test]
    fn charbonnier_is_close_to_abs() {
        assert_eq!(charbonnier(0.0, 1e-6).0, 0.0);
        for x in [-3.0, -1e-3, 2e-5, 0.7] {
            let (v, d) = charbonnier(x, 1e-6);
            assert!((v - f64::abs(x)).abs() <= 1e-6);
            assert!((d - f64::signum(x)).abs() < 1e-2);
        }
    }

    #[test]
    fn angle_examples() {
        let x = Vector3::x();
        assert_eq!(vector_angle(&x, &Vector3::y()).unwrap(), FRAC_PI_2);
        assert_eq!(vector_angle(&Vector3::new(2.0, -1.0, 3.0), &Vector3::new(2.0, -1.0, 3.0)).unwrap(), 0.0);
        let a = vector_angle(&Vector3::new(1.0, 1.0, 0.0), &x).unwrap();
        assert!((a - FRAC_PI_4).abs() < 1e-15);
        assert!(matches!(vector_angle(&Vector3::zeros(), &x), Err(Error::Domain(_))));
    }

    #[test]
    fn angle_gradient_matches_differences() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(1.1, 0.4, 1.7);
        let (_, ga, gb) = vector_angle_grad(&a, &b, 1e-12);
        let h = 1e-6;
        for r in 0..3 {
            let mut e = Vector3::zeros();
            e[r] = h;
            let fa = (vector_angle(&(a + e), &b).unwrap() - vector_angle(&(a - e), &b).unwrap()) / (2.0 * h);
            let fb = (vector_angle(&a, &(b + e)).unwrap() - vector_angle(&a, &(b - e)).unwrap()) / (2.0 * h);
            assert!((fa - ga[r]).abs() < 1e-8);
            assert!((fb - gb[r]).abs() < 1e-8);
        }
        let (t, ga, gb) = vector_angle_grad(&a, &Vector3::zeros(), 1e-12);
        assert_eq!((t, ga, gb), (0.0, Vector3::zeros(), Vector3::zeros()));
    }

    /// Independent scalar evaluation of the depth loss for W = 1 on small lists.
    fn brute_depth_loss(pred: &[f64], pseudo: &[f64]) -> f64 {
        fn lower_median(v: &[f64]) -> f64 {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s[(s.len() - 1) / 2]
        }
        fn normalize(v: &[f64]) -> Vec<f64> {
            let m = lower_median(v);
            let dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
            let s = lower_median(&dev);
            v.iter().map(|x| (x - m) / s).collect()
        }
        let (a, b) = (normalize(pred), normalize(pseudo));
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / pred.len() as f64
    }

    #[test]
    fn depth_loss_examples() {
        let map = |v: Vec<f64>| DepthMap::new(v.len(), 1, v).unwrap();
        let pred = map(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let conf = ConfidenceMap::neutral(5, 1);
        let same = depth_loss(&pred, &pred, &conf, 1.0).unwrap();
        assert!(same.loss.abs() <= 2e-6);

        // medians 3 / 3, MADs 1 / 1 -> normalized {-2..2} and {-2,-1,0,1,3}; mean |diff| = 1/5
        let pseudo = map(vec![1.0, 2.0, 3.0, 4.0, 6.0]);
        let out = depth_loss(&pred, &pseudo, &conf, 1.0).unwrap();
        let expected = brute_depth_loss(&pred.values, &pseudo.values);
        assert!((expected - 0.2).abs() < 1e-15);
        assert!((out.loss - expected).abs() < 1e-6);

        let small = map(vec![1.0, 2.0]);
        assert!(matches!(depth_loss(&pred, &small, &conf, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn confidence_minimizer_is_alpha_over_residual() {
        let e = [1.0, 0.8, 2.0];
        let alpha = 1.0;
        for &ei in &e {
            let w_star = alpha / ei;
            let l = crate::maps::logit_from_confidence(w_star);
            let (_, g) = confidence_term(&[ei], &[l], alpha);
            assert!(g[0].abs() < 1e-12);
        }
        // W = 1 is stationary for e = 1
        let (_, g) = confidence_term(&[1.0], &[0.0], 1.0);
        assert_eq!(g[0], 0.0);
    }

    fn two_view_problem(pairs: Vec<(Pixel, Pixel)>, flat: bool) -> Problem {
        let k = CameraIntrinsics::new(2.0, 2.0, 1.5, 1.5, 4, 4).unwrap();
        let depth = (0..16)
            .map(|p| if flat { 2.0 } else { 2.0 + 0.3 * (p as f64 * 1.7).sin() })
            .collect();
        let view = View {
            intrinsics: k,
            pseudo: DepthMap::new(4, 4, depth).unwrap(),
        };
        Problem::new(
            vec![view.clone(), view],
            vec![CorrespondenceSet::new(0, 1, pairs)],
            HyperParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn registration_example_matches_explicit_rays() {
        // Camera 1 sits one unit along +x. Pixel (1.5, 1.5) of view 0 and pixel (0.5, 1.5) of
        // view 1 see the same point (0, 0, 2) at depth 2.
        let problem = two_view_problem(vec![(Pixel::new(1.5, 1.5), Pixel::new(0.5, 1.5))], true);
        let mut state = SceneState::init(&problem, 1).unwrap();
        state.views[1].pose = PoseSE3::new(nalgebra::Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let exact = registration_loss(&state, &problem, 1e-12).unwrap();
        assert!(exact.loss < 1e-15, "{}", exact.loss);

        state.views[1].log_scale = 1.1f64.ln();
        let out = registration_loss(&state, &problem, 1e-12).unwrap();
        assert_eq!(out.terms, 2);

        // Rays written out by hand.
        let p0 = Vector3::new(0.0, 0.0, 2.0);
        let d1 = 2.0 * 1.1;
        let p1 = Vector3::new(1.0 + (0.5 - 1.5) / 2.0 * d1, 0.0, d1);
        let t0 = Vector3::zeros();
        let t1 = Vector3::new(1.0, 0.0, 0.0);
        let ang = |a: Vector3<f64>, b: Vector3<f64>| (a.dot(&b) / (a.norm() * b.norm())).acos();
        // The anchor-1 term vanishes: p0 lies on the ray of pixel (0.5, 1.5) in view 1.
        assert!((p1 - t1).cross(&(p0 - t1)).norm() < 1e-14);
        let expected = 0.5 * ang(p0 - t0, p1 - t0);
        assert!((out.loss - expected).abs() < 1e-12, "{} vs {}", out.loss, expected);
    }

    #[test]
    fn total_is_depth_plus_weighted_registration() {
        let problem = two_view_problem(vec![(Pixel::new(0.2, 1.0), Pixel::new(2.5, 2.9))], false);
        let mut state = SceneState::init(&problem, 2).unwrap();
        state.views[1].pose.translation = Vector3::new(0.3, -0.1, 0.2);
        state.views[0].residual[3] = 0.2;
        state.views[1].logits[5] = -0.7;
        let hp = HyperParams::default();
        let b = total_loss(&state, &problem, &hp).unwrap();
        assert_eq!(b.total, b.depth_term + hp.lambda * b.registration_term);
        assert!(b.registration_term > 0.0);

        let at_init = total_loss(&SceneState::init(&problem, 2).unwrap(), &problem, &hp).unwrap();
        assert!(at_init.depth_term.abs() < 1e-12);
    }

    #[test]
    fn gradient_check_without_matches_is_exact_on_poses() {
        let problem = two_view_problem(vec![], false);
        let mut state = SceneState::init(&problem, 2).unwrap();
        // Move off the zero-residual kink of the depth term.
        state.views[0].residual = vec![0.3, -0.2, 0.1, 0.25];
        state.views[1].residual = vec![-0.1, 0.2, 0.15, -0.3];
        let hp = HyperParams::default();
        // Only probe the pose block of view 1, where the loss is constant.
        let obj = Objective::new(&problem, hp, 2);
        let g = obj.evaluate(&state).unwrap().breakdown.gradient;
        let l = state.layout();
        assert!(g[l.pose(1)..l.pose(1) + 6].iter().all(|v| *v == 0.0));
        let err = finite_difference_check(&state, &problem, &hp, 50, 1e-6, 3).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
