//! Evaluation against ground truth: similarity alignment, trajectory error, pairwise pose AUC,
//! and relative depth / point-map accuracy.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, Point3, PoseSE3};
use crate::maps::DepthMap;
use crate::robust::weighted_median;

/// Relative error threshold for the inlier ratios.
pub const TAU_THRESHOLD: f64 = 0.1;

/// Points used for point-map alignment are subsampled to at most this many.
pub const ALIGN_SAMPLES: usize = 10_000;

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p * self.scale + self.translation
    }

    /// Transforms a camera-to-world pose: the center moves with the points, the orientation
    /// is rotated.
    pub fn apply_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.translation),
        }
    }
}

/// Least-squares similarity mapping `source` onto `target` (Umeyama's closed form).
pub fn umeyama_align(source: &[Point3], target: &[Point3]) -> Result<Sim3> {
    if source.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} source points, {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::Degenerate("alignment needs at least 3 point pairs".into()));
    }
    let n = source.len() as f64;
    let mu_x = source.iter().sum::<Vector3<f64>>() / n;
    let mu_y = target.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x - mu_x;
        cov += (y - mu_y) * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    if !(var_x > 0.0) || !(d[order[1]] > 1e-12 * d[order[0]].max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        s[(order[2], order[2])] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = (0..3).map(|i| d[i] * s[(i, i)]).sum::<f64>() / var_x;
    let translation = mu_y - rotation * mu_x * scale;
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

/// Scale-normalized aligned trajectory error: RMSE of Sim(3)-aligned camera centers divided by
/// the RMS distance of the true centers from their centroid.
pub fn ate(est: &[PoseSE3], gt: &[PoseSE3]) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::Shape("pose lists differ in length".into()));
    }
    if est.len() < 3 {
        return Err(Error::Domain("trajectory error needs at least 3 views".into()));
    }
    let src: Vec<Point3> = est.iter().map(|p| p.translation).collect();
    let dst: Vec<Point3> = gt.iter().map(|p| p.translation).collect();
    let sim = umeyama_align(&src, &dst)?;
    let n = dst.len() as f64;
    let rmse = (src.iter().zip(&dst).map(|(s, d)| (sim.apply(s) - d).norm_squared()).sum::<f64>() / n).sqrt();
    let centroid = dst.iter().sum::<Vector3<f64>>() / n;
    let spread = (dst.iter().map(|d| (d - centroid).norm_squared()).sum::<f64>() / n).sqrt();
    Ok(rmse / spread)
}

/// Angular errors of one view pair, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    pub rotation_deg: f64,
    pub translation_deg: f64,
}

impl PairError {
    pub fn max(&self) -> f64 {
        self.rotation_deg.max(self.translation_deg)
    }
}

fn relative(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.inverse().compose(b)
}

fn direction_error_deg(est: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    let (ne, ng) = (est.norm(), gt.norm());
    if ng < 1e-9 {
        return if ne < 1e-9 { 0.0 } else { 90.0 };
    }
    if ne < 1e-9 {
        return 90.0;
    }
    est.cross(gt).norm().atan2(est.dot(gt)).to_degrees()
}

/// Relative-rotation and relative-translation-direction errors of every unordered view pair.
pub fn pairwise_errors(est: &[PoseSE3], gt: &[PoseSE3]) -> Result<Vec<PairError>> {
    if est.len() != gt.len() {
        return Err(Error::Shape("pose lists differ in length".into()));
    }
    if est.len() < 2 {
        return Err(Error::Domain("pairwise errors need at least 2 views".into()));
    }
    let mut out = Vec::with_capacity(est.len() * (est.len() - 1) / 2);
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let re = relative(&est[i], &est[j]);
            let rg = relative(&gt[i], &gt[j]);
            out.push(PairError {
                i,
                j,
                rotation_deg: rotation_angle(&(re.rotation.transpose() * rg.rotation)).to_degrees(),
                translation_deg: direction_error_deg(&re.translation, &rg.translation),
            });
        }
    }
    Ok(out)
}

/// Area under the cumulative accuracy curve of `errors` over `[0, threshold]`, in percent.
///
/// The curve is the empirical CDF, so the area is exactly `sum(max(0, T - e)) / (n T)`.
pub fn auc_from_errors(errors: &[f64], threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let area: f64 = sorted
        .iter()
        .take_while(|e| **e < threshold)
        .map(|e| threshold - e.max(0.0))
        .sum();
    100.0 * area / (threshold * sorted.len() as f64)
}

/// Pose AUC at `threshold_deg` over the max of rotation and translation-direction errors.
pub fn pose_auc(est: &[PoseSE3], gt: &[PoseSE3], threshold_deg: f64) -> Result<f64> {
    let errors: Vec<f64> = pairwise_errors(est, gt)?.iter().map(PairError::max).collect();
    Ok(auc_from_errors(&errors, threshold_deg))
}

pub fn mean_rotation_error_deg(est: &[PoseSE3], gt: &[PoseSE3]) -> Result<f64> {
    let e = pairwise_errors(est, gt)?;
    Ok(e.iter().map(|p| p.rotation_deg).sum::<f64>() / e.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelTau {
    pub rel: f64,
    pub tau: f64,
}

fn rel_tau(errors: impl Iterator<Item = f64>) -> RelTau {
    let (mut sum, mut inliers, mut n) = (0.0, 0usize, 0usize);
    for e in errors {
        sum += e;
        inliers += usize::from(e < TAU_THRESHOLD);
        n += 1;
    }
    RelTau {
        rel: sum / n as f64,
        tau: inliers as f64 / n as f64,
    }
}

/// Depth accuracy after one scene-wide median scale; returns the overall and per-view values.
pub fn depth_rel_tau(est: &[DepthMap], gt: &[DepthMap]) -> Result<(RelTau, Vec<RelTau>)> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::Shape("depth lists differ in length or are empty".into()));
    }
    for (k, (e, g)) in est.iter().zip(gt).enumerate() {
        if !e.same_shape(g.width, g.height) {
            return Err(Error::Shape(format!("view {k}: estimated and true depth differ in size")));
        }
    }
    let ratios: Vec<f64> = est
        .iter()
        .zip(gt)
        .flat_map(|(e, g)| e.values.iter().zip(&g.values).map(|(a, b)| b / a))
        .collect();
    let scale = weighted_median(&ratios, &vec![1.0; ratios.len()])?;
    let per_pixel = |e: &DepthMap, g: &DepthMap| -> Vec<f64> {
        e.values.iter().zip(&g.values).map(|(a, b)| (scale * a - b).abs() / b).collect()
    };
    let per_view: Vec<Vec<f64>> = est.iter().zip(gt).map(|(e, g)| per_pixel(e, g)).collect();
    let overall = rel_tau(per_view.iter().flatten().copied());
    let views = per_view.iter().map(|v| rel_tau(v.iter().copied())).collect();
    Ok((overall, views))
}

/// Point errors relative to each point's true distance from its view's camera center.
pub fn point_errors(aligned: &[Vec<Point3>], gt: &[Vec<Point3>], gt_centers: &[Point3]) -> Vec<Vec<f64>> {
    aligned
        .iter()
        .zip(gt)
        .zip(gt_centers)
        .map(|((a, g), c)| a.iter().zip(g).map(|(p, q)| (p - q).norm() / (q - c).norm()).collect())
        .collect()
}

/// Point-map accuracy after Sim(3) alignment of the estimate onto the truth.
pub fn pointmap_rel_tau(
    est: &[Vec<Point3>],
    gt: &[Vec<Point3>],
    gt_centers: &[Point3],
) -> Result<(RelTau, Vec<RelTau>)> {
    if est.len() != gt.len() || est.len() != gt_centers.len() || est.is_empty() {
        return Err(Error::Shape("point-map lists differ in length or are empty".into()));
    }
    if est.iter().zip(gt).any(|(e, g)| e.len() != g.len()) {
        return Err(Error::Shape("estimated and true point maps differ in size".into()));
    }
    let total: usize = gt.iter().map(Vec::len).sum();
    let stride = total.div_ceil(ALIGN_SAMPLES).max(1);
    let src: Vec<Point3> = est.iter().flatten().step_by(stride).copied().collect();
    let dst: Vec<Point3> = gt.iter().flatten().step_by(stride).copied().collect();
    let sim = umeyama_align(&src, &dst)?;
    let aligned: Vec<Vec<Point3>> = est.iter().map(|v| v.iter().map(|p| sim.apply(p)).collect()).collect();
    let errors = point_errors(&aligned, gt, gt_centers);
    let overall = rel_tau(errors.iter().flatten().copied());
    let views = errors.iter().map(|v| rel_tau(v.iter().copied())).collect();
    Ok((overall, views))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewReport {
    pub depth: RelTau,
    pub point: RelTau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub point_rel: f64,
    pub point_tau: f64,
    pub depth_rel: f64,
    pub depth_tau: f64,
    pub ate: f64,
    pub auc30: f64,
    pub mean_rotation_error_deg: f64,
    pub per_view: Vec<ViewReport>,
}

/// Everything needed to score one reconstruction.
pub struct Reconstruction<'a> {
    pub poses: &'a [PoseSE3],
    pub depths: &'a [DepthMap],
    pub point_maps: &'a [Vec<Point3>],
}

pub fn evaluate(est: &Reconstruction<'_>, gt: &Reconstruction<'_>) -> Result<EvalReport> {
    let (depth, depth_views) = depth_rel_tau(est.depths, gt.depths)?;
    let centers: Vec<Point3> = gt.poses.iter().map(|p| p.translation).collect();
    let (point, point_views) = pointmap_rel_tau(est.point_maps, gt.point_maps, &centers)?;
    Ok(EvalReport {
        point_rel: point.rel,
        point_tau: point.tau,
        depth_rel: depth.rel,
        depth_tau: depth.tau,
        ate: ate(est.poses, gt.poses)?,
        auc30: pose_auc(est.poses, gt.poses, 30.0)?,
        mean_rotation_error_deg: mean_rotation_error_deg(est.poses, gt.poses)?,
        per_view: depth_views
            .into_iter()
            .zip(point_views)
            .map(|(depth, point)| ViewReport { depth, point })
            .collect(),
    })
}

impl EvalReport {
    /// `key=value` lines, overall metrics first, then `view.<i>.<metric>` entries.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("point_rel", self.point_rel),
            ("point_tau", self.point_tau),
            ("depth_rel", self.depth_rel),
            ("depth_tau", self.depth_tau),
            ("ate", self.ate),
            ("auc30", self.auc30),
            ("mean_rotation_error_deg", self.mean_rotation_error_deg),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        for (i, v) in self.per_view.iter().enumerate() {
            let _ = writeln!(s, "view.{i}.depth_rel={}", v.depth.rel);
            let _ = writeln!(s, "view.{i}.depth_tau={}", v.depth.tau);
            let _ = writeln!(s, "view.{i}.point_rel={}", v.point.rel);
            let _ = writeln!(s, "view.{i}.point_tau={}", v.point.tau);
        }
        s
    }
}
