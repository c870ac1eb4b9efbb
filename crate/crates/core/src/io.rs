//! On-disk formats: problem directories, solution bundles, ground truth and point clouds.
//!
//! Rasters are little-endian PFM (`Pf` for one channel, `PF` for three), stored bottom-up.
//! Matches are CSV with header `ui_x,ui_y,uj_x,uj_y`. Trajectories are TUM rows
//! `index tx ty tz qx qy qz qw`. Every writer is canonical: equal inputs give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pixel, Point3, PoseSE3};
use crate::losses::{HyperParams, LossBreakdown};
use crate::maps::{CorrespondenceSet, DepthMap};
use crate::optimizer::{point_map, OptimConfig, Solution};
use crate::problem::{Problem, SceneState, View};
use crate::sim::GroundTruthScene;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "problem.json";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const RUN_FILE: &str = "run.json";
pub const STATE_FILE: &str = "state.json";
pub const MATCH_HEADER: &str = "ui_x,ui_y,uj_x,uj_y";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::format(path, e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------------------------
// PFM

/// A float raster in top-down row-major order, `channels` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(r: &Raster) -> Vec<u8> {
    let tag = if r.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", r.width, r.height).into_bytes();
    let row_len = r.width * r.channels;
    out.reserve(r.data.len() * 4);
    for row in (0..r.height).rev() {
        for v in &r.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Raster> {
    let bad = |m: &str| Error::format(path, m.to_string());
    // three whitespace-terminated header tokens after the tag
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PFM header"))?);
    }
    pos += 1; // single whitespace byte ends the header
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(bad(&format!("unknown PFM tag {t:?}"))),
    };
    let width: usize = tokens[1].parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let count = width * height * channels;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != count * 4 {
        return Err(bad(&format!("expected {} data bytes, found {}", count * 4, body.len())));
    }
    let row_len = width * channels;
    let mut data = vec![0.0f32; count];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (stored_row, col) = (k / row_len, k % row_len);
        data[(height - 1 - stored_row) * row_len + col] = v;
    }
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(path: &Path, raster: &Raster) -> Result<()> {
    write_file(path, encode_pfm(raster))
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    decode_pfm(&read_bytes(path)?, path)
}

fn scalar_raster(width: usize, height: usize, values: &[f64]) -> Raster {
    Raster {
        width,
        height,
        channels: 1,
        data: values.iter().map(|&v| v as f32).collect(),
    }
}

/// Reads a one-channel raster and checks its size.
fn read_scalar(path: &Path, width: usize, height: usize) -> Result<Vec<f64>> {
    let r = read_pfm(path)?;
    if r.channels != 1 || r.width != width || r.height != height {
        return Err(Error::format(
            path,
            format!(
                "expected a {width}x{height} one-channel raster, found {}x{} with {} channels",
                r.width, r.height, r.channels
            ),
        ));
    }
    Ok(r.data.iter().map(|&v| f64::from(v)).collect())
}

fn write_points(path: &Path, width: usize, height: usize, points: &[Point3]) -> Result<()> {
    let data = points.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
    write_pfm(
        path,
        &Raster {
            width,
            height,
            channels: 3,
            data,
        },
    )
}

fn read_points(path: &Path, width: usize, height: usize) -> Result<Vec<Point3>> {
    let r = read_pfm(path)?;
    if r.channels != 3 || r.width != width || r.height != height {
        return Err(Error::format(path, format!("expected a {width}x{height} three-channel raster")));
    }
    Ok(r
        .data
        .chunks_exact(3)
        .map(|c| Vector3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2])))
        .collect())
}

/// Depth raster whose values must be finite and positive; errors name the pixel index.
fn read_depth(path: &Path, width: usize, height: usize) -> Result<DepthMap> {
    let values = read_scalar(path, width, height)?;
    if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::format(
            path,
            format!("pixel {k}: depth {} is not finite and positive", values[k]),
        ));
    }
    DepthMap::new(width, height, values)
}

// ---------------------------------------------------------------------------------------------
// Matches

pub fn encode_matches(set: &CorrespondenceSet) -> String {
    let mut s = String::with_capacity(32 * (set.pairs.len() + 1));
    s.push_str(MATCH_HEADER);
    s.push('\n');
    for (a, b) in &set.pairs {
        let _ = writeln!(s, "{},{},{},{}", a.x, a.y, b.x, b.y);
    }
    s
}

pub fn decode_matches(text: &str, view_i: usize, view_j: usize, path: &Path) -> Result<CorrespondenceSet> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MATCH_HEADER) {
        return Err(Error::format(path, format!("first line must be {MATCH_HEADER:?}")));
    }
    let mut pairs = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", row + 1)))?;
        if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(path, format!("row {}: expected 4 finite values", row + 1)));
        }
        pairs.push((Pixel::new(v[0], v[1]), Pixel::new(v[2], v[3])));
    }
    Ok(CorrespondenceSet::new(view_i, view_j, pairs))
}

// ---------------------------------------------------------------------------------------------
// Problem directories

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub i: usize,
    pub j: usize,
    pub file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub version: u32,
    pub views: Vec<ViewEntry>,
    pub correspondences: Vec<MatchEntry>,
    #[serde(default)]
    pub hyperparams: HyperOverrides,
}

fn depth_name(k: usize) -> String {
    format!("depth_{k:03}.pfm")
}

/// Writes `problem.json`, one pseudo-depth PFM per view and one CSV per correspondence set.
///
/// Depths are stored in single precision.
pub fn save_problem(problem: &Problem, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let defaults = HyperParams::default();
    let mut views = Vec::with_capacity(problem.views.len());
    for (k, v) in problem.views.iter().enumerate() {
        let name = depth_name(k);
        let d = &v.pseudo;
        write_pfm(&dir.join(&name), &scalar_raster(d.width, d.height, &d.values))?;
        let c = &v.intrinsics;
        views.push(ViewEntry {
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            depth: name,
        });
    }
    let mut correspondences = Vec::with_capacity(problem.correspondences.len());
    for (n, set) in problem.correspondences.iter().enumerate() {
        let file = format!("matches_{n:03}_{:03}_{:03}.csv", set.view_i, set.view_j);
        write_file(&dir.join(&file), encode_matches(set))?;
        correspondences.push(MatchEntry {
            i: set.view_i,
            j: set.view_j,
            file,
        });
    }
    let hp = problem.hyperparams;
    let manifest = ProblemManifest {
        version: MANIFEST_VERSION,
        views,
        correspondences,
        hyperparams: HyperOverrides {
            alpha: (hp.alpha != defaults.alpha).then_some(hp.alpha),
            lambda: (hp.lambda != defaults.lambda).then_some(hp.lambda),
        },
    };
    let path = dir.join(MANIFEST_FILE);
    write_file(&path, to_json(&path, &manifest)?)
}

/// Reads and fully validates a problem directory.
pub fn load_problem(dir: &Path) -> Result<Problem> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let m: ProblemManifest = from_json(&manifest_path)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported version {} (expected {MANIFEST_VERSION})", m.version),
        ));
    }
    let mut views = Vec::with_capacity(m.views.len());
    for (k, v) in m.views.iter().enumerate() {
        let intrinsics = CameraIntrinsics::new(v.fx, v.fy, v.cx, v.cy, v.width, v.height)
            .map_err(|e| Error::format(&manifest_path, format!("views[{k}]: {e}")))?;
        let pseudo = read_depth(&dir.join(&v.depth), v.width, v.height)?;
        views.push(View { intrinsics, pseudo });
    }
    let mut sets = Vec::with_capacity(m.correspondences.len());
    for (n, c) in m.correspondences.iter().enumerate() {
        if c.i >= views.len() || c.j >= views.len() || c.i == c.j {
            return Err(Error::format(
                &manifest_path,
                format!("correspondences[{n}]: invalid view pair ({}, {})", c.i, c.j),
            ));
        }
        let path = dir.join(&c.file);
        sets.push(decode_matches(&read_text(&path)?, c.i, c.j, &path)?);
    }
    let mut hp = HyperParams::default();
    hp.alpha = m.hyperparams.alpha.unwrap_or(hp.alpha);
    hp.lambda = m.hyperparams.lambda.unwrap_or(hp.lambda);
    Problem::new(views, sets, hp).map_err(|e| Error::format(&manifest_path, e.to_string()))
}

// ---------------------------------------------------------------------------------------------
// Trajectories

/// One TUM row with the quaternion as written, `[qx, qy, qz, qw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub index: usize,
    pub translation: [f64; 3],
    pub quaternion: [f64; 4],
}

impl TrajectoryRow {
    /// Canonical row of a pose: unit quaternion with `qw >= 0`.
    pub fn from_pose(index: usize, pose: &PoseSE3) -> Self {
        let q = pose.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        let t = pose.translation;
        Self {
            index,
            translation: [t.x, t.y, t.z],
            quaternion: [s * q.i, s * q.j, s * q.k, s * q.w],
        }
    }

    pub fn pose(&self) -> PoseSE3 {
        let [x, y, z, w] = self.quaternion;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        PoseSE3::from_quaternion(&q, Vector3::from(self.translation))
    }
}

pub fn encode_trajectory(rows: &[TrajectoryRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = write!(s, "{}", r.index);
        for v in r.translation.iter().chain(&r.quaternion) {
            let _ = write!(s, " {v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn decode_trajectory(text: &str, path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: String| Error::format(path, format!("line {}: {m}", n + 1));
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", f.len())));
        }
        let index: usize = f[0].parse().map_err(|e| bad(format!("{e}")))?;
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        rows.push(TrajectoryRow {
            index,
            translation: [v[0], v[1], v[2]],
            quaternion: [v[3], v[4], v[5], v[6]],
        });
    }
    if rows.iter().enumerate().any(|(k, r)| r.index != k) {
        return Err(Error::format(path, "row indices must be 0, 1, 2, ..."));
    }
    Ok(rows)
}

fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    decode_trajectory(&read_text(path)?, path)
}

// ---------------------------------------------------------------------------------------------
// Solution bundles

/// Run metadata stored next to a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub config: OptimConfig,
    pub hyperparams: HyperParams,
    /// `(width, height)` of every view.
    pub sizes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub depth_term: f64,
    pub registration_term: f64,
    pub total: f64,
}

impl From<&LossBreakdown> for LossRecord {
    fn from(b: &LossBreakdown) -> Self {
        Self {
            depth_term: b.depth_term,
            registration_term: b.registration_term,
            total: b.total,
        }
    }
}

/// Everything a solve writes to disk. Rasters hold single-precision values; `state` is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle {
    pub trajectory: Vec<TrajectoryRow>,
    pub depths: Vec<DepthMap>,
    /// Confidence `W` per pixel.
    pub confidences: Vec<Vec<f64>>,
    pub point_maps: Vec<Vec<Point3>>,
    pub loss_history: Vec<LossRecord>,
    pub run: RunInfo,
    pub state: SceneState,
}

fn round32(v: f64) -> f64 {
    f64::from(v as f32)
}

impl SolutionBundle {
    /// Packs a solution, rounding rasters to their stored precision.
    pub fn from_solution(solution: &Solution, config: &OptimConfig, hp: &HyperParams) -> Result<Self> {
        let depths = solution
            .depths
            .iter()
            .map(|d| DepthMap::new(d.width, d.height, d.values.iter().map(|&v| round32(v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            trajectory: solution
                .poses
                .iter()
                .enumerate()
                .map(|(k, p)| TrajectoryRow::from_pose(k, p))
                .collect(),
            confidences: solution
                .confidences
                .iter()
                .map(|c| c.weights().into_iter().map(round32).collect())
                .collect(),
            point_maps: solution
                .point_maps
                .iter()
                .map(|v| v.iter().map(|p| p.map(round32)).collect())
                .collect(),
            loss_history: solution.loss_history.iter().map(LossRecord::from).collect(),
            run: RunInfo {
                seed: config.seed,
                iterations: solution.iterations,
                converged: solution.converged,
                config: *config,
                hyperparams: *hp,
                sizes: depths.iter().map(|d| (d.width, d.height)).collect(),
            },
            depths,
            state: solution.state.clone(),
        })
    }

    pub fn poses(&self) -> Vec<PoseSE3> {
        self.trajectory.iter().map(TrajectoryRow::pose).collect()
    }
}

fn view_file(kind: &str, k: usize) -> String {
    format!("{kind}_{k:03}.pfm")
}

fn encode_history(history: &[LossRecord]) -> String {
    let mut s = String::from("iteration,depth_term,registration_term,total\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(s, "{k},{:.16e},{:.16e},{:.16e}", r.depth_term, r.registration_term, r.total);
    }
    s
}

fn decode_history(text: &str, path: &Path) -> Result<Vec<LossRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))
        };
        if f.len() != 4 {
            return Err(Error::format(path, format!("line {}: expected 4 fields", n + 1)));
        }
        out.push(LossRecord {
            depth_term: parse(f[1])?,
            registration_term: parse(f[2])?,
            total: parse(f[3])?,
        });
    }
    Ok(out)
}

pub fn save_solution(bundle: &SolutionBundle, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(TRAJECTORY_FILE), encode_trajectory(&bundle.trajectory))?;
    for (k, d) in bundle.depths.iter().enumerate() {
        let (w, h) = (d.width, d.height);
        write_pfm(&dir.join(view_file("depth", k)), &scalar_raster(w, h, &d.values))?;
        write_pfm(&dir.join(view_file("confidence", k)), &scalar_raster(w, h, &bundle.confidences[k]))?;
        write_points(&dir.join(view_file("pointmap", k)), w, h, &bundle.point_maps[k])?;
    }
    write_file(&dir.join(LOSS_HISTORY_FILE), encode_history(&bundle.loss_history))?;
    let run = dir.join(RUN_FILE);
    write_file(&run, to_json(&run, &bundle.run)?)?;
    let state = dir.join(STATE_FILE);
    write_file(&state, to_json(&state, &bundle.state)?)
}

pub fn load_solution(dir: &Path) -> Result<SolutionBundle> {
    let run: RunInfo = from_json(&dir.join(RUN_FILE))?;
    let traj_path = dir.join(TRAJECTORY_FILE);
    let trajectory = read_trajectory(&traj_path)?;
    if trajectory.len() != run.sizes.len() {
        return Err(Error::format(
            &traj_path,
            format!("{} rows for {} views", trajectory.len(), run.sizes.len()),
        ));
    }
    let mut depths = Vec::with_capacity(run.sizes.len());
    let mut confidences = Vec::with_capacity(run.sizes.len());
    let mut point_maps = Vec::with_capacity(run.sizes.len());
    for (k, &(w, h)) in run.sizes.iter().enumerate() {
        depths.push(read_depth(&dir.join(view_file("depth", k)), w, h)?);
        confidences.push(read_scalar(&dir.join(view_file("confidence", k)), w, h)?);
        point_maps.push(read_points(&dir.join(view_file("pointmap", k)), w, h)?);
    }
    let hist_path = dir.join(LOSS_HISTORY_FILE);
    let loss_history = decode_history(&read_text(&hist_path)?, &hist_path)?;
    let state_path = dir.join(STATE_FILE);
    let state: SceneState = from_json(&state_path)?;
    if state.views.len() != run.sizes.len() {
        return Err(Error::format(&state_path, "view count differs from the run metadata"));
    }
    Ok(SolutionBundle {
        trajectory,
        depths,
        confidences,
        point_maps,
        loss_history,
        run,
        state,
    })
}

// ---------------------------------------------------------------------------------------------
// Ground truth

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub trajectory: Vec<TrajectoryRow>,
    pub depths: Vec<DepthMap>,
    pub point_maps: Vec<Vec<Point3>>,
}

impl GroundTruth {
    pub fn from_scene(scene: &GroundTruthScene) -> Result<Self> {
        let mut point_maps = Vec::with_capacity(scene.views.len());
        for v in &scene.views {
            point_maps.push(point_map(&v.intrinsics, &v.pose, &v.depth)?);
        }
        Ok(Self {
            trajectory: scene
                .views
                .iter()
                .enumerate()
                .map(|(k, v)| TrajectoryRow::from_pose(k, &v.pose))
                .collect(),
            depths: scene.views.iter().map(|v| v.depth.clone()).collect(),
            point_maps,
        })
    }

    pub fn poses(&self) -> Vec<PoseSE3> {
        self.trajectory.iter().map(TrajectoryRow::pose).collect()
    }
}

/// Writes true poses, depths and point maps with the same layout as a solution bundle.
pub fn save_ground_truth(truth: &GroundTruth, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(TRAJECTORY_FILE), encode_trajectory(&truth.trajectory))?;
    for (k, d) in truth.depths.iter().enumerate() {
        write_pfm(&dir.join(view_file("depth", k)), &scalar_raster(d.width, d.height, &d.values))?;
        write_points(&dir.join(view_file("pointmap", k)), d.width, d.height, &truth.point_maps[k])?;
    }
    Ok(())
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let trajectory = read_trajectory(&dir.join(TRAJECTORY_FILE))?;
    let mut depths = Vec::with_capacity(trajectory.len());
    let mut point_maps = Vec::with_capacity(trajectory.len());
    for k in 0..trajectory.len() {
        let path = dir.join(view_file("depth", k));
        let r = read_pfm(&path)?;
        depths.push(read_depth(&path, r.width, r.height)?);
        point_maps.push(read_points(&dir.join(view_file("pointmap", k)), r.width, r.height)?);
    }
    Ok(GroundTruth {
        trajectory,
        depths,
        point_maps,
    })
}

// ---------------------------------------------------------------------------------------------
// Point clouds

pub fn encode_ply(points: &[Point3]) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    let mut out = header.into_bytes();
    out.reserve(points.len() * 12);
    for p in points {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Writes every point whose confidence is at least `confidence_floor`; returns the count.
pub fn export_ply(point_maps: &[Vec<Point3>], confidences: &[Vec<f64>], path: &Path, confidence_floor: f64) -> Result<usize> {
    if point_maps.len() != confidences.len() || point_maps.iter().zip(confidences).any(|(p, c)| p.len() != c.len()) {
        return Err(Error::Shape("point and confidence maps differ in size".into()));
    }
    let kept: Vec<Point3> = point_maps
        .iter()
        .zip(confidences)
        .flat_map(|(p, c)| p.iter().zip(c).filter(|(_, &w)| w >= confidence_floor).map(|(p, _)| *p))
        .collect();
    write_file(path, encode_ply(&kept))?;
    Ok(kept.len())
}

/// Path of the ground-truth directory that `simulate` writes inside a problem directory.
pub fn ground_truth_dir(problem_dir: &Path) -> PathBuf {
    problem_dir.join("ground_truth")
}
