//! Analytic worlds of planes and spheres, seen by cameras on a smooth inward-looking arc.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{so3_exp, CameraIntrinsics, Pixel, Point3, PoseSE3};
use crate::maps::DepthMap;

const HIT_EPS: f64 = 1e-9;

/// Bounded rectangle of a plane: center, two orthonormal in-plane axes and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub center: Point3,
    pub axes: [Vector3<f64>; 2],
    pub half: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Points with `normal . x = offset`, optionally limited to a panel.
    Plane {
        normal: Vector3<f64>,
        offset: f64,
        panel: Option<Panel>,
    },
    Sphere { center: Point3, radius: f64 },
}

impl Primitive {
    pub fn is_plane(&self) -> bool {
        matches!(self, Primitive::Plane { .. })
    }

    /// Smallest ray parameter `t > 0` with `origin + t * dir` on the primitive.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Primitive::Plane {
                normal,
                offset,
                panel,
            } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (offset - normal.dot(origin)) / denom;
                if !(t > HIT_EPS) {
                    return None;
                }
                if let Some(p) = panel {
                    let x = origin + dir * t - p.center;
                    if x.dot(&p.axes[0]).abs() > p.half[0] || x.dot(&p.axes[1]).abs() > p.half[1] {
                        return None;
                    }
                }
                Some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / a, (-b + sq) / a].into_iter().find(|t| *t > HIT_EPS)
            }
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        match *self {
            Primitive::Sphere { center, radius } => (p - center).norm() < radius,
            Primitive::Plane { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub primitive: usize,
}

/// Primitives inside an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub primitives: Vec<Primitive>,
    pub min: Point3,
    pub max: Point3,
}

impl World {
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn raycast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<Hit> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(origin, dir).map(|t| Hit { t, primitive: i }))
            .min_by(|a, b| a.t.total_cmp(&b.t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthView {
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseSE3,
    pub depth: DepthMap,
    /// Index of the primitive seen at each pixel.
    pub primitive_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    pub views: Vec<GroundTruthView>,
    pub world: World,
}

impl GroundTruthScene {
    /// Mean distance of the camera centers from their centroid.
    pub fn scale(&self) -> f64 {
        let n = self.views.len() as f64;
        let centroid = self.views.iter().map(|v| v.pose.translation).sum::<Vector3<f64>>() / n;
        self.views
            .iter()
            .map(|v| (v.pose.translation - centroid).norm())
            .sum::<f64>()
            / n
    }

    pub fn poses(&self) -> Vec<PoseSE3> {
        self.views.iter().map(|v| v.pose).collect()
    }

    pub fn camera_center(&self, view: usize) -> Point3 {
        self.views[view].pose.translation
    }
}

/// World-frame direction of pixel `u`, scaled so that its camera-frame z is 1.
pub fn pixel_direction(k: &CameraIntrinsics, pose: &PoseSE3, u: Pixel) -> Vector3<f64> {
    pose.rotation * k.ray(u)
}

/// Renders exact z-depth and primitive ids by casting one ray per pixel center.
pub fn render(world: &World, k: &CameraIntrinsics, pose: &PoseSE3) -> Result<(DepthMap, Vec<usize>)> {
    let mut depth = Vec::with_capacity(k.width * k.height);
    let mut ids = Vec::with_capacity(k.width * k.height);
    for r in 0..k.height {
        for c in 0..k.width {
            let dir = pixel_direction(k, pose, Pixel::new(c as f64, r as f64));
            let hit = world.raycast(&pose.translation, &dir).ok_or_else(|| {
                Error::Degenerate(format!("pixel ({c}, {r}) sees no surface"))
            })?;
            depth.push(hit.t);
            ids.push(hit.primitive);
        }
    }
    Ok((DepthMap::new(k.width, k.height, depth)?, ids))
}

/// Camera-to-world rotation looking along `forward` with image rows pointing roughly down (+y).
pub fn look_rotation(forward: &Vector3<f64>, roll: f64) -> Matrix3<f64> {
    let z = forward.normalize();
    let x = Vector3::new(0.0, 1.0, 0.0).cross(&z).normalize();
    let y = z.cross(&x);
    let base = Matrix3::from_columns(&[x, y, z]);
    base * so3_exp(&Vector3::new(0.0, 0.0, roll))
}

const MAX_LAYOUT_ATTEMPTS: usize = 32;

/// Builds a seeded world and renders `view_count` cameras of `width x height` pixels.
///
/// The room is a box whose back wall, floor, ceiling and side walls are always present, plus an
/// optional slanted panel and 1 to 3 spheres. Cameras sweep an arc of 10 to 30 degrees in front
/// of the room, looking inward.
pub fn generate_scene(view_count: usize, width: usize, height: usize, seed: u64) -> Result<GroundTruthScene> {
    if view_count < 2 {
        return Err(Error::Domain(format!("need at least 2 views, got {view_count}")));
    }
    if width < 2 || height < 2 {
        return Err(Error::Domain("image must be at least 2x2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let attempt_seed = rng.gen();
        if let Some(scene) = try_layout(view_count, width, height, attempt_seed)? {
            return Ok(scene);
        }
    }
    Err(Error::Degenerate(format!(
        "no valid layout after {MAX_LAYOUT_ATTEMPTS} attempts"
    )))
}

fn try_layout(view_count: usize, width: usize, height: usize, seed: u64) -> Result<Option<GroundTruthScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min = Vector3::new(-4.0, -3.0, -4.0);
    let max = Vector3::new(4.0, 3.0, 8.0);

    let wall = |normal: Vector3<f64>, offset: f64| Primitive::Plane {
        normal,
        offset,
        panel: None,
    };
    let mut primitives = vec![
        wall(Vector3::z(), max.z),
        wall(Vector3::y(), max.y),
        wall(Vector3::y(), min.y),
        wall(Vector3::x(), min.x),
        wall(Vector3::x(), max.x),
    ];
    if rng.gen_bool(0.5) {
        let normal = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3), -1.0).normalize();
        let center = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(5.0..6.5));
        let a0 = Vector3::y().cross(&normal).normalize();
        let a1 = normal.cross(&a0);
        primitives.push(Primitive::Plane {
            normal,
            offset: normal.dot(&center),
            panel: Some(Panel {
                center,
                axes: [a0, a1],
                half: [rng.gen_range(1.0..2.0), rng.gen_range(0.8..1.5)],
            }),
        });
    }
    for _ in 0..rng.gen_range(1..=3) {
        primitives.push(Primitive::Sphere {
            center: Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.2..1.2), rng.gen_range(2.5..5.0)),
            radius: rng.gen_range(0.5..1.1),
        });
    }
    let world = World { primitives, min, max };

    let target = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3), rng.gen_range(3.0..4.0));
    let radius = rng.gen_range(5.0..6.5);
    let sweep = rng.gen_range(10.0f64..30.0).to_radians();
    let start = rng.gen_range(-0.2..0.2) - 0.5 * sweep;
    let bob = rng.gen_range(0.0..0.3);
    let roll_amp = rng.gen_range(0.0..0.05);
    let fov = rng.gen_range(50.0f64..65.0).to_radians();
    let focal = 0.5 * width as f64 / (0.5 * fov).tan();
    let k = CameraIntrinsics::new(
        focal,
        focal,
        (width as f64 - 1.0) * 0.5,
        (height as f64 - 1.0) * 0.5,
        width,
        height,
    )?;

    let mut views = Vec::with_capacity(view_count);
    for i in 0..view_count {
        let s = i as f64 / (view_count - 1) as f64;
        let phi = start + sweep * s;
        let center = target
            + Vector3::new(radius * phi.sin(), bob * (std::f64::consts::PI * s).sin() - 0.3, -radius * phi.cos());
        let inside_box = (0..3).all(|a| center[a] > min[a] + 0.2 && center[a] < max[a] - 0.2);
        if !inside_box || world.primitives.iter().any(|p| p.contains(&center)) {
            return Ok(None);
        }
        let look_at = target + Vector3::new(0.3 * (3.0 * s).sin(), 0.0, 0.0);
        let rotation = look_rotation(&(look_at - center), roll_amp * (2.0 * std::f64::consts::PI * s).sin());
        let pose = PoseSE3::new(rotation, center)?;
        let (depth, primitive_ids) = match render(&world, &k, &pose) {
            Ok(r) => r,
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        // Cameras must not sit almost on a surface.
        if depth.values.iter().any(|d| *d < 0.3) {
            return Ok(None);
        }
        views.push(GroundTruthView {
            intrinsics: k,
            pose,
            depth,
            primitive_ids,
        });
    }
    Ok(Some(GroundTruthScene { views, world }))
}
