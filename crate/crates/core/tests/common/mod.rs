//! Independent reference implementations shared by the metric tests and the acceptance suite.
#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use relieve::geometry::{so3_exp, Point3, PoseSE3};
use relieve::metrics::Sim3;

pub fn random_vector(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
}

pub fn random_pose(rng: &mut ChaCha8Rng) -> PoseSE3 {
    PoseSE3 {
        rotation: so3_exp(&random_vector(rng, 1.5)),
        translation: random_vector(rng, 3.0),
    }
}

pub fn random_sim3(rng: &mut ChaCha8Rng) -> Sim3 {
    Sim3 {
        scale: rng.gen_range(0.2..5.0),
        rotation: so3_exp(&random_vector(rng, 2.0)),
        translation: random_vector(rng, 10.0),
    }
}

/// Similarity alignment through the unit quaternion of the largest eigenvalue of the 4x4
/// cross-covariance form, followed by the least-squares scale for that rotation.
pub fn horn_align(src: &[Point3], dst: &[Point3]) -> Sim3 {
    let n = src.len() as f64;
    let (ms, md) = (src.iter().sum::<Vector3<f64>>() / n, dst.iter().sum::<Vector3<f64>>() / n);
    let mut s = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        s += (a - ms) * (b - md).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let k = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(k);
    let rotation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner();
    let num: f64 = src.iter().zip(dst).map(|(a, b)| (b - md).dot(&(rotation * (a - ms)))).sum();
    let den: f64 = src.iter().map(|a| (a - ms).norm_squared()).sum();
    let scale = num / den;
    Sim3 {
        scale,
        rotation,
        translation: md - rotation * ms * scale,
    }
}

pub fn oracle_ate(est: &[PoseSE3], gt: &[PoseSE3]) -> f64 {
    let src: Vec<Point3> = est.iter().map(|p| p.translation).collect();
    let dst: Vec<Point3> = gt.iter().map(|p| p.translation).collect();
    let sim = horn_align(&src, &dst);
    let n = dst.len() as f64;
    let rmse = (src.iter().zip(&dst).map(|(a, b)| (sim.apply(a) - b).norm_squared()).sum::<f64>() / n).sqrt();
    let c = dst.iter().sum::<Vector3<f64>>() / n;
    let spread = (dst.iter().map(|d| (d - c).norm_squared()).sum::<f64>() / n).sqrt();
    rmse / spread
}

/// Area under the empirical accuracy curve accumulated cell by cell over a uniform grid.
///
/// Inside a cell `[lo, hi]` the curve only steps up at error values, so each error adds
/// `clamp(hi - max(lo, e), 0, step)` exactly; no sampling error is introduced.
pub fn auc_grid_reference(errors: &[f64], threshold: f64, step: f64) -> f64 {
    let cells = (threshold / step).round() as usize;
    let mut area = 0.0;
    for k in 0..cells {
        let lo = k as f64 * step;
        let hi = if k + 1 == cells { threshold } else { lo + step };
        let cell: f64 = errors.iter().map(|&e| (hi - lo.max(e)).clamp(0.0, hi - lo)).sum();
        area += cell / errors.len() as f64;
    }
    100.0 * area / threshold
}

/// Relative rotation angle through quaternions and translation-direction angle through the
/// clamped arccosine, both in degrees, for every unordered view pair.
pub fn pair_errors_reference(est: &[PoseSE3], gt: &[PoseSE3]) -> Vec<f64> {
    let rel = |a: &PoseSE3, b: &PoseSE3| {
        let (qa, qb) = (a.quaternion(), b.quaternion());
        (qa.inverse() * qb, qa.inverse() * (b.translation - a.translation))
    };
    let mut out = Vec::new();
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let (qe, te) = rel(&est[i], &est[j]);
            let (qg, tg) = rel(&gt[i], &gt[j]);
            let d = qe.inverse() * qg;
            let rot = 2.0 * d.imag().norm().atan2(d.w.abs());
            let cos = (te.dot(&tg) / (te.norm() * tg.norm())).clamp(-1.0, 1.0);
            out.push(rot.to_degrees().max(cos.acos().to_degrees()));
        }
    }
    out
}
