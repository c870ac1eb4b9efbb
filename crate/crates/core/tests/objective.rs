use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relieve::geometry::{so3_exp, PoseSE3};
use relieve::losses::{finite_difference_check, registration_loss, total_loss};
use relieve::sim::{random_instance, RandomInstanceSpec};
use relieve::{Problem, SceneState};

fn instance(seed: u64) -> (Problem, SceneState) {
    let views = 2 + (seed % 3) as usize;
    random_instance(
        RandomInstanceSpec {
            views,
            ..RandomInstanceSpec::default()
        },
        seed,
    )
}

fn random_rigid(rng: &mut ChaCha8Rng) -> PoseSE3 {
    let w = nalgebra::Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
    let t = nalgebra::Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
    PoseSE3 {
        rotation: so3_exp(&w),
        translation: t,
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1e-300)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..30 {
        let (p, s) = instance(seed);
        let err = finite_difference_check(&s, &p, &p.hyperparams, 60, 1e-6, seed).unwrap();
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn gradient_error_shrinks_with_the_step() {
    // truncation dominates down to 1e-5; below that rounding of the loss takes over
    let (p, s) = instance(1);
    let err = |h: f64| finite_difference_check(&s, &p, &p.hyperparams, 40, h, 9).unwrap();
    let (e3, e4, e5, e6) = (err(1e-3), err(1e-4), err(1e-5), err(1e-6));
    assert!(e3 >= e4 && e4 >= e5, "{e3} {e4} {e5}");
    assert!(e6 < 1e-9, "{e6}");
}

#[test]
fn total_is_depth_plus_weighted_registration() {
    for seed in 0..10 {
        let (p, s) = instance(seed);
        let b = total_loss(&s, &p, &p.hyperparams).unwrap();
        assert!((b.total - (b.depth_term + p.hyperparams.lambda * b.registration_term)).abs() <= 1e-12);
        assert!(b.registration_term >= 0.0);
        let reg = registration_loss(&s, &p, p.hyperparams.angle_eps).unwrap();
        assert_eq!(reg.loss, b.registration_term);
    }
}

#[test]
fn loss_is_invariant_to_rigid_and_scale_gauge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..20 {
        let (p, s) = instance(k);
        let base = total_loss(&s, &p, &p.hyperparams).unwrap().total;

        let g = random_rigid(&mut rng);
        let mut moved = s.clone();
        moved.views.iter_mut().for_each(|v| v.pose = g.compose(&v.pose));
        let rigid = total_loss(&moved, &p, &p.hyperparams).unwrap().total;
        assert!(relative_change(base, rigid) < 1e-9, "rigid {base} vs {rigid}");

        let scale: f64 = rng.gen_range(0.1..10.0);
        let mut scaled = s.clone();
        scaled.views.iter_mut().for_each(|v| {
            v.log_scale += scale.ln();
            v.pose.translation *= scale;
        });
        let sc = total_loss(&scaled, &p, &p.hyperparams).unwrap().total;
        assert!(relative_change(base, sc) < 1e-9, "scale {base} vs {sc}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn global_rotation_leaves_registration_unchanged(seed in 0u64..1000, w in prop::array::uniform3(-3.0f64..3.0)) {
        let (p, s) = instance(seed);
        let r = so3_exp(&nalgebra::Vector3::from(w));
        let base = registration_loss(&s, &p, p.hyperparams.angle_eps).unwrap().loss;
        let mut rotated = s.clone();
        rotated.views.iter_mut().for_each(|v| {
            v.pose.rotation = r * v.pose.rotation;
            v.pose.translation = r * v.pose.translation;
        });
        let after = registration_loss(&rotated, &p, p.hyperparams.angle_eps).unwrap().loss;
        prop_assert!((base - after).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn pose_gradient_of_view_pairs_sums_to_zero_under_joint_rotation(seed in 0u64..1000) {
        // the loss is invariant to a common left perturbation, so the rotation rows cancel
        let (p, s) = instance(seed);
        let b = total_loss(&s, &p, &p.hyperparams).unwrap();
        let layout = s.layout();
        for axis in 0..3 {
            let sum: f64 = (0..s.views.len()).map(|i| b.gradient[layout.pose(i) + axis]).sum();
            prop_assert!(sum.abs() < 1e-9, "axis {} sum {}", axis, sum);
        }
    }
}
