//! End-to-end solver behavior on synthetic single-object scenes.
//!
//! Decoders are unit-scale (normalized model coordinates); the metric size
//! lives in the Sim(3) pose scale, matching how latent shape priors are
//! trained on normalized shapes.

use nalgebra::DVector;
use objslam_core::lie::{exp_sim3, exp_so3, PoseSim3, TwistSim3, Vec3};
use objslam_core::prior::{DecoderSpec, ShapeCode};
use objslam_core::render::Camera;
use objslam_core::residuals::Detection;
use objslam_core::simkit::{
    self, look_at, make_frames, InitMode, NoiseSpec, ObjectSpec, SceneSpec,
};
use objslam_core::solver::{
    first_order_baseline, fit_object, hessian_block_norms, pose_only_optimize, FitConfig,
};

const GT_SCALE: f64 = 0.25;

fn camera() -> Camera {
    Camera { fx: 300.0, fy: 300.0, cx: 80.0, cy: 60.0, width: 160, height: 120 }
}

fn car_like_scene(noise: NoiseSpec, n_points: usize, seed: u64) -> SceneSpec {
    let decoder = DecoderSpec::rounded_box(Vec3::new(0.96, 0.36, 0.44), 0.1, 8, 7);
    let world_pose = PoseSim3 {
        rotation: exp_so3(&Vec3::new(0.0, 0.5, 0.0)),
        translation: Vec3::new(0.05, -0.02, 0.0),
        scale: GT_SCALE,
    };
    let code = ShapeCode::from_fn(8, |i, _| 0.25 * ((i % 3) as f64 - 1.0));
    SceneSpec {
        camera: camera(),
        objects: vec![ObjectSpec { code, world_pose, decoder }],
        trajectory: vec![look_at(Vec3::new(0.6, 0.45, -1.6), Vec3::new(0.05, -0.02, 0.0))],
        noise,
        seed,
        n_surface_points: n_points,
        n_landmarks: 0,
        n_object_features: 0,
        surface_sample_shrink: 1.0,
        init_mode: InitMode::GroundTruth,
        rotation_prior: false,
    }
}

fn first_detection(scene: &SceneSpec) -> (Detection, PoseSim3) {
    let frames = make_frames(scene).unwrap();
    let det = frames[0].detections[0].clone();
    let gt_obj_to_cam = frames[0]
        .gt_camera
        .inverse()
        .to_sim3()
        .compose(&scene.objects[0].world_pose);
    (det, gt_obj_to_cam)
}

fn pose_errors(est: &PoseSim3, gt: &PoseSim3) -> (f64, f64, f64) {
    let trans = (est.translation - gt.translation).norm();
    let rel = est.rotation.transpose() * gt.rotation;
    let angle = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos();
    let scale = (est.scale / gt.scale - 1.0).abs();
    (trans, angle, scale)
}

#[test]
fn zero_residual_start_converges_immediately() {
    // Ground-truth init, zero ground-truth code, surface + code prior only:
    // the start is exactly the optimum.
    let mut scene = car_like_scene(NoiseSpec::zero(), 120, 1);
    scene.objects[0].code = ShapeCode::zeros(8);
    let (det, gt) = first_detection(&scene);
    let cfg = FitConfig { lambda_r: 0.0, ..FitConfig::default() };
    let result = fit_object(&det, &scene.camera, &scene.objects[0].decoder, &cfg).unwrap();
    assert!(result.converged);
    assert!(result.iterations.len() <= 2, "took {} iterations", result.iterations.len());
    let (t, r, s) = pose_errors(&result.obj_to_cam, &gt);
    assert!(t < 1e-6 && r < 1e-6 && s < 1e-6, "t {t:.2e} r {r:.2e} s {s:.2e}");
}

#[test]
fn full_energy_gt_start_stays_near_gt() {
    // With the rendering term the soft silhouette shifts the optimum by a
    // discretization-scale amount; the fit must stay within tight bounds.
    let mut scene = car_like_scene(NoiseSpec::zero(), 120, 1);
    scene.objects[0].code = ShapeCode::zeros(8);
    let (det, gt) = first_detection(&scene);
    let cfg = FitConfig::default();
    let result = fit_object(&det, &scene.camera, &scene.objects[0].decoder, &cfg).unwrap();
    let (t, r, s) = pose_errors(&result.obj_to_cam, &gt);
    let depth = gt.translation.norm();
    assert!(t / depth < 0.01, "translation drift {:.2}%", 100.0 * t / depth);
    assert!(r.to_degrees() < 1.0, "rotation drift {:.2} deg", r.to_degrees());
    assert!(s < 0.03, "scale drift {:.2}%", 100.0 * s);
}

#[test]
fn perturbed_init_recovers_pose_and_shape() {
    let scene = car_like_scene(NoiseSpec::zero(), 250, 2);
    let (mut det, gt) = first_detection(&scene);
    // 10 degree rotation, ~10% of object distance translation, 10% scale.
    let perturb = TwistSim3 {
        nu: Vec3::new(0.06, -0.08, 0.12),
        phi: Vec3::new(0.05, 0.16, -0.05),
        sigma: 0.0953,
    };
    det.init_obj_to_cam = exp_sim3(&perturb).compose(&det.init_obj_to_cam);
    let cfg = FitConfig { max_iters: 10, ..FitConfig::default() };
    let result = fit_object(&det, &scene.camera, &scene.objects[0].decoder, &cfg).unwrap();
    let (t, r, s) = pose_errors(&result.obj_to_cam, &gt);
    let depth = gt.translation.norm();
    assert!(t / depth <= 0.01, "translation error {:.4} ({:.2}%)", t, 100.0 * t / depth);
    assert!(r.to_degrees() <= 1.0, "rotation error {:.3} deg", r.to_degrees());
    assert!(s <= 0.05, "scale error {:.2}%", s * 100.0);
    // Energy is non-increasing across accepted steps.
    for it in &result.iterations {
        assert!(it.energy_after <= it.energy_before + 1e-12);
    }
}

#[test]
fn pose_only_keeps_scale_bits_and_refines() {
    let scene = car_like_scene(NoiseSpec::zero(), 150, 3);
    let (det, gt) = first_detection(&scene);
    let code = scene.objects[0].code.clone();
    let cfg = FitConfig::default();

    // Ground-truth start: zero step.
    let res = pose_only_optimize(&det, &gt, &code, &scene.objects[0].decoder, &scene.camera, &cfg)
        .unwrap();
    let (t, r, _) = pose_errors(&res.obj_to_cam, &gt);
    assert!(t < 1e-9 && r < 1e-9, "t {t:.2e} r {r:.2e}");

    // Rigid perturbation with a deliberately wrong frozen scale.
    let wrong_scale = PoseSim3 { scale: gt.scale * 1.17, ..gt };
    let perturb = TwistSim3 {
        nu: Vec3::new(-0.05, 0.04, 0.06),
        phi: Vec3::new(0.03, -0.08, 0.02),
        sigma: 0.0,
    };
    let init = exp_sim3(&perturb).compose(&wrong_scale);
    let res =
        pose_only_optimize(&det, &init, &code, &scene.objects[0].decoder, &scene.camera, &cfg)
            .unwrap();
    // Scale column excluded: bit-identical scale by construction.
    assert_eq!(res.obj_to_cam.scale.to_bits(), init.scale.to_bits());
    // The rigid part still improves even though the frozen scale is wrong.
    let init_cost = pose_only_optimize(
        &det,
        &init,
        &code,
        &scene.objects[0].decoder,
        &scene.camera,
        &FitConfig { pose_only_iters: 0, ..cfg },
    )
    .unwrap()
    .final_cost;
    assert!(res.final_cost < init_cost);
}

#[test]
fn pose_only_recovers_exact_pose_with_correct_scale() {
    let scene = car_like_scene(NoiseSpec::zero(), 150, 4);
    let (det, gt) = first_detection(&scene);
    let code = scene.objects[0].code.clone();
    let cfg = FitConfig { pose_only_iters: 15, ..FitConfig::default() };
    let perturb = TwistSim3 {
        nu: Vec3::new(-0.05, 0.04, 0.06),
        phi: Vec3::new(0.03, -0.08, 0.02),
        sigma: 0.0,
    };
    let init = exp_sim3(&perturb).compose(&gt);
    let res =
        pose_only_optimize(&det, &init, &code, &scene.objects[0].decoder, &scene.camera, &cfg)
            .unwrap();
    let (t, r, _) = pose_errors(&res.obj_to_cam, &gt);
    let depth = gt.translation.norm();
    assert!(t / depth <= 0.005, "translation error {:.3}%", 100.0 * t / depth);
    assert!(r.to_degrees() <= 0.5, "rotation error {:.3} deg", r.to_degrees());
}

#[test]
fn first_order_baseline_descends_and_converges_at_optimum() {
    let mut scene = car_like_scene(NoiseSpec::zero(), 120, 5);
    scene.objects[0].code = ShapeCode::zeros(8);
    let (det, _) = first_detection(&scene);
    // Surface + prior only, pinned silhouette sample: the start is exact.
    let cfg = FitConfig { lambda_r: 0.0, resample_bbox_pixels: false, ..FitConfig::default() };

    // Zero-residual start: immediate convergence.
    let res =
        first_order_baseline(&det, &scene.camera, &scene.objects[0].decoder, &cfg, 50, None)
            .unwrap();
    assert!(res.energy_trace[0] < 1e-10, "initial energy {:.3e}", res.energy_trace[0]);
    assert!(res.energy_trace.len() <= 3);

    // Perturbed start: energy decreases monotonically for a small step, and
    // halving the step keeps it decreasing (step-halving oracle).
    let mut det2 = det.clone();
    det2.init_obj_to_cam = exp_sim3(&TwistSim3 {
        nu: Vec3::new(0.02, -0.02, 0.03),
        phi: Vec3::new(0.02, 0.05, -0.02),
        sigma: 0.03,
    })
    .compose(&det2.init_obj_to_cam);
    let full = FitConfig { resample_bbox_pixels: false, ..FitConfig::default() };
    for step in [full.first_order_step, full.first_order_step * 0.5] {
        let cfg2 = FitConfig { first_order_step: step, ..full };
        let res =
            first_order_baseline(&det2, &scene.camera, &scene.objects[0].decoder, &cfg2, 30, None)
                .unwrap();
        for w in res.energy_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9),
                "energy increased at step {step}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn hessian_blocks_within_two_orders_of_magnitude() {
    // Weight sanity smoke test at the initial state of the car-like scene.
    let scene = car_like_scene(NoiseSpec::zero(), 250, 6);
    let (mut det, _) = first_detection(&scene);
    det.init_obj_to_cam = exp_sim3(&TwistSim3 {
        nu: Vec3::new(0.03, -0.02, 0.05),
        phi: Vec3::new(0.04, 0.1, -0.03),
        sigma: 0.05,
    })
    .compose(&det.init_obj_to_cam);
    let cfg = FitConfig::default();
    let cam_to_obj = det.init_obj_to_cam.inverse();
    let (s, r, c) = hessian_block_norms(
        &det,
        &cam_to_obj,
        &ShapeCode::zeros(8),
        &scene.objects[0].decoder,
        &scene.camera,
        &cfg,
    )
    .unwrap();
    for (a, b) in [(s, r), (s, c), (r, c)] {
        let ratio = a.max(b) / a.min(b).max(1e-300);
        assert!(ratio <= 100.0, "hessian block ratio {ratio:.1} (s={s:.2e} r={r:.2e} c={c:.2e})");
    }
}

#[test]
fn missing_rays_contribute_exact_zeros() {
    // Bbox rays that miss the object have exactly zero rendering residual
    // and an exactly zero Jacobian row; dropping them changes nothing in the
    // normal equations when the silhouette is satisfied.
    let mut scene = car_like_scene(NoiseSpec::zero(), 100, 7);
    scene.objects[0].code = ShapeCode::zeros(8);
    let (det, gt) = first_detection(&scene);
    let cfg = FitConfig::default();
    let cam_to_obj = gt.inverse();
    let code = ShapeCode::zeros(8);
    let spec = &scene.objects[0].decoder;
    let range =
        objslam_core::render::depth_range(&gt, spec, cfg.near_plane).unwrap();
    let d_escape = 1.1 * range.1;

    let mut rng = rand::SeedableRng::seed_from_u64(33);
    let omega_b = objslam_core::solver::sample_bbox_pixels(&det, 200, &mut rng);
    let mut misses = 0;
    for &pixel in &omega_b {
        let bundle = objslam_core::render::trace_ray_with_range(
            &scene.camera, pixel, &cam_to_obj, &code, spec, cfg.samples, cfg.sigma, range,
        );
        if bundle.occ.iter().all(|&o| o == 0.0) {
            misses += 1;
            let out = objslam_core::residuals::render_residual_jacobian(
                pixel, d_escape, &cam_to_obj, &code, spec, &scene.camera, cfg.samples, cfg.sigma,
                range, true,
            );
            assert_eq!(out.residual.to_bits(), 0f64.to_bits());
            assert!(out.row.iter().all(|&v| v == 0.0));
            assert_eq!(out.decoder_grad_evals, 0);
        }
    }
    assert!(misses > 100, "expected mostly missing rays, got {misses}");
}

#[test]
fn fit_is_deterministic() {
    let scene = car_like_scene(
        NoiseSpec { depth_sigma: 0.004, pixel_sigma: 0.3, odom_sigma: 0.0 },
        120,
        8,
    );
    let (mut det, _) = first_detection(&scene);
    det.init_obj_to_cam = exp_sim3(&TwistSim3 {
        nu: Vec3::new(0.02, 0.01, -0.04),
        phi: Vec3::new(-0.03, 0.09, 0.02),
        sigma: -0.04,
    })
    .compose(&det.init_obj_to_cam);
    let cfg = FitConfig::default();
    let spec = &scene.objects[0].decoder;
    let a = fit_object(&det, &scene.camera, spec, &cfg).unwrap();
    let b = fit_object(&det, &scene.camera, spec, &cfg).unwrap();
    assert_eq!(a.obj_to_cam.scale.to_bits(), b.obj_to_cam.scale.to_bits());
    for i in 0..3 {
        assert_eq!(
            a.obj_to_cam.translation[i].to_bits(),
            b.obj_to_cam.translation[i].to_bits()
        );
        for j in 0..3 {
            assert_eq!(
                a.obj_to_cam.rotation[(i, j)].to_bits(),
                b.obj_to_cam.rotation[(i, j)].to_bits()
            );
        }
    }
    assert_eq!(
        DVector::from(a.code.clone()).as_slice(),
        DVector::from(b.code.clone()).as_slice()
    );
    let ta: Vec<u64> = a.energy_trace().iter().map(|e| e.to_bits()).collect();
    let tb: Vec<u64> = b.energy_trace().iter().map(|e| e.to_bits()).collect();
    assert_eq!(ta, tb);
}

#[test]
fn simkit_pca_init_is_good_enough_for_fit() {
    let mut scene = car_like_scene(NoiseSpec::zero(), 250, 9);
    scene.init_mode = InitMode::Pca;
    scene.objects[0].code = ShapeCode::zeros(8);
    let frames = make_frames(&scene).unwrap();
    let det = frames[0].detections[0].clone();
    let gt = frames[0].gt_camera.inverse().to_sim3().compose(&scene.objects[0].world_pose);
    let cfg = FitConfig { max_iters: 30, convergence_tol: 1e-10, ..FitConfig::default() };
    let spec = &scene.objects[0].decoder;
    let inits = [det.init_obj_to_cam, simkit::yaw_flipped(&det.init_obj_to_cam)];
    let result = objslam_core::solver::fit_best_of(&det, &inits, &scene.camera, spec, &cfg)
        .unwrap();
    // Compare modulo the family's symmetry rotations.
    let mut best_rot = f64::INFINITY;
    for sym in spec.symmetry_rotations() {
        let rel = (result.obj_to_cam.rotation * sym).transpose() * gt.rotation;
        let angle = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos();
        best_rot = best_rot.min(angle);
    }
    let t = (result.obj_to_cam.translation - gt.translation).norm();
    let s = (result.obj_to_cam.scale / gt.scale - 1.0).abs();
    assert!(t < 0.02, "translation error {t}");
    assert!(best_rot.to_degrees() < 2.0, "rotation error {} deg", best_rot.to_degrees());
    assert!(s < 0.05, "scale error {s}");
}
