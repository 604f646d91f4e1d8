use objslam_core::lie::{PoseSim3, Vec3, exp_so3};
use objslam_core::prior::{DecoderSpec, ShapeCode, decode_sdf};
use objslam_core::render::Camera;
use objslam_core::simkit::{look_at, make_frames, InitMode, NoiseSpec, ObjectSpec, SceneSpec};
use objslam_core::solver::{fit_object, FitConfig};

fn main() {
    let camera = Camera { fx: 300.0, fy: 300.0, cx: 80.0, cy: 60.0, width: 160, height: 120 };
    let decoder = DecoderSpec::rounded_box(Vec3::new(0.96, 0.36, 0.44), 0.1, 8, 7);
    let world_pose = PoseSim3 {
        rotation: exp_so3(&Vec3::new(0.0, 0.5, 0.0)),
        translation: Vec3::new(0.05, -0.02, 0.0),
        scale: 0.25,
    };
    let scene = SceneSpec {
        camera,
        objects: vec![ObjectSpec { code: ShapeCode::zeros(8), world_pose, decoder }],
        trajectory: vec![look_at(Vec3::new(0.6, 0.45, -1.6), Vec3::new(0.05, -0.02, 0.0))],
        noise: NoiseSpec::zero(),
        seed: 1,
        n_surface_points: 120,
        n_landmarks: 0,
        n_object_features: 0,
        surface_sample_shrink: 1.0,
        init_mode: InitMode::GroundTruth,
        rotation_prior: false,
    };
    let frames = make_frames(&scene).unwrap();
    let det = frames[0].detections[0].clone();
    let gt = frames[0].gt_camera.inverse().to_sim3().compose(&scene.objects[0].world_pose);
    let cam_to_obj = gt.inverse();
    // residual stats at GT
    let mut max_r: f64 = 0.0;
    for p in &det.surface_points {
        let pc = scene.camera.back_project(p.pixel.0, p.pixel.1, p.depth);
        let s = decode_sdf(&cam_to_obj.transform_point(&pc), &scene.objects[0].code, &scene.objects[0].decoder);
        max_r = max_r.max(s.abs());
    }
    println!("max |G| at GT over samples: {max_r:.3e}");
    let cfg = FitConfig { lambda_r: 0.0, ..FitConfig::default() };
    let result = fit_object(&det, &scene.camera, &scene.objects[0].decoder, &cfg).unwrap();
    for (i, it) in result.iterations.iter().enumerate() {
        println!("iter {i}: before {:.6e} after {:.6e} step {:.3e} esc {}", it.energy_before, it.energy_after, it.step_norm, it.damping_escalations);
    }
    println!("t err {:.3e}", (result.obj_to_cam.translation - gt.translation).norm());
    println!("s err {:.3e}", (result.obj_to_cam.scale/0.25 - 1.0).abs());
}
