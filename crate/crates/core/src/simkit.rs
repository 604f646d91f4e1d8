//! Synthetic scene generator and oracle provider.
//!
//! Scenes with known object codes and poses, a camera trajectory, sparse
//! surface samples obtained by sphere tracing the decoded SDF, rendered
//! ground-truth masks/boxes, tracked object feature ids, background
//! landmarks, and odometry increments with tangent-space Gaussian noise.
//! All output is a pure function of the scene spec and its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::lie::{exp_se3, Mat3, PoseSE3, PoseSim3, Vec3, Vec6};
use crate::prior::{decode_gradients, decode_sdf, DecoderSpec, ShapeCode};
use crate::render::{depth_range, Camera};
use crate::residuals::{Detection, Mask, SurfacePoint};
use crate::{Error, Result};

/// Sphere-tracing step cap and world-space surface tolerance.
const TRACE_MAX_STEPS: usize = 128;
const TRACE_TOLERANCE: f64 = 1e-6;
/// Near plane used by the ground-truth ray caster.
const TRACE_NEAR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    /// Gaussian depth noise on surface samples and landmark depths (m).
    pub depth_sigma: f64,
    /// Gaussian pixel noise on stored pixel coordinates.
    pub pixel_sigma: f64,
    /// Per-axis tangent-space odometry noise (applies to all six twist axes).
    pub odom_sigma: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec { depth_sigma: 0.0, pixel_sigma: 0.0, odom_sigma: 0.0 }
    }
}

/// How the simulated detector initializes object poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Principal-component analysis of the detection's own sparse points.
    Pca,
    /// The exact pose (a perfect detector; meaningful for zero-noise runs).
    GroundTruth,
}

#[derive(Debug, Clone)]
pub struct ObjectSpec {
    pub code: ShapeCode,
    /// Object pose in the world frame (world <- object), with scale.
    pub world_pose: PoseSim3,
    pub decoder: DecoderSpec,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub camera: Camera,
    pub objects: Vec<ObjectSpec>,
    /// Camera poses in the world frame (world <- camera).
    pub trajectory: Vec<PoseSE3>,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Surface samples requested per detection.
    pub n_surface_points: usize,
    /// Background landmarks scattered around the scene.
    pub n_landmarks: usize,
    /// Tracked feature points generated on each object's surface.
    pub n_object_features: usize,
    /// Fraction of the mask bounding box (centered) eligible for surface
    /// sampling; 1.0 samples the whole mask.
    pub surface_sample_shrink: f64,
    pub init_mode: InitMode,
    /// Attach the camera-frame ground normal to detections.
    pub rotation_prior: bool,
}

/// One landmark sighting: pixel measurement plus a depth used only to
/// initialize the landmark position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkObservation {
    pub id: usize,
    pub pixel: (f64, f64),
    pub depth: f64,
}

#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub camera_id: usize,
    pub detections: Vec<Detection>,
    /// Noisy relative pose from the previous camera (identity for frame 0).
    pub odometry: PoseSE3,
    pub landmark_obs: Vec<LandmarkObservation>,
    /// Ground-truth camera pose; for metrics only.
    pub gt_camera: PoseSE3,
}

/// Mix a base seed with stream identifiers into an independent stream seed.
pub fn derive_seed(base: u64, a: u64, b: u64, tag: u64) -> u64 {
    let mut x = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(a.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(b.wrapping_mul(0x94d0_49bb_1331_11eb))
        .wrapping_add(tag);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x
}

/// First-hit depth of a pixel ray against a decoded shape, by sphere
/// tracing with the decoder's conservative distance bound.
pub fn sphere_trace(
    camera: &Camera,
    pixel: (f64, f64),
    obj_to_cam: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
) -> Option<f64> {
    let (d_min, d_max) = depth_range(obj_to_cam, spec, TRACE_NEAR).ok()?;
    let dir = camera.ray_direction(pixel.0, pixel.1);
    let dir_norm = dir.norm();
    let cam_to_obj = obj_to_cam.inverse();
    let mut d = d_min;
    for _ in 0..TRACE_MAX_STEPS {
        if d > d_max {
            return None;
        }
        let p_obj = cam_to_obj.transform_point(&(dir * d));
        let s_world = decode_sdf(&p_obj, code, spec) * obj_to_cam.scale;
        if s_world < TRACE_TOLERANCE {
            // A few extra conservative steps sharpen the hit well past the
            // tolerance; the march cannot overshoot a distance bound.
            for _ in 0..3 {
                let p_obj = cam_to_obj.transform_point(&(dir * d));
                let s = decode_sdf(&p_obj, code, spec) * obj_to_cam.scale;
                d += s / dir_norm;
            }
            return Some(d);
        }
        d += s_world / dir_norm;
    }
    None
}

/// Ground-truth render of one object: per-pixel first-hit depths, the hit
/// mask and its tight bounding box.
#[derive(Debug, Clone)]
pub struct GtRender {
    pub mask: Mask,
    /// `[u_min, v_min, u_max, v_max)`; all zeros when the mask is empty.
    pub bbox: [usize; 4],
    /// First-hit depth per mask pixel in scan order.
    pub depths: Vec<f64>,
}

impl GtRender {
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

pub fn render_gt(
    object: &ObjectSpec,
    camera_pose: &PoseSE3,
    camera: &Camera,
) -> Result<GtRender> {
    let obj_to_cam = camera_pose.inverse().to_sim3().compose(&object.world_pose);
    let center = obj_to_cam.translation;
    let reach = obj_to_cam.scale * object.decoder.bounding_radius();
    let empty = GtRender {
        mask: Mask::from_bitmap(0, 0, 0, 0, &[]),
        bbox: [0; 4],
        depths: Vec::new(),
    };
    if center.z + reach <= TRACE_NEAR {
        return Ok(empty);
    }
    // Conservative pixel rectangle from the projected bounding sphere.
    let z_near = (center.z - reach).max(TRACE_NEAR);
    let cu = camera.fx * center.x / center.z.max(TRACE_NEAR) + camera.cx;
    let cv = camera.fy * center.y / center.z.max(TRACE_NEAR) + camera.cy;
    let half_u = camera.fx * reach / z_near + 2.0;
    let half_v = camera.fy * reach / z_near + 2.0;
    let u0 = ((cu - half_u).floor().max(0.0)) as usize;
    let v0 = ((cv - half_v).floor().max(0.0)) as usize;
    let u1 = ((cu + half_u).ceil().min(camera.width as f64)) as usize;
    let v1 = ((cv + half_v).ceil().min(camera.height as f64)) as usize;
    if u0 >= u1 || v0 >= v1 {
        return Ok(empty);
    }

    let (w, h) = (u1 - u0, v1 - v0);
    let mut inside = vec![false; w * h];
    let mut depths = Vec::new();
    for v in v0..v1 {
        for u in u0..u1 {
            let pixel = (u as f64 + 0.5, v as f64 + 0.5);
            if let Some(d) = sphere_trace(camera, pixel, &obj_to_cam, &object.code, &object.decoder)
            {
                inside[(v - v0) * w + (u - u0)] = true;
                depths.push(d);
            }
        }
    }
    let mask = Mask::from_bitmap(u0, v0, w, h, &inside);
    if mask.is_empty() {
        return Ok(empty);
    }
    let mut bbox = [usize::MAX, usize::MAX, 0, 0];
    for (u, v) in mask.pixels() {
        bbox[0] = bbox[0].min(u);
        bbox[1] = bbox[1].min(v);
        bbox[2] = bbox[2].max(u + 1);
        bbox[3] = bbox[3].max(v + 1);
    }
    Ok(GtRender { mask, bbox, depths })
}

/// Sample `n` visible-surface points of one object by ray casting through
/// mask pixels; Gaussian depth/pixel noise added per the noise spec. The
/// sampling stream is deterministic, so a smaller `n` yields a prefix of a
/// larger one.
#[allow(clippy::too_many_arguments)]
pub fn sample_surface_points(
    object: &ObjectSpec,
    camera_pose: &PoseSE3,
    camera: &Camera,
    gt: &GtRender,
    n: usize,
    noise: &NoiseSpec,
    shrink: f64,
    seed: u64,
) -> Vec<SurfacePoint> {
    if gt.is_empty() {
        return Vec::new();
    }
    let obj_to_cam = camera_pose.inverse().to_sim3().compose(&object.world_pose);
    // Candidate pixels: mask pixels inside the centered sub-rectangle.
    let [u0, v0, u1, v1] = gt.bbox;
    let cu = (u0 + u1) as f64 / 2.0;
    let cv = (v0 + v1) as f64 / 2.0;
    let hw = (u1 - u0) as f64 / 2.0 * shrink;
    let hh = (v1 - v0) as f64 / 2.0 * shrink;
    let candidates: Vec<(usize, usize)> = gt
        .mask
        .pixels()
        .filter(|&(u, v)| {
            let (uc, vc) = (u as f64 + 0.5, v as f64 + 0.5);
            (uc - cu).abs() <= hw && (vc - cv).abs() <= hh
        })
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth_noise = Normal::new(0.0, noise.depth_sigma.max(1e-300)).unwrap();
    let pixel_noise = Normal::new(0.0, noise.pixel_sigma.max(1e-300)).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < 200 * n.max(1) {
        attempts += 1;
        let (u, v) = candidates[rng.random_range(0..candidates.len())];
        let pixel = (
            u as f64 + 0.5 + rng.random_range(-0.5..0.5),
            v as f64 + 0.5 + rng.random_range(-0.5..0.5),
        );
        let Some(depth) = sphere_trace(camera, pixel, &obj_to_cam, &object.code, &object.decoder)
        else {
            continue;
        };
        let stored_pixel = if noise.pixel_sigma > 0.0 {
            (pixel.0 + pixel_noise.sample(&mut rng), pixel.1 + pixel_noise.sample(&mut rng))
        } else {
            pixel
        };
        // The stored pixel must stay inside the mask (observations are
        // projections of mask-interior surface points).
        let (mu, mv) = (stored_pixel.0.floor(), stored_pixel.1.floor());
        if mu < 0.0 || mv < 0.0 || !gt.mask.contains(mu as usize, mv as usize) {
            continue;
        }
        let stored_depth = if noise.depth_sigma > 0.0 {
            depth + depth_noise.sample(&mut rng)
        } else {
            depth
        };
        if stored_depth <= 0.0 {
            continue;
        }
        out.push(SurfacePoint { pixel: stored_pixel, depth: stored_depth });
    }
    out
}

/// PCA pose initialization from a sparse object point cloud, in the frame
/// of the input points. Returns the primary hypothesis and its 180-degree
/// yaw-flipped twin.
pub fn pca_init_pose(points: &[Vec3], spec: &DecoderSpec) -> Result<(PoseSim3, PoseSim3)> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "PCA init needs at least 4 points, got {}",
            points.len()
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = nalgebra::SymmetricEigen::new(cov);
    // Sort eigenpairs by descending variance.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let lambda_max = eig.eigenvalues[order[0]];
    let lambda_min = eig.eigenvalues[order[2]];
    if lambda_max <= 0.0 || lambda_min < 1e-10 * lambda_max {
        return Err(Error::Degenerate("rank-deficient point cloud for PCA init".into()));
    }
    let mut v1: Vec3 = eig.eigenvectors.column(order[0]).into();
    let mut v2: Vec3 = eig.eigenvectors.column(order[1]).into();
    // Deterministic sign fix: largest-magnitude component positive.
    for v in [&mut v1, &mut v2] {
        let mut idx = 0;
        for i in 1..3 {
            if v[i].abs() > v[idx].abs() {
                idx = i;
            }
        }
        if v[idx] < 0.0 {
            *v = -*v;
        }
    }
    let v3 = v1.cross(&v2);

    // Assign principal axes to object axes ordered by base half-extent.
    let base = spec.base_half_extents;
    let mut extent_order = [0usize, 1, 2];
    extent_order.sort_by(|&a, &b| base[b].partial_cmp(&base[a]).unwrap());
    let mut rotation = Mat3::zeros();
    rotation.set_column(extent_order[0], &v1);
    rotation.set_column(extent_order[1], &v2);
    rotation.set_column(extent_order[2], &v3);
    if rotation.determinant() < 0.0 {
        rotation.set_column(extent_order[2], &(-v3));
    }

    // Scale: mean ratio of observed principal extents to base diameters.
    let mut ratio_sum = 0.0;
    for (rank, axis) in [v1, v2, v3].iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let t = (p - centroid).dot(axis);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        ratio_sum += (hi - lo) / (2.0 * base[extent_order[rank]]);
    }
    let scale = (ratio_sum / 3.0).max(1e-3);

    let pose = PoseSim3 { rotation, translation: centroid, scale };
    Ok((pose, yaw_flipped(&pose)))
}

/// The 180-degree flip of an object pose about its own y (up) axis; the
/// second PCA hypothesis.
pub fn yaw_flipped(pose: &PoseSim3) -> PoseSim3 {
    PoseSim3 {
        rotation: pose.rotation * Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0)),
        translation: pose.translation,
        scale: pose.scale,
    }
}

/// Deterministic background landmarks scattered around the trajectory.
pub fn generate_landmarks(scene: &SceneSpec) -> Vec<Vec3> {
    let mut lo = Vec3::from_element(f64::INFINITY);
    let mut hi = Vec3::from_element(f64::NEG_INFINITY);
    for pose in &scene.trajectory {
        for i in 0..3 {
            lo[i] = lo[i].min(pose.translation[i]);
            hi[i] = hi[i].max(pose.translation[i]);
        }
    }
    for obj in &scene.objects {
        for i in 0..3 {
            lo[i] = lo[i].min(obj.world_pose.translation[i]);
            hi[i] = hi[i].max(obj.world_pose.translation[i]);
        }
    }
    let margin = Vec3::new(2.0, 1.0, 2.0);
    lo -= margin;
    hi += margin;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, 0, 0, 101));
    (0..scene.n_landmarks)
        .map(|_| {
            Vec3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            )
        })
        .collect()
}

/// Tracked feature points on each object's surface (object frame), with
/// globally unique ids. Features are hits of rays cast inward from a
/// golden-angle direction spiral.
pub fn generate_object_features(scene: &SceneSpec) -> Vec<Vec<(u64, Vec3)>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(oid, obj)| {
            let r = obj.decoder.bounding_radius() * 1.5;
            let mut feats = Vec::new();
            for i in 0..scene.n_object_features {
                let frac = (i as f64 + 0.5) / scene.n_object_features as f64;
                let y = 1.0 - 2.0 * frac;
                let radius = (1.0 - y * y).max(0.0).sqrt();
                let angle = golden * i as f64;
                let dir = Vec3::new(radius * angle.cos(), y, radius * angle.sin());
                // March from outside toward the center.
                let mut t = 0.0;
                let origin = dir * r;
                let step_dir = -dir;
                let mut hit = None;
                for _ in 0..TRACE_MAX_STEPS {
                    let p = origin + step_dir * t;
                    let s = decode_sdf(&p, &obj.code, &obj.decoder);
                    if s < TRACE_TOLERANCE {
                        hit = Some(p);
                        break;
                    }
                    t += s;
                    if t > 2.0 * r {
                        break;
                    }
                }
                if let Some(p) = hit {
                    feats.push(((oid * 100_000 + i) as u64, p));
                }
            }
            feats
        })
        .collect()
}

/// Generate per-frame observations for a scene: detections with masks,
/// sparse surface points, feature ids, initial poses, landmark sightings and
/// noisy odometry.
pub fn make_frames(scene: &SceneSpec) -> Result<Vec<FrameObservation>> {
    let landmarks = generate_landmarks(scene);
    let features = generate_object_features(scene);
    let mut frames = Vec::with_capacity(scene.trajectory.len());

    for (frame_id, camera_pose) in scene.trajectory.iter().enumerate() {
        // Odometry increment with tangent-space noise.
        let odometry = if frame_id == 0 {
            PoseSE3::identity()
        } else {
            let rel = scene.trajectory[frame_id - 1].inverse().compose(camera_pose);
            if scene.noise.odom_sigma > 0.0 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, frame_id as u64, 0, 7));
                let normal = Normal::new(0.0, scene.noise.odom_sigma).unwrap();
                let mut eps = Vec6::zeros();
                for i in 0..6 {
                    eps[i] = normal.sample(&mut rng);
                }
                rel.compose(&exp_se3(&eps))
            } else {
                rel
            }
        };

        let cam_from_world = camera_pose.inverse();

        let mut detections = Vec::new();
        for (oid, obj) in scene.objects.iter().enumerate() {
            let gt = render_gt(obj, camera_pose, &scene.camera)?;
            if gt.is_empty() || gt.mask.pixel_count() < 16 {
                continue;
            }
            let points = sample_surface_points(
                obj,
                camera_pose,
                &scene.camera,
                &gt,
                scene.n_surface_points,
                &scene.noise,
                scene.surface_sample_shrink,
                derive_seed(scene.seed, frame_id as u64, oid as u64, 11),
            );
            if points.len() < 4 {
                continue;
            }
            let obj_to_cam = cam_from_world.to_sim3().compose(&obj.world_pose);
            let init_obj_to_cam = match scene.init_mode {
                InitMode::GroundTruth => obj_to_cam,
                InitMode::Pca => {
                    let cloud: Vec<Vec3> = points
                        .iter()
                        .map(|p| scene.camera.back_project(p.pixel.0, p.pixel.1, p.depth))
                        .collect();
                    match pca_init_pose(&cloud, &obj.decoder) {
                        Ok((primary, _)) => primary,
                        Err(_) => continue,
                    }
                }
            };
            // Feature visibility: in front, inside the image, facing the camera.
            let mut feature_ids = Vec::new();
            for (fid, p_obj) in &features[oid] {
                let p_cam = obj_to_cam.transform_point(p_obj);
                let Some((u, v)) = scene.camera.project(&p_cam) else { continue };
                if !scene.camera.contains(u, v) {
                    continue;
                }
                let (normal_obj, _) = decode_gradients(p_obj, &obj.code, &obj.decoder);
                let normal_cam = obj_to_cam.rotation * normal_obj;
                if normal_cam.dot(&p_cam.normalize()) < -0.1 {
                    feature_ids.push(*fid);
                }
            }
            let ground_normal = if scene.rotation_prior {
                Some(cam_from_world.rotation * Vec3::new(0.0, 1.0, 0.0))
            } else {
                None
            };
            let detection = Detection {
                bbox: gt.bbox,
                mask: gt.mask,
                surface_points: points,
                init_obj_to_cam,
                ground_normal,
                feature_ids,
                gt_object: Some(oid),
            };
            detection.validate()?;
            detections.push(detection);
        }

        // Landmark sightings.
        let mut landmark_obs = Vec::new();
        let mut lm_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, frame_id as u64, 0, 13));
        let px_noise = Normal::new(0.0, scene.noise.pixel_sigma.max(1e-300)).unwrap();
        let d_noise = Normal::new(0.0, scene.noise.depth_sigma.max(1e-300)).unwrap();
        for (id, lm) in landmarks.iter().enumerate() {
            let p_cam = cam_from_world.transform_point(lm);
            if p_cam.z < 0.2 {
                continue;
            }
            let Some((u, v)) = scene.camera.project(&p_cam) else { continue };
            if !scene.camera.contains(u, v) {
                continue;
            }
            let pixel = if scene.noise.pixel_sigma > 0.0 {
                (u + px_noise.sample(&mut lm_rng), v + px_noise.sample(&mut lm_rng))
            } else {
                (u, v)
            };
            let depth = if scene.noise.depth_sigma > 0.0 {
                p_cam.z + d_noise.sample(&mut lm_rng)
            } else {
                p_cam.z
            };
            if depth <= 0.0 {
                continue;
            }
            landmark_obs.push(LandmarkObservation { id, pixel, depth });
        }

        frames.push(FrameObservation {
            camera_id: frame_id,
            detections,
            odometry,
            landmark_obs,
            gt_camera: *camera_pose,
        });
    }
    Ok(frames)
}

/// Camera pose looking from `eye` toward `target` with image y pointing
/// down relative to the world up axis (0, 1, 0).
pub fn look_at(eye: Vec3, target: Vec3) -> PoseSE3 {
    let forward = (target - eye).normalize();
    let up = Vec3::new(0.0, 1.0, 0.0);
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = Vec3::new(1.0, 0.0, 0.0);
    } else {
        right = right.normalize();
    }
    let down = forward.cross(&right).normalize();
    let mut rotation = Mat3::zeros();
    rotation.set_column(0, &right);
    rotation.set_column(1, &down);
    rotation.set_column(2, &forward);
    PoseSE3 { rotation, translation: eye }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;

    fn camera() -> Camera {
        Camera { fx: 300.0, fy: 300.0, cx: 80.0, cy: 60.0, width: 160, height: 120 }
    }

    fn single_object_scene(noise: NoiseSpec, n_points: usize, seed: u64) -> SceneSpec {
        let spec = DecoderSpec::rounded_box(Vec3::new(0.24, 0.09, 0.11), 0.03, 8, 7);
        let world_pose = PoseSim3 {
            rotation: exp_so3(&Vec3::new(0.0, 0.5, 0.0)),
            translation: Vec3::new(0.05, -0.02, 0.0),
            scale: 1.0,
        };
        let code = ShapeCode::from_fn(8, |i, _| 0.25 * ((i % 3) as f64 - 1.0));
        let trajectory = vec![
            look_at(Vec3::new(0.0, 0.3, -1.7), Vec3::new(0.05, -0.02, 0.0)),
            look_at(Vec3::new(0.5, 0.3, -1.6), Vec3::new(0.05, -0.02, 0.0)),
        ];
        SceneSpec {
            camera: camera(),
            objects: vec![ObjectSpec { code, world_pose, decoder: spec }],
            trajectory,
            noise,
            seed,
            n_surface_points: n_points,
            n_landmarks: 20,
            n_object_features: 60,
            surface_sample_shrink: 1.0,
            init_mode: InitMode::GroundTruth,
            rotation_prior: false,
        }
    }

    #[test]
    fn surface_samples_lie_on_gt_surface() {
        let scene = single_object_scene(NoiseSpec::zero(), 250, 3);
        let frames = make_frames(&scene).unwrap();
        let det = &frames[0].detections[0];
        assert_eq!(det.surface_points.len(), 250);
        let obj = &scene.objects[0];
        let obj_to_cam = frames[0].gt_camera.inverse().to_sim3().compose(&obj.world_pose);
        let cam_to_obj = obj_to_cam.inverse();
        for p in &det.surface_points {
            let p_cam = scene.camera.back_project(p.pixel.0, p.pixel.1, p.depth);
            let s = decode_sdf(&cam_to_obj.transform_point(&p_cam), &obj.code, &obj.decoder);
            assert!(s.abs() <= 1e-5, "sample sdf {s}");
        }
    }

    #[test]
    fn smaller_sample_count_is_prefix_of_larger() {
        let scene_large = single_object_scene(NoiseSpec::zero(), 250, 3);
        let scene_small = single_object_scene(NoiseSpec::zero(), 50, 3);
        let large = make_frames(&scene_large).unwrap();
        let small = make_frames(&scene_small).unwrap();
        let lp = &large[0].detections[0].surface_points;
        let sp = &small[0].detections[0].surface_points;
        assert_eq!(sp.len(), 50);
        for (a, b) in sp.iter().zip(lp.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let scene = single_object_scene(
            NoiseSpec { depth_sigma: 0.004, pixel_sigma: 0.3, odom_sigma: 0.005 },
            120,
            9,
        );
        let a = make_frames(&scene).unwrap();
        let b = make_frames(&scene).unwrap();
        assert_eq!(a.len(), b.len());
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.detections.len(), fb.detections.len());
            for (da, db) in fa.detections.iter().zip(&fb.detections) {
                assert_eq!(da.surface_points, db.surface_points);
                assert_eq!(da.bbox, db.bbox);
            }
            assert_eq!(fa.odometry.translation, fb.odometry.translation);
            assert_eq!(
                fa.landmark_obs.len(),
                fb.landmark_obs.len()
            );
        }
    }

    #[test]
    fn zero_noise_odometry_chain_reproduces_trajectory() {
        let scene = single_object_scene(NoiseSpec::zero(), 30, 4);
        let frames = make_frames(&scene).unwrap();
        let mut pose = scene.trajectory[0];
        for (i, frame) in frames.iter().enumerate() {
            if i > 0 {
                pose = pose.compose(&frame.odometry);
            }
            let gt = &scene.trajectory[i];
            assert!((pose.translation - gt.translation).norm() < 1e-12);
            assert!((pose.rotation - gt.rotation).norm() < 1e-12);
        }
    }

    #[test]
    fn odometry_drift_grows_with_trajectory_length() {
        // Statistical oracle over 20 seeds: accumulated drift at the final
        // frame is larger for a longer trajectory.
        let mut short_total = 0.0;
        let mut long_total = 0.0;
        for seed in 0..20u64 {
            let spec = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.1), 0.02, 8, 1);
            let make = |n_frames: usize| -> f64 {
                let trajectory: Vec<PoseSE3> = (0..n_frames)
                    .map(|i| {
                        let angle = i as f64 * 0.2;
                        look_at(
                            Vec3::new(2.0 * angle.cos(), 0.2, 2.0 * angle.sin()),
                            Vec3::zeros(),
                        )
                    })
                    .collect();
                let scene = SceneSpec {
                    camera: camera(),
                    objects: vec![ObjectSpec {
                        code: ShapeCode::zeros(8),
                        world_pose: PoseSim3::identity(),
                        decoder: spec.clone(),
                    }],
                    trajectory: trajectory.clone(),
                    noise: NoiseSpec { depth_sigma: 0.0, pixel_sigma: 0.0, odom_sigma: 0.01 },
                    seed,
                    n_surface_points: 8,
                    n_landmarks: 0,
                    n_object_features: 0,
                    surface_sample_shrink: 1.0,
                    init_mode: InitMode::GroundTruth,
                    rotation_prior: false,
                };
                let frames = make_frames(&scene).unwrap();
                let mut pose = trajectory[0];
                for frame in frames.iter().skip(1) {
                    pose = pose.compose(&frame.odometry);
                }
                (pose.translation - trajectory.last().unwrap().translation).norm()
            };
            short_total += make(5);
            long_total += make(25);
        }
        assert!(
            long_total > short_total,
            "drift should grow: short {short_total} long {long_total}"
        );
    }

    #[test]
    fn one_sided_view_samples_face_camera() {
        let scene = single_object_scene(NoiseSpec::zero(), 80, 5);
        let frames = make_frames(&scene).unwrap();
        let det = &frames[0].detections[0];
        let obj = &scene.objects[0];
        let obj_to_cam = frames[0].gt_camera.inverse().to_sim3().compose(&obj.world_pose);
        let cam_to_obj = obj_to_cam.inverse();
        for p in &det.surface_points {
            let p_cam = scene.camera.back_project(p.pixel.0, p.pixel.1, p.depth);
            let p_obj = cam_to_obj.transform_point(&p_cam);
            let (normal_obj, _) = decode_gradients(&p_obj, &obj.code, &obj.decoder);
            let normal_cam = obj_to_cam.rotation * normal_obj;
            assert!(
                normal_cam.dot(&p_cam.normalize()) < 0.0,
                "sampled point not on the visible hemisphere"
            );
        }
    }

    #[test]
    fn pca_init_recovers_axis_aligned_box() {
        let spec = DecoderSpec::rounded_box(Vec3::new(0.3, 0.1, 0.15), 0.02, 8, 2);
        // Points on the GT box surface at identity pose.
        let mesh = crate::mesh::decode_mesh(&ShapeCode::zeros(8), &spec, 32).unwrap();
        let points = mesh.sample_surface(400, 17);
        let (pose, twin) = pca_init_pose(&points, &spec).unwrap();
        assert!(pose.translation.norm() < 0.02);
        assert!((pose.scale - 1.0).abs() < 0.15);
        // Rotation within axis permutation/sign of identity: columns must be
        // near coordinate axes.
        for c in 0..3 {
            let col = pose.rotation.column(c);
            let max = col.amax();
            assert!(max > 0.99, "column {c} not axis aligned: {col:?}");
        }
        // The twin differs by a 180-degree yaw.
        let rel = pose.rotation.transpose() * twin.rotation;
        assert!((rel - Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0))).norm() < 1e-12);
    }

    #[test]
    fn pca_init_heading_within_ten_degrees_for_elongated_shape() {
        let spec = DecoderSpec::rounded_box(Vec3::new(0.3, 0.08, 0.1), 0.02, 8, 2);
        let rot = exp_so3(&Vec3::new(0.0, 0.7, 0.0));
        let mesh = crate::mesh::decode_mesh(&ShapeCode::zeros(8), &spec, 32).unwrap();
        let points: Vec<Vec3> = mesh
            .sample_surface(500, 23)
            .iter()
            .map(|p| rot * p + Vec3::new(0.4, 0.1, 2.0))
            .collect();
        let (pose, _) = pca_init_pose(&points, &spec).unwrap();
        let heading_gt: Vec3 = rot.column(0).into();
        let heading: Vec3 = pose.rotation.column(0).into();
        let angle = heading.dot(&heading_gt).abs().clamp(-1.0, 1.0).acos();
        assert!(angle < 10f64.to_radians(), "heading error {} deg", angle.to_degrees());
    }

    #[test]
    fn pca_init_rejects_planar_cloud() {
        let spec = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.1), 0.02, 8, 2);
        let points: Vec<Vec3> = (0..50)
            .map(|i| Vec3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 0.0))
            .collect();
        assert!(matches!(pca_init_pose(&points, &spec), Err(Error::Degenerate(_))));
    }

    #[test]
    fn render_gt_mask_grows_with_scale_and_contains_bbox() {
        let cam = camera();
        let spec = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.12), 0.02, 8, 2);
        let pose = look_at(Vec3::new(0.0, 0.2, -1.8), Vec3::zeros());
        let small = ObjectSpec {
            code: ShapeCode::zeros(8),
            world_pose: PoseSim3::identity(),
            decoder: spec.clone(),
        };
        let big = ObjectSpec {
            code: ShapeCode::zeros(8),
            world_pose: PoseSim3 { scale: 1.3, ..PoseSim3::identity() },
            decoder: spec,
        };
        let gt_small = render_gt(&small, &pose, &cam).unwrap();
        let gt_big = render_gt(&big, &pose, &cam).unwrap();
        assert!(gt_big.mask.pixel_count() > gt_small.mask.pixel_count());
        for (u, v) in gt_small.mask.pixels() {
            assert!(u >= gt_small.bbox[0] && u < gt_small.bbox[2]);
            assert!(v >= gt_small.bbox[1] && v < gt_small.bbox[3]);
        }
    }

    #[test]
    fn render_gt_empty_when_object_behind() {
        let cam = camera();
        let spec = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.12), 0.02, 8, 2);
        let object = ObjectSpec {
            code: ShapeCode::zeros(8),
            world_pose: PoseSim3 {
                translation: Vec3::new(0.0, 0.0, -10.0),
                ..PoseSim3::identity()
            },
            decoder: spec,
        };
        let pose = look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, 10.0));
        let gt = render_gt(&object, &pose, &cam).unwrap();
        assert!(gt.is_empty());
        assert_eq!(gt.bbox, [0; 4]);
    }
}
