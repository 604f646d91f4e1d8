//! Residual families and their analytic Jacobians with respect to the
//! stacked unknowns `[nu | phi | sigma | z]` (left-perturbation pose twist
//! followed by the shape code).
//!
//! Four families: surface consistency (SDF of back-projected observed
//! points), rendered depth (observed minus expected depth, including
//! silhouette pixels pinned to the escape depth), the shape-code
//! regularizer, and an optional ground-plane rotation prior.

use nalgebra::{DMatrix, DVector};

use crate::lie::{point_jacobian_sim3, skew, PoseSim3, Vec3};
use crate::prior::{decode_sdf, decode_sdf_with_gradients, DecoderSpec, ShapeCode};
use crate::render::{occ_grad_with_escape_gap, occupancy_grad, trace_ray_with_range, Camera};
use crate::{Error, Result};

/// Binary mask stored as per-row runs over a bounding-box region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    /// Runs of inside pixels per row, absolute pixel coordinates, `[start, end)`.
    runs: Vec<Vec<(u32, u32)>>,
}

impl Mask {
    pub fn from_bitmap(x0: usize, y0: usize, width: usize, height: usize, inside: &[bool]) -> Self {
        assert_eq!(inside.len(), width * height);
        let mut runs = Vec::with_capacity(height);
        for row in 0..height {
            let mut row_runs = Vec::new();
            let mut start = None;
            for col in 0..=width {
                let set = col < width && inside[row * width + col];
                match (set, start) {
                    (true, None) => start = Some(col),
                    (false, Some(s)) => {
                        row_runs.push(((x0 + s) as u32, (x0 + col) as u32));
                        start = None;
                    }
                    _ => {}
                }
            }
            runs.push(row_runs);
        }
        Mask { x0, y0, width, height, runs }
    }

    pub fn from_runs(x0: usize, y0: usize, width: usize, height: usize, runs: Vec<Vec<(u32, u32)>>) -> Self {
        Mask { x0, y0, width, height, runs }
    }

    pub fn runs(&self) -> &[Vec<(u32, u32)>] {
        &self.runs
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        if v < self.y0 || v >= self.y0 + self.height {
            return false;
        }
        self.runs[v - self.y0]
            .iter()
            .any(|&(s, e)| (u as u32) >= s && (u as u32) < e)
    }

    pub fn pixel_count(&self) -> usize {
        self.runs
            .iter()
            .flat_map(|row| row.iter().map(|&(s, e)| (e - s) as usize))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count() == 0
    }

    /// Pixels of the mask in scan order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.runs.iter().enumerate().flat_map(move |(r, row)| {
            let v = self.y0 + r;
            row.iter()
                .flat_map(move |&(s, e)| (s..e).map(move |u| (u as usize, v)))
        })
    }
}

/// One sparse surface observation: a pixel with a measured depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub pixel: (f64, f64),
    pub depth: f64,
}

/// One detected object instance: 2D box, mask, sparse surface points and an
/// initial pose guess from the detector stand-in.
#[derive(Debug, Clone)]
pub struct Detection {
    /// `[u_min, v_min, u_max, v_max)`, exclusive maxima, pixels.
    pub bbox: [usize; 4],
    pub mask: Mask,
    pub surface_points: Vec<SurfacePoint>,
    /// Initial object pose in the camera frame (maps object to camera).
    pub init_obj_to_cam: PoseSim3,
    /// Unit ground-plane normal in the camera frame, when available.
    pub ground_normal: Option<Vec3>,
    /// Tracked feature ids on this object instance (for visual association).
    pub feature_ids: Vec<u64>,
    /// Simulator ground-truth object id; never used by estimation.
    pub gt_object: Option<usize>,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        for p in &self.surface_points {
            if p.depth <= 0.0 {
                return Err(Error::InvalidParameter("surface point with non-positive depth".into()));
            }
            let (u, v) = (p.pixel.0.floor(), p.pixel.1.floor());
            if u < 0.0 || v < 0.0 || !self.mask.contains(u as usize, v as usize) {
                return Err(Error::InvalidParameter(format!(
                    "surface pixel ({}, {}) outside the mask",
                    p.pixel.0, p.pixel.1
                )));
            }
        }
        if let Some(n) = &self.ground_normal {
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("ground normal must be unit length".into()));
            }
        }
        Ok(())
    }
}

/// A residual vector with its stacked Jacobian and energy weight.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub residual: DVector<f64>,
    /// `len(residual) x (7 + k)`, columns `[nu | phi | sigma | z]`.
    pub jacobian: DMatrix<f64>,
    pub weight: f64,
}

impl ResidualBlock {
    pub fn energy(&self) -> f64 {
        self.weight * self.residual.norm_squared()
    }
}

/// Surface consistency residual: SDF of the back-projected observed point in
/// the object frame. Zero iff the observation lies on the decoded surface.
pub fn surface_residual(
    point: &SurfacePoint,
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    camera: &Camera,
) -> f64 {
    let p_cam = camera.back_project(point.pixel.0, point.pixel.1, point.depth);
    decode_sdf(&cam_to_obj.transform_point(&p_cam), code, spec)
}

/// Surface residual together with its Jacobian row.
///
/// Pose block is `dG/dx * [I | -x_x | x]` at the object-frame point, code
/// block is `dG/dz` directly.
pub fn surface_residual_jacobian(
    point: &SurfacePoint,
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    camera: &Camera,
) -> (f64, DVector<f64>) {
    let p_cam = camera.back_project(point.pixel.0, point.pixel.1, point.depth);
    let p_obj = cam_to_obj.transform_point(&p_cam);
    let (value, dx, dz) = decode_sdf_with_gradients(&p_obj, code, spec);
    let pose_row = dx.transpose() * point_jacobian_sim3(&p_obj);
    let k = code.len();
    let mut row = DVector::zeros(7 + k);
    for col in 0..7 {
        row[col] = pose_row[col];
    }
    row.rows_mut(7, k).copy_from(&dz);
    (value, row)
}

/// Rendered-depth residual: observed minus expected depth along the pixel's
/// ray, with the sampling taken from a precomputed depth range.
#[allow(clippy::too_many_arguments)]
pub fn render_residual(
    pixel: (f64, f64),
    observed_depth: f64,
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    camera: &Camera,
    samples: usize,
    sigma: f64,
    range: (f64, f64),
) -> f64 {
    let bundle = trace_ray_with_range(camera, pixel, cam_to_obj, code, spec, samples, sigma, range);
    observed_depth - bundle.rendered_depth()
}

/// Rendered-depth residual, Jacobian row and decoder-gradient call count.
#[derive(Debug, Clone)]
pub struct RenderJacobian {
    pub residual: f64,
    pub row: DVector<f64>,
    /// Number of decoder gradient evaluations performed during assembly.
    pub decoder_grad_evals: usize,
}

/// Assemble the rendering Jacobian row through the three-factor chain
/// `de_r/do_k * do_k/ds_k * dG(x_k)/d[pose; z]`.
///
/// With `sparse` set, decoder gradients are evaluated only where the first
/// two factors are nonzero; the assembled row is bit-identical to the dense
/// path because skipped terms contribute exact zeros.
#[allow(clippy::too_many_arguments)]
pub fn render_residual_jacobian(
    pixel: (f64, f64),
    observed_depth: f64,
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    camera: &Camera,
    samples: usize,
    sigma: f64,
    range: (f64, f64),
    sparse: bool,
) -> RenderJacobian {
    let bundle = trace_ray_with_range(camera, pixel, cam_to_obj, code, spec, samples, sigma, range);
    let residual = observed_depth - bundle.rendered_depth();
    let delta_d = bundle.delta_d();
    let escape_gap = bundle.d_escape - bundle.depths[samples - 1];
    let de_do = occ_grad_with_escape_gap(&bundle.occ, delta_d, escape_gap);

    let k = code.len();
    let mut row = DVector::zeros(7 + k);
    let mut evals = 0;
    for i in 0..samples {
        let weight = de_do[i] * occupancy_grad(bundle.sdf[i], sigma);
        if sparse && weight == 0.0 {
            continue;
        }
        let p_obj = &bundle.points_obj[i];
        let (_, dx, dz) = decode_sdf_with_gradients(p_obj, code, spec);
        evals += 1;
        let pose_row = dx.transpose() * point_jacobian_sim3(p_obj);
        for col in 0..7 {
            row[col] += weight * pose_row[col];
        }
        for col in 0..k {
            row[7 + col] += weight * dz[col];
        }
    }
    RenderJacobian { residual, row, decoder_grad_evals: evals }
}

/// Shape-code regularizer: the residual is the code itself; the Jacobian is
/// zero in the pose block and identity in the code block.
pub fn code_prior_residual(code: &ShapeCode) -> ResidualBlock {
    let k = code.len();
    let mut jacobian = DMatrix::zeros(k, 7 + k);
    for i in 0..k {
        jacobian[(i, 7 + i)] = 1.0;
    }
    ResidualBlock { residual: code.clone(), jacobian, weight: 1.0 }
}

/// Ground-plane rotation prior: `1 - (second row of R_oc) . n_g`, zero when
/// the object's y axis maps onto the ground normal. The Jacobian lives only
/// in the rotation columns and equals the second row of `skew(R_oc * n_g)`.
pub fn rotation_prior_residual(
    cam_to_obj: &PoseSim3,
    ground_normal: &Vec3,
    code_dim: usize,
) -> (f64, DVector<f64>) {
    let rotated = cam_to_obj.rotation * ground_normal;
    let residual = 1.0 - rotated.y;
    let s = skew(&rotated);
    let mut row = DVector::zeros(7 + code_dim);
    row[3] = s[(1, 0)];
    row[4] = s[(1, 1)];
    row[5] = s[(1, 2)];
    (residual, row)
}
