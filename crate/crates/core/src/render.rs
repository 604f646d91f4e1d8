//! Differentiable SDF depth renderer.
//!
//! Per pixel: back-project a ray, sample M uniformly spaced depths inside
//! the pose-dependent depth range, decode the SDF at each sample, convert
//! SDF to occupancy with a bounded linear ramp of half-width `sigma`, turn
//! occupancies into ray-termination event probabilities, and render the
//! expected depth. Escaped rays terminate at `d_escape = 1.1 * d_max`.
//!
//! The depth range is recomputed from the current pose estimate at each
//! solver iteration; derivatives treat the sample positions as fixed.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::lie::{PoseSim3, Vec3};
use crate::prior::{decode_sdf, DecoderSpec, ShapeCode};
use crate::{Error, Result};

/// Default SDF-to-occupancy ramp half-width (meters in object units).
pub const DEFAULT_SIGMA: f64 = 0.01;
/// Default near-plane clamp for the depth range (meters).
pub const DEFAULT_NEAR_PLANE: f64 = 0.1;

/// Pinhole camera intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if self.cx <= 0.0
            || self.cy <= 0.0
            || self.cx >= self.width as f64
            || self.cy >= self.height as f64
        {
            return Err(Error::InvalidParameter("principal point outside image".into()));
        }
        Ok(())
    }

    /// Ray direction through a pixel, parameterized so that the ray point at
    /// parameter `d` has camera-frame depth (z coordinate) exactly `d`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Back-project a pixel at a given depth into the camera frame.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.ray_direction(u, v) * depth
    }

    /// Project a camera-frame point; `None` when it is not in front.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Depth sampling range for the current object pose estimate.
///
/// `obj_to_cam` places the object in the camera frame; the range brackets
/// the decoder's bounding sphere around the object center depth, clamped at
/// the near plane.
pub fn depth_range(
    obj_to_cam: &PoseSim3,
    spec: &DecoderSpec,
    near_plane: f64,
) -> Result<(f64, f64)> {
    let center_depth = obj_to_cam.translation.z;
    let reach = obj_to_cam.scale * spec.bounding_radius();
    let d_max = center_depth + reach;
    if d_max <= near_plane {
        return Err(Error::BehindCamera { depth: center_depth });
    }
    let d_min = (center_depth - reach).max(near_plane);
    Ok((d_min, d_max))
}

/// SDF to occupancy: 1 below the ramp, 0 above, linear in between.
///
/// The ramp is the continuous form `1/2 - s / (2 sigma)`; its slope matches
/// the conversion gradient and its endpoints meet the outer branches.
pub fn occupancy(s: f64, sigma: f64) -> f64 {
    if s < -sigma {
        1.0
    } else if s > sigma {
        0.0
    } else {
        0.5 - s / (2.0 * sigma)
    }
}

/// Derivative of the SDF-to-occupancy conversion: constant on the open ramp,
/// zero elsewhere.
pub fn occupancy_grad(s: f64, sigma: f64) -> f64 {
    if s.abs() < sigma {
        -1.0 / (2.0 * sigma)
    } else {
        0.0
    }
}

/// Ray-termination event probabilities.
///
/// `phi[i] = o_i * prod_{j<i}(1 - o_j)` for the M samples, and the final
/// entry is the escape probability `prod_j (1 - o_j)`. The probabilities
/// telescope to a sum of exactly one.
pub fn event_probabilities(occ: &[f64]) -> Vec<f64> {
    let mut phi = Vec::with_capacity(occ.len() + 1);
    let mut transmittance = 1.0;
    for &o in occ {
        phi.push(o * transmittance);
        transmittance *= 1.0 - o;
    }
    phi.push(transmittance);
    phi
}

/// Expected termination depth under the event distribution.
pub fn render_depth(phi: &[f64], depths: &[f64], d_escape: f64) -> f64 {
    debug_assert_eq!(phi.len(), depths.len() + 1);
    let mut depth = 0.0;
    for (p, d) in phi.iter().zip(depths.iter()) {
        depth += p * d;
    }
    depth + phi[depths.len()] * d_escape
}

/// Gradient of the depth residual w.r.t. each occupancy under uniform ray
/// spacing: `de_r/do_k = delta_d * sum_{i=k}^{M} prod_{j<=i, j!=k}(1-o_j)`.
///
/// Entries past the first fully occupied sample are exactly zero, which is
/// what justifies skipping decoder-gradient evaluations there.
pub fn depth_residual_occ_grad(occ: &[f64], delta_d: f64) -> Vec<f64> {
    occ_grad_with_escape_gap(occ, delta_d, delta_d)
}

/// Exact residual gradient for the implemented renderer, where the escape
/// depth sits `last_gap = d_escape - d_M` beyond the last sample rather than
/// one uniform step. The uniform formula is the `last_gap = delta_d` case.
pub fn occ_grad_with_escape_gap(occ: &[f64], delta_d: f64, last_gap: f64) -> Vec<f64> {
    let m = occ.len();
    let mut out = vec![0.0; m];
    // Transmittance prefix excluding sample k, accumulated on the fly.
    let mut prefix = 1.0; // prod_{j<k} (1 - o_j)
    for k in 0..m {
        let mut sum = 0.0;
        let mut partial = prefix; // prod_{j<=i, j!=k} for the running i
        for i in k..m {
            if i > k {
                partial *= 1.0 - occ[i];
            }
            let coeff = if i + 1 < m { delta_d } else { last_gap };
            sum += coeff * partial;
        }
        out[k] = sum;
        prefix *= 1.0 - occ[k];
    }
    out
}

/// All per-ray quantities of one traced pixel.
#[derive(Debug, Clone)]
pub struct RayBundle {
    pub pixel: (f64, f64),
    pub depths: Vec<f64>,
    pub points_obj: Vec<Vec3>,
    pub sdf: Vec<f64>,
    pub occ: Vec<f64>,
    pub event_prob: Vec<f64>,
    pub d_escape: f64,
}

impl RayBundle {
    pub fn rendered_depth(&self) -> f64 {
        render_depth(&self.event_prob, &self.depths, self.d_escape)
    }

    pub fn delta_d(&self) -> f64 {
        self.depths[1] - self.depths[0]
    }
}

/// Trace one pixel: computes the depth range from the pose and evaluates the
/// sampled ray. `cam_to_obj` maps camera-frame points into the object frame.
pub fn trace_ray(
    camera: &Camera,
    pixel: (f64, f64),
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    samples: usize,
    sigma: f64,
    near_plane: f64,
) -> Result<RayBundle> {
    let range = depth_range(&cam_to_obj.inverse(), spec, near_plane)?;
    Ok(trace_ray_with_range(camera, pixel, cam_to_obj, code, spec, samples, sigma, range))
}

/// Trace one pixel against a precomputed depth range (shared by all pixels
/// within one solver iteration).
#[allow(clippy::too_many_arguments)]
pub fn trace_ray_with_range(
    camera: &Camera,
    pixel: (f64, f64),
    cam_to_obj: &PoseSim3,
    code: &ShapeCode,
    spec: &DecoderSpec,
    samples: usize,
    sigma: f64,
    (d_min, d_max): (f64, f64),
) -> RayBundle {
    debug_assert!(samples >= 2);
    let dir = camera.ray_direction(pixel.0, pixel.1);
    let delta_d = (d_max - d_min) / (samples - 1) as f64;
    let mut depths = Vec::with_capacity(samples);
    let mut points_obj = Vec::with_capacity(samples);
    let mut sdf = Vec::with_capacity(samples);
    let mut occ = Vec::with_capacity(samples);
    for i in 0..samples {
        let d = d_min + delta_d * i as f64;
        let p_cam = dir * d;
        let p_obj = cam_to_obj.transform_point(&p_cam);
        let s = decode_sdf(&p_obj, code, spec);
        depths.push(d);
        points_obj.push(p_obj);
        sdf.push(s);
        occ.push(occupancy(s, sigma));
    }
    let event_prob = event_probabilities(&occ);
    RayBundle { pixel, depths, points_obj, sdf, occ, event_prob, d_escape: 1.1 * d_max }
}

/// Write a depth map as a small text header followed by row-major
/// little-endian f32 samples.
pub fn write_depth_map(path: &Path, camera: &Camera, depths: &[f32]) -> Result<()> {
    if depths.len() != camera.width * camera.height {
        return Err(Error::InvalidParameter("depth buffer size mismatch".into()));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "objslam-depth 1")?;
    writeln!(file, "width {} height {}", camera.width, camera.height)?;
    writeln!(file, "fx {} fy {} cx {} cy {}", camera.fx, camera.fy, camera.cx, camera.cy)?;
    writeln!(file, "data")?;
    for d in depths {
        file.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_depth_map(path: &Path) -> Result<(Camera, Vec<f32>)> {
    let mut reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut read_line = |reader: &mut std::io::BufReader<std::fs::File>, n: usize| -> Result<Vec<String>> {
        line.clear();
        reader.read_line(&mut line)?;
        Ok(line.split_whitespace().take(n).map(str::to_owned).collect())
    };
    let magic = read_line(&mut reader, 2)?;
    if magic.first().map(String::as_str) != Some("objslam-depth") {
        return Err(Error::Parse { line: 1, msg: "not a depth map file".into() });
    }
    let dims = read_line(&mut reader, 4)?;
    let intr = read_line(&mut reader, 8)?;
    let data_tag = read_line(&mut reader, 1)?;
    if data_tag.first().map(String::as_str) != Some("data") {
        return Err(Error::Parse { line: 4, msg: "missing data marker".into() });
    }
    let parse = |s: &str, what: &str, ln: usize| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad {what}: {s}") })
    };
    let camera = Camera {
        width: parse(&dims[1], "width", 2)? as usize,
        height: parse(&dims[3], "height", 2)? as usize,
        fx: parse(&intr[1], "fx", 3)?,
        fy: parse(&intr[3], "fy", 3)?,
        cx: parse(&intr[5], "cx", 3)?,
        cy: parse(&intr[7], "cy", 3)?,
    };
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    let expected = camera.width * camera.height * 4;
    if raw.len() != expected {
        return Err(Error::Parse {
            line: 5,
            msg: format!("expected {expected} payload bytes, found {}", raw.len()),
        });
    }
    let depths = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((camera, depths))
}
