//! Sim(3), SE(3) and SO(3) representations with exponential/logarithm maps
//! and the left-perturbation Jacobians used by the residual modules.
//!
//! Twist coordinates are ordered `[nu; phi; sigma]` (translation, rotation,
//! log-scale); every Jacobian column layout in the crate inherits this order.
//! Rotations are stored as 3x3 matrices. Pose updates throughout the crate
//! use left multiplication, `T <- exp(delta) * T`, so all Jacobians here are
//! left-perturbation Jacobians.

use nalgebra::{Matrix3, Matrix4, Matrix6, SMatrix, SVector, Vector3, Vector4, Vector6};
use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Vec7 = SVector<f64, 7>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Mat3x7 = SMatrix<f64, 3, 7>;

/// Angle threshold below which trigonometric coefficients switch to their
/// Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Margin kept away from pi in the SO(3)/SE(3) log maps.
const PI_BRANCH_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix of `v`: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Twist coordinate of sim(3): translation `nu`, axis-angle `phi`,
/// log-scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistSim3 {
    pub nu: Vec3,
    pub phi: Vec3,
    pub sigma: f64,
}

impl TwistSim3 {
    pub fn zero() -> Self {
        TwistSim3 { nu: Vec3::zeros(), phi: Vec3::zeros(), sigma: 0.0 }
    }

    pub fn from_vector(v: &Vec7) -> Self {
        TwistSim3 {
            nu: Vec3::new(v[0], v[1], v[2]),
            phi: Vec3::new(v[3], v[4], v[5]),
            sigma: v[6],
        }
    }

    pub fn as_vector(&self) -> Vec7 {
        Vec7::from_column_slice(&[
            self.nu.x, self.nu.y, self.nu.z, self.phi.x, self.phi.y, self.phi.z, self.sigma,
        ])
    }
}

/// Hat operator for sim(3): maps a twist to its 4x4 Lie-algebra matrix.
///
/// Top-left block is `skew(phi) + sigma*I`, top-right column is `nu`,
/// bottom row is zero.
pub fn hat_sim3(xi: &TwistSim3) -> Mat4 {
    let mut m = Mat4::zeros();
    let top_left = skew(&xi.phi) + Mat3::identity() * xi.sigma;
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&top_left);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.nu);
    m
}

/// Rodrigues formula: exponential map of so(3).
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let theta_sq = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        // sin(t)/t and (1-cos(t))/t^2
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Logarithm map of SO(3), principal branch.
///
/// Fails for rotations within [`PI_BRANCH_MARGIN`] of a half turn, where the
/// axis is not recoverable from the antisymmetric part.
pub fn log_so3(rot: &Mat3) -> Result<Vec3> {
    let cos_theta = ((rot.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta > std::f64::consts::PI - PI_BRANCH_MARGIN {
        return Err(Error::NearPiRotation { margin: PI_BRANCH_MARGIN });
    }
    let vee = Vec3::new(
        rot[(2, 1)] - rot[(1, 2)],
        rot[(0, 2)] - rot[(2, 0)],
        rot[(1, 0)] - rot[(0, 1)],
    );
    let factor = if theta < SMALL_ANGLE {
        0.5 + theta * theta / 12.0
    } else {
        0.5 * theta / theta.sin()
    };
    Ok(vee * factor)
}

/// Left Jacobian of SO(3): `J_l = I + b*phi_x + c*phi_x^2`.
pub fn left_jacobian_so3(phi: &Vec3) -> Mat3 {
    let theta_sq = phi.norm_squared();
    let k = skew(phi);
    let (b, c) = if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        (0.5 - theta_sq / 24.0, 1.0 / 6.0 - theta_sq / 120.0)
    } else {
        let theta = theta_sq.sqrt();
        ((1.0 - theta.cos()) / theta_sq, (theta - theta.sin()) / (theta_sq * theta))
    };
    Mat3::identity() + k * b + k * k * c
}

/// Inverse of the SO(3) left Jacobian.
pub fn left_jacobian_inv_so3(phi: &Vec3) -> Mat3 {
    let theta_sq = phi.norm_squared();
    let k = skew(phi);
    let c = if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        1.0 / 12.0 + theta_sq / 720.0
    } else {
        let theta = theta_sq.sqrt();
        1.0 / theta_sq - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Mat3::identity() - k * 0.5 + k * k * c
}

/// 7-DoF similarity transform: `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSim3 {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl PoseSim3 {
    pub fn identity() -> Self {
        PoseSim3 { rotation: Mat3::identity(), translation: Vec3::zeros(), scale: 1.0 }
    }

    pub fn new(rotation: Mat3, translation: Vec3, scale: f64) -> Result<Self> {
        let pose = PoseSim3 { rotation, translation, scale };
        if !pose.is_valid(1e-9) {
            return Err(Error::InvalidParameter(format!(
                "not a similarity transform (orthonormality defect {:.2e}, det {:.6}, scale {:.6})",
                (rotation.transpose() * rotation - Mat3::identity()).norm(),
                rotation.determinant(),
                scale
            )));
        }
        Ok(pose)
    }

    /// Orthonormality, determinant and positive-scale check.
    pub fn is_valid(&self, tol: f64) -> bool {
        let defect = (self.rotation.transpose() * self.rotation - Mat3::identity()).norm();
        defect <= tol && (self.rotation.determinant() - 1.0).abs() <= tol && self.scale > 0.0
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }

    pub fn compose(&self, other: &PoseSim3) -> PoseSim3 {
        PoseSim3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> PoseSim3 {
        let rot_t = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        PoseSim3 {
            rotation: rot_t,
            translation: -(rot_t * self.translation) * inv_scale,
            scale: inv_scale,
        }
    }

    /// 3x4 matrix `[scale*R | t]`, row-major flattening of which is the
    /// serialized pose representation.
    pub fn matrix34(&self) -> [f64; 12] {
        let sr = self.rotation * self.scale;
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = sr[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    pub fn from_matrix34(vals: &[f64; 12], scale: f64) -> Result<Self> {
        if scale <= 0.0 || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let mut rotation = Mat3::zeros();
        let mut translation = Vec3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                rotation[(r, c)] = vals[r * 4 + c] / scale;
            }
            translation[r] = vals[r * 4 + 3];
        }
        PoseSim3::new(rotation, translation, scale)
    }

    /// Rotation + translation with the scale dropped.
    pub fn se3_part(&self) -> PoseSE3 {
        PoseSE3 { rotation: self.rotation, translation: self.translation }
    }

    pub fn homogeneous(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Rigid transform (scale 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn transform_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rot_t = self.rotation.transpose();
        PoseSE3 { rotation: rot_t, translation: -(rot_t * self.translation) }
    }

    pub fn to_sim3(&self) -> PoseSim3 {
        PoseSim3 { rotation: self.rotation, translation: self.translation, scale: 1.0 }
    }

    /// Adjoint matrix mapping twists `[nu; phi]` across left/right
    /// composition: `Adj = [[R, t_x R], [0, R]]`.
    pub fn adjoint(&self) -> Mat6 {
        let mut adj = Mat6::zeros();
        adj.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        adj.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * self.rotation));
        adj.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        adj
    }
}

/// Exponential map of se(3), twist ordered `[nu; phi]`.
pub fn exp_se3(xi: &Vec6) -> PoseSE3 {
    let nu = Vec3::new(xi[0], xi[1], xi[2]);
    let phi = Vec3::new(xi[3], xi[4], xi[5]);
    PoseSE3 { rotation: exp_so3(&phi), translation: left_jacobian_so3(&phi) * nu }
}

/// Logarithm map of SE(3), principal branch.
pub fn log_se3(pose: &PoseSE3) -> Result<Vec6> {
    let phi = log_so3(&pose.rotation)?;
    let nu = left_jacobian_inv_so3(&phi) * pose.translation;
    let mut out = Vec6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&nu);
    out.fixed_rows_mut::<3>(3).copy_from(&phi);
    Ok(out)
}

/// Exponential map of sim(3).
///
/// Closed form: rotation by Rodrigues, scale `exp(sigma)`, translation
/// `W(phi, sigma) * nu` with `W = A*phi_x + B*phi_x^2 + C*I`. The
/// coefficients follow the standard similarity-group expansion and reduce to
/// the SE(3) left Jacobian at `sigma = 0`.
pub fn exp_sim3(xi: &TwistSim3) -> PoseSim3 {
    let rotation = exp_so3(&xi.phi);
    let scale = xi.sigma.exp();
    let w = sim3_w_matrix(&xi.phi, xi.sigma);
    PoseSim3 { rotation, translation: w * xi.nu, scale }
}

fn sim3_w_matrix(phi: &Vec3, sigma: f64) -> Mat3 {
    let theta_sq = phi.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(phi);

    // C = (e^s - 1)/s; exp_m1 keeps it accurate down to s = 0.
    let c = if sigma == 0.0 { 1.0 } else { sigma.exp_m1() / sigma };

    let (a, b);
    if theta < SMALL_ANGLE {
        if sigma.abs() < SMALL_ANGLE {
            a = 0.5 + sigma / 3.0 - theta_sq / 24.0;
            b = 1.0 / 6.0 + sigma / 8.0 - theta_sq / 120.0;
        } else {
            let scale = sigma.exp();
            let sigma_sq = sigma * sigma;
            a = ((sigma - 1.0) * scale + 1.0) / sigma_sq;
            b = ((0.5 * sigma_sq - sigma + 1.0) * scale - 1.0) / (sigma_sq * sigma);
        }
    } else {
        let sin_t = theta.sin();
        let cos_t = theta.cos();
        if sigma.abs() < SMALL_ANGLE {
            // sigma -> 0 limit (SE(3) left Jacobian) plus first-order sigma term
            a = (1.0 - cos_t) / theta_sq + sigma * (sin_t - theta * cos_t) / (theta_sq * theta);
            b = (theta - sin_t) / (theta_sq * theta)
                + sigma * (theta_sq / 2.0 + 1.0 - cos_t - theta * sin_t)
                    / (theta_sq * theta_sq);
        } else {
            let scale = sigma.exp();
            let denom = theta_sq + sigma * sigma;
            a = (scale * sin_t * sigma + (1.0 - scale * cos_t) * theta) / (theta * denom);
            b = (c - ((scale * cos_t - 1.0) * sigma + scale * sin_t * theta) / denom) / theta_sq;
        }
    }
    Mat3::identity() * c + k * a + k * k * b
}

/// Left-perturbation Jacobian of the transformed point w.r.t. the Sim(3)
/// twist: `d(exp(delta) * x)/d(delta) = [I | -x_x | x]` at `delta = 0`,
/// with `x` already expressed in the target (object) frame.
pub fn point_jacobian_sim3(x_obj: &Vec3) -> Mat3x7 {
    let mut jac = Mat3x7::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(x_obj)));
    jac.fixed_view_mut::<3, 1>(0, 6).copy_from(x_obj);
    jac
}

/// Inverse of the SE(3) left Jacobian, twist ordered `[nu; phi]`.
///
/// Block form `[[Jl_inv, -Jl_inv Q Jl_inv], [0, Jl_inv]]` with the standard
/// coupling matrix `Q(nu, phi)`.
pub fn left_jacobian_inv_se3(xi: &Vec6) -> Mat6 {
    let nu = Vec3::new(xi[0], xi[1], xi[2]);
    let phi = Vec3::new(xi[3], xi[4], xi[5]);
    let jl_inv = left_jacobian_inv_so3(&phi);
    let q = se3_q_matrix(&nu, &phi);
    let top_right = -jl_inv * q * jl_inv;
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl_inv);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&top_right);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl_inv);
    out
}

/// Translation/rotation coupling block of the SE(3) left Jacobian.
fn se3_q_matrix(nu: &Vec3, phi: &Vec3) -> Mat3 {
    let nx = skew(nu);
    let px = skew(phi);
    let theta_sq = phi.norm_squared();

    let (c1, c2, c3);
    if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        c1 = 1.0 / 6.0 - theta_sq / 120.0;
        c2 = -1.0 / 24.0 + theta_sq / 720.0;
        c3 = -1.0 / 30.0;
    } else {
        let theta = theta_sq.sqrt();
        let theta_4 = theta_sq * theta_sq;
        let sin_t = theta.sin();
        let cos_t = theta.cos();
        c1 = (theta - sin_t) / (theta_sq * theta);
        c2 = -(1.0 - theta_sq / 2.0 - cos_t) / theta_4;
        c3 = 0.5 * (c2 + 3.0 * (theta - sin_t - theta_sq * theta / 6.0) / (theta_4 * theta));
    }

    let px_nx = px * nx;
    let nx_px = nx * px;
    let px_nx_px = px_nx * px;
    nx * 0.5
        + (px_nx + nx_px + px_nx_px) * c1
        + (px * px_nx + nx_px * px - px_nx_px * 3.0) * c2
        + (px_nx_px * px + px * px_nx_px) * c3
}

/// Rotation matrix to unit quaternion `(qx, qy, qz, qw)`, w non-negative.
pub fn rotation_to_quaternion(rot: &Mat3) -> Vector4<f64> {
    let trace = rot.trace();
    let (x, y, z, w);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (rot[(2, 1)] - rot[(1, 2)]) / s;
        y = (rot[(0, 2)] - rot[(2, 0)]) / s;
        z = (rot[(1, 0)] - rot[(0, 1)]) / s;
    } else if rot[(0, 0)] > rot[(1, 1)] && rot[(0, 0)] > rot[(2, 2)] {
        let s = (1.0 + rot[(0, 0)] - rot[(1, 1)] - rot[(2, 2)]).sqrt() * 2.0;
        w = (rot[(2, 1)] - rot[(1, 2)]) / s;
        x = 0.25 * s;
        y = (rot[(0, 1)] + rot[(1, 0)]) / s;
        z = (rot[(0, 2)] + rot[(2, 0)]) / s;
    } else if rot[(1, 1)] > rot[(2, 2)] {
        let s = (1.0 + rot[(1, 1)] - rot[(0, 0)] - rot[(2, 2)]).sqrt() * 2.0;
        w = (rot[(0, 2)] - rot[(2, 0)]) / s;
        x = (rot[(0, 1)] + rot[(1, 0)]) / s;
        y = 0.25 * s;
        z = (rot[(1, 2)] + rot[(2, 1)]) / s;
    } else {
        let s = (1.0 + rot[(2, 2)] - rot[(0, 0)] - rot[(1, 1)]).sqrt() * 2.0;
        w = (rot[(1, 0)] - rot[(0, 1)]) / s;
        x = (rot[(0, 2)] + rot[(2, 0)]) / s;
        y = (rot[(1, 2)] + rot[(2, 1)]) / s;
        z = 0.25 * s;
    }
    if w < 0.0 {
        Vector4::new(-x, -y, -z, -w)
    } else {
        Vector4::new(x, y, z, w)
    }
}

/// Unit quaternion `(qx, qy, qz, qw)` to rotation matrix.
pub fn quaternion_to_rotation(q: &Vector4<f64>) -> Mat3 {
    let n = q.norm();
    let (x, y, z, w) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}
