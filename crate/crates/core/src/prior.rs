//! Latent-code shape decoder: an analytic SDF family `G(x, z)` with
//! closed-form gradients in both the query point and the code.
//!
//! The decoder maps a code `z` through a fixed mixing matrix and a bounded
//! tanh squashing onto shape parameters (half-extents plus one family
//! parameter), then evaluates an analytic signed distance. `z = 0` decodes
//! to the canonical base shape exactly. Both families are distance bounds:
//! `|G|` never exceeds the true distance to the surface, which is what
//! sphere tracing and the renderer's depth-range bound rely on.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lie::{Mat3, Vec3};
use crate::{Error, Result};

/// Latent shape code; `z = 0` is the canonical shape.
pub type ShapeCode = DVector<f64>;

/// Number of decoded shape parameters: three half-extents plus one
/// family-specific parameter (roundness or exponent).
pub const PARAM_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    /// Box of the decoded half-extents with rounded edges. The SDF is exact.
    RoundedBox,
    /// p-norm ellipsoid `||x / h||_p = 1` with `p >= 2`. The SDF is a
    /// 1-Lipschitz conservative bound (exact for the isotropic p = 2 case).
    Superellipsoid,
}

/// Immutable decoder definition: family, canonical parameters, code mixing
/// matrix and per-parameter squashing bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSpec {
    pub family: ShapeFamily,
    /// Canonical half-extents decoded at z = 0.
    pub base_half_extents: Vec3,
    /// Canonical family parameter (roundness in meters, or p-norm exponent).
    pub base_shape_param: f64,
    /// Fixed code-to-parameter mixing matrix, PARAM_COUNT x k.
    pub mixing: DMatrix<f64>,
    /// Lower parameter bounds, length PARAM_COUNT.
    pub param_lo: DVector<f64>,
    /// Upper parameter bounds, length PARAM_COUNT.
    pub param_hi: DVector<f64>,
}

impl DecoderSpec {
    /// Rounded-box decoder with a default seeded mixing matrix and bounds of
    /// +/-40% around the base half-extents.
    pub fn rounded_box(base_half_extents: Vec3, roundness: f64, code_dim: usize, seed: u64) -> Self {
        let lo_r = 0.0;
        let hi_r = (base_half_extents.min() * 0.6 * 0.45).min(roundness.max(1e-3) * 4.0);
        let mut lo = DVector::zeros(PARAM_COUNT);
        let mut hi = DVector::zeros(PARAM_COUNT);
        for i in 0..3 {
            lo[i] = base_half_extents[i] * 0.6;
            hi[i] = base_half_extents[i] * 1.4;
        }
        lo[3] = lo_r;
        hi[3] = hi_r.max(roundness + 1e-6);
        DecoderSpec {
            family: ShapeFamily::RoundedBox,
            base_half_extents,
            base_shape_param: roundness,
            mixing: default_mixing(code_dim, seed),
            param_lo: lo,
            param_hi: hi,
        }
    }

    /// Superellipsoid decoder; `exponent >= 2` keeps the distance bound valid.
    pub fn superellipsoid(base_half_extents: Vec3, exponent: f64, code_dim: usize, seed: u64) -> Self {
        let mut lo = DVector::zeros(PARAM_COUNT);
        let mut hi = DVector::zeros(PARAM_COUNT);
        for i in 0..3 {
            lo[i] = base_half_extents[i] * 0.6;
            hi[i] = base_half_extents[i] * 1.4;
        }
        lo[3] = 2.0;
        hi[3] = (2.0 * exponent - 2.0).max(2.0);
        DecoderSpec {
            family: ShapeFamily::Superellipsoid,
            base_half_extents,
            base_shape_param: exponent,
            mixing: default_mixing(code_dim, seed),
            param_lo: lo,
            param_hi: hi,
        }
    }

    /// Replace the squashing bounds (tightening the reachable shape family).
    pub fn with_bounds(mut self, lo: DVector<f64>, hi: DVector<f64>) -> Self {
        self.param_lo = lo;
        self.param_hi = hi;
        self
    }

    pub fn code_dim(&self) -> usize {
        self.mixing.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixing.nrows() != PARAM_COUNT
            || self.param_lo.len() != PARAM_COUNT
            || self.param_hi.len() != PARAM_COUNT
        {
            return Err(Error::InvalidParameter(
                "decoder spec dimension mismatch".into(),
            ));
        }
        for i in 0..3 {
            if self.param_lo[i] <= 0.0 {
                return Err(Error::InvalidParameter(
                    "half-extent lower bounds must be positive".into(),
                ));
            }
        }
        for i in 0..PARAM_COUNT {
            if self.param_hi[i] < self.param_lo[i] {
                return Err(Error::InvalidParameter("param_hi below param_lo".into()));
            }
            let base = self.base_param(i);
            if base < self.param_lo[i] || base > self.param_hi[i] {
                return Err(Error::InvalidParameter(format!(
                    "base parameter {i} outside its bounds"
                )));
            }
        }
        match self.family {
            ShapeFamily::RoundedBox => {
                // Core half-extents h - r must stay positive for every
                // reachable parameter combination.
                let min_lo_extent = self.param_lo.rows(0, 3).min();
                if self.param_hi[3] >= min_lo_extent {
                    return Err(Error::InvalidParameter(
                        "roundness upper bound reaches the smallest half-extent".into(),
                    ));
                }
                if self.param_lo[3] < 0.0 {
                    return Err(Error::InvalidParameter("roundness must be >= 0".into()));
                }
            }
            ShapeFamily::Superellipsoid => {
                if self.param_lo[3] < 2.0 {
                    return Err(Error::InvalidParameter(
                        "superellipsoid exponent must stay >= 2".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn base_param(&self, i: usize) -> f64 {
        if i < 3 {
            self.base_half_extents[i]
        } else {
            self.base_shape_param
        }
    }

    /// Per-parameter tanh amplitude; the symmetric reach inside (lo, hi).
    fn amplitude(&self, i: usize) -> f64 {
        let base = self.base_param(i);
        (base - self.param_lo[i]).min(self.param_hi[i] - base)
    }

    /// Decode the shape parameters for a code.
    pub fn decode_params(&self, code: &ShapeCode) -> DVector<f64> {
        let mixed = &self.mixing * code;
        DVector::from_fn(PARAM_COUNT, |i, _| {
            self.base_param(i) + self.amplitude(i) * mixed[i].tanh()
        })
    }

    /// Decode parameters together with their Jacobian w.r.t. the code.
    pub fn decode_params_with_grad(&self, code: &ShapeCode) -> (DVector<f64>, DMatrix<f64>) {
        let mixed = &self.mixing * code;
        let mut params = DVector::zeros(PARAM_COUNT);
        let mut jac = DMatrix::zeros(PARAM_COUNT, self.code_dim());
        for i in 0..PARAM_COUNT {
            let t = mixed[i].tanh();
            let amp = self.amplitude(i);
            params[i] = self.base_param(i) + amp * t;
            let slope = amp * (1.0 - t * t);
            for j in 0..self.code_dim() {
                jac[(i, j)] = slope * self.mixing[(i, j)];
            }
        }
        (params, jac)
    }

    /// Radius of a sphere containing every decodable shape; used by the
    /// renderer's depth-range computation.
    pub fn bounding_radius(&self) -> f64 {
        let hi = self.param_hi.rows(0, 3);
        (hi[0] * hi[0] + hi[1] * hi[1] + hi[2] * hi[2]).sqrt()
    }

    /// Per-axis half-extents of a box containing every decodable shape.
    pub fn bounding_half_extents(&self) -> Vec3 {
        Vec3::new(self.param_hi[0], self.param_hi[1], self.param_hi[2])
    }

    /// Lipschitz slope constant of the superellipsoid pseudo-SDF. Fixed from
    /// the spec bounds (not the decoded parameters) so it never exceeds the
    /// smallest reachable half-extent.
    fn slope(&self) -> f64 {
        self.param_lo.rows(0, 3).min()
    }

    /// Rotations mapping each family onto itself (both families are even in
    /// every coordinate): identity plus the three 180-degree axis flips.
    pub fn symmetry_rotations(&self) -> [Mat3; 4] {
        [
            Mat3::identity(),
            Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
            Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0)),
            Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)),
        ]
    }
}

/// Seeded dense mixing matrix; row norms scaled so codes of norm ~1 move
/// parameters without saturating the squashing.
fn default_mixing(code_dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.5 / (code_dim as f64).sqrt();
    DMatrix::from_fn(PARAM_COUNT, code_dim, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * scale
    })
}

/// Signed distance of the decoded shape at an object-frame point.
pub fn decode_sdf(x: &Vec3, code: &ShapeCode, spec: &DecoderSpec) -> f64 {
    let params = spec.decode_params(code);
    match spec.family {
        ShapeFamily::RoundedBox => rounded_box_sdf(x, &params).0,
        ShapeFamily::Superellipsoid => superellipsoid_sdf(x, &params, spec.slope()).0,
    }
}

/// SDF gradients w.r.t. the query point and the code.
///
/// At non-differentiable loci (box edge extensions, interior face-distance
/// ties, the center) the subgradient picked by lowest-index argmax
/// tie-breaking is returned.
pub fn decode_gradients(x: &Vec3, code: &ShapeCode, spec: &DecoderSpec) -> (Vec3, DVector<f64>) {
    let (params, dparams_dz) = spec.decode_params_with_grad(code);
    let (_, dx, dparams) = match spec.family {
        ShapeFamily::RoundedBox => rounded_box_sdf(x, &params),
        ShapeFamily::Superellipsoid => superellipsoid_sdf(x, &params, spec.slope()),
    };
    let dz = dparams_dz.transpose() * dparams;
    (dx, dz)
}

/// Value plus gradient in a single decode; the hot path of the solver.
pub fn decode_sdf_with_gradients(
    x: &Vec3,
    code: &ShapeCode,
    spec: &DecoderSpec,
) -> (f64, Vec3, DVector<f64>) {
    let (params, dparams_dz) = spec.decode_params_with_grad(code);
    let (value, dx, dparams) = match spec.family {
        ShapeFamily::RoundedBox => rounded_box_sdf(x, &params),
        ShapeFamily::Superellipsoid => superellipsoid_sdf(x, &params, spec.slope()),
    };
    let dz = dparams_dz.transpose() * dparams;
    (value, dx, dz)
}

fn sign_tiebreak(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Exact rounded-box SDF with gradients w.r.t. the point and the parameters
/// `[hx, hy, hz, roundness]`. The core box is `h - r` so the decoded
/// half-extents are the true outer extents.
fn rounded_box_sdf(x: &Vec3, params: &DVector<f64>) -> (f64, Vec3, DVector<f64>) {
    let r = params[3];
    let core = Vec3::new(params[0] - r, params[1] - r, params[2] - r);
    let q = Vec3::new(x.x.abs() - core.x, x.y.abs() - core.y, x.z.abs() - core.z);
    let m = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
    let outside = m.norm();

    let mut dx = Vec3::zeros();
    let mut dparams = DVector::zeros(PARAM_COUNT);
    if outside > 0.0 {
        let value = outside + q.x.max(q.y).max(q.z).min(0.0) - r;
        let mut dr = -1.0;
        for i in 0..3 {
            if m[i] > 0.0 {
                let g = m[i] / outside;
                dx[i] = sign_tiebreak(x[i]) * g;
                dparams[i] = -g;
                dr += g;
            }
        }
        dparams[3] = dr;
        (value, dx, dparams)
    } else {
        // Interior: distance to the nearest face plane; lowest-index argmax.
        let mut j = 0;
        for i in 1..3 {
            if q[i] > q[j] {
                j = i;
            }
        }
        let value = q[j] - r;
        dx[j] = sign_tiebreak(x[j]);
        dparams[j] = -1.0;
        // dq_j/dr = +1 cancels the trailing -r term exactly.
        dparams[3] = 0.0;
        (value, dx, dparams)
    }
}

/// Scaled p-norm pseudo-SDF `slope * (||x / h||_p - 1)` with gradients
/// w.r.t. the point and the parameters `[hx, hy, hz, p]`.
fn superellipsoid_sdf(x: &Vec3, params: &DVector<f64>, slope: f64) -> (f64, Vec3, DVector<f64>) {
    let h = Vec3::new(params[0], params[1], params[2]);
    let p = params[3];
    let u = Vec3::new(x.x / h.x, x.y / h.y, x.z / h.z);

    let mut dparams = DVector::zeros(PARAM_COUNT);
    let abs_u = [u.x.abs(), u.y.abs(), u.z.abs()];
    let sum_pow: f64 = abs_u.iter().map(|a| a.powf(p)).sum();
    if sum_pow == 0.0 {
        // Center: documented tie-break along +x.
        return (-slope, Vec3::new(slope / h.x, 0.0, 0.0), dparams);
    }
    let norm = sum_pow.powf(1.0 / p);
    let value = slope * (norm - 1.0);

    let mut dx = Vec3::zeros();
    let mut dlog_sum_dp = 0.0;
    for i in 0..3 {
        if abs_u[i] > 0.0 {
            // dN/du_i = sign(u_i) * (|u_i|/N)^(p-1)
            let dn_du = sign_tiebreak(u[i]) * (abs_u[i] / norm).powf(p - 1.0);
            dx[i] = slope * dn_du / h[i];
            dparams[i] = -slope * dn_du * u[i] / h[i];
            dlog_sum_dp += abs_u[i].powf(p) * abs_u[i].ln();
        }
    }
    // dN/dp = N * (-ln(S)/p^2 + (sum |u|^p ln|u|) / (p S))
    let dn_dp = norm * (-sum_pow.ln() / (p * p) + dlog_sum_dp / (p * sum_pow));
    dparams[3] = slope * dn_dp;
    (value, dx, dparams)
}


/// True when a query point sits close to one of the decoder's documented
/// non-smooth loci (branch boundaries, argmax ties, axis planes with an
/// active face, the center). Finite-difference Jacobian checks resample
/// such configurations.
pub fn near_nonsmooth_locus(x: &Vec3, code: &ShapeCode, spec: &DecoderSpec) -> bool {
    let params = spec.decode_params(code);
    let margin = 1e-4;
    match spec.family {
        ShapeFamily::RoundedBox => {
            let r = params[3];
            let core = Vec3::new(params[0] - r, params[1] - r, params[2] - r);
            let q = Vec3::new(x.x.abs() - core.x, x.y.abs() - core.y, x.z.abs() - core.z);
            if q.amax() < margin {
                return true;
            }
            if q.max() > 0.0 {
                for i in 0..3 {
                    if q[i].abs() < margin || (q[i] > 0.0 && x[i].abs() < margin) {
                        return true;
                    }
                }
            } else {
                let mut sorted = [q.x, q.y, q.z];
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                if sorted[0] - sorted[1] < margin {
                    return true;
                }
                let j = if q.x >= q.y && q.x >= q.z {
                    0
                } else if q.y >= q.z {
                    1
                } else {
                    2
                };
                if x[j].abs() < margin {
                    return true;
                }
            }
            false
        }
        ShapeFamily::Superellipsoid => {
            x.norm() < margin
                || x.x.abs() < margin
                || x.y.abs() < margin
                || x.z.abs() < margin
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_spec() -> DecoderSpec {
        DecoderSpec::rounded_box(Vec3::new(0.25, 0.1, 0.12), 0.02, 8, 7)
    }

    fn ellipsoid_spec() -> DecoderSpec {
        DecoderSpec::superellipsoid(Vec3::new(0.2, 0.12, 0.15), 2.4, 8, 9)
    }

    /// Sharp box: roundness pinned to zero so face SDF values are exact.
    fn sharp_box_spec() -> DecoderSpec {
        let mut spec = DecoderSpec::rounded_box(Vec3::new(1.0, 1.0, 1.0), 0.0, 8, 3);
        spec.param_lo[3] = 0.0;
        spec.param_hi[3] = 0.0;
        spec
    }

    /// Independent membership test, used as the sign oracle.
    fn inside_oracle(x: &Vec3, params: &DVector<f64>, family: ShapeFamily) -> bool {
        match family {
            ShapeFamily::RoundedBox => {
                let r = params[3];
                let core = Vec3::new(params[0] - r, params[1] - r, params[2] - r);
                let clamped = Vec3::new(
                    x.x.clamp(-core.x, core.x),
                    x.y.clamp(-core.y, core.y),
                    x.z.clamp(-core.z, core.z),
                );
                (x - clamped).norm() <= r
            }
            ShapeFamily::Superellipsoid => {
                let p = params[3];
                (x.x / params[0]).abs().powf(p)
                    + (x.y / params[1]).abs().powf(p)
                    + (x.z / params[2]).abs().powf(p)
                    <= 1.0
            }
        }
    }

    fn random_code(rng: &mut ChaCha8Rng, k: usize) -> ShapeCode {
        ShapeCode::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn specs_validate() {
        box_spec().validate().unwrap();
        ellipsoid_spec().validate().unwrap();
        sharp_box_spec().validate().unwrap();
    }

    #[test]
    fn zero_code_decodes_base_shape_exactly() {
        let spec = box_spec();
        let params = spec.decode_params(&ShapeCode::zeros(8));
        for i in 0..3 {
            assert_eq!(params[i], spec.base_half_extents[i]);
        }
        assert_eq!(params[3], spec.base_shape_param);
    }

    #[test]
    fn sharp_box_face_value() {
        let spec = sharp_box_spec();
        let s = decode_sdf(&Vec3::new(2.0, 0.0, 0.0), &ShapeCode::zeros(8), &spec);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn box_center_is_deepest_point() {
        let spec = sharp_box_spec();
        let s = decode_sdf(&Vec3::zeros(), &ShapeCode::zeros(8), &spec);
        assert_eq!(s, -1.0);
    }

    #[test]
    fn box_face_gradient_is_outward_normal() {
        let spec = sharp_box_spec();
        let (dx, _) = decode_gradients(&Vec3::new(2.0, 0.0, 0.0), &ShapeCode::zeros(8), &spec);
        assert_eq!(dx, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn center_gradient_uses_tiebreak() {
        let spec = sharp_box_spec();
        let (dx, _) = decode_gradients(&Vec3::zeros(), &ShapeCode::zeros(8), &spec);
        assert_eq!(dx, Vec3::new(1.0, 0.0, 0.0));

        let espec = ellipsoid_spec();
        let (dx, _) = decode_gradients(&Vec3::zeros(), &ShapeCode::zeros(8), &espec);
        assert!(dx.x > 0.0 && dx.y == 0.0 && dx.z == 0.0);
    }

    #[test]
    fn sign_agrees_with_membership_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [box_spec(), ellipsoid_spec()] {
            for _ in 0..2000 {
                let code = random_code(&mut rng, 8);
                let params = spec.decode_params(&code);
                let b = spec.bounding_half_extents() * 1.5;
                let x = Vec3::new(
                    rng.random_range(-b.x..b.x),
                    rng.random_range(-b.y..b.y),
                    rng.random_range(-b.z..b.z),
                );
                let s = decode_sdf(&x, &code, &spec);
                if s.abs() < 1e-9 {
                    continue; // on-surface: either sign acceptable
                }
                assert_eq!(
                    s < 0.0,
                    inside_oracle(&x, &params, spec.family),
                    "sign mismatch at {x:?} (sdf {s})"
                );
            }
        }
    }

    #[test]
    fn bounded_inside_known_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for spec in [box_spec(), ellipsoid_spec()] {
            let r_max = spec.bounding_radius();
            for _ in 0..500 {
                let code = random_code(&mut rng, 8);
                // Any point outside the bounding sphere must be outside the shape.
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let x = dir * r_max * rng.random_range(1.0..2.0);
                assert!(decode_sdf(&x, &code, &spec) > -1e-12);
            }
        }
    }

    #[test]
    fn lipschitz_bound_along_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for spec in [box_spec(), ellipsoid_spec()] {
            for _ in 0..200 {
                let code = random_code(&mut rng, 8);
                let b = spec.bounding_half_extents() * 1.4;
                let a = Vec3::new(
                    rng.random_range(-b.x..b.x),
                    rng.random_range(-b.y..b.y),
                    rng.random_range(-b.z..b.z),
                );
                let dir = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let step = 0.01;
                let s0 = decode_sdf(&a, &code, &spec);
                let s1 = decode_sdf(&(a + dir * step), &code, &spec);
                assert!(
                    (s1 - s0).abs() <= 1.05 * step + 1e-12,
                    "Lipschitz violation: {} over step {}",
                    (s1 - s0).abs(),
                    step
                );
            }
        }
    }

    /// Central finite differences of decode_sdf in x and z. Configurations
    /// too close to a non-smooth locus are resampled.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let h = 1e-6;
        for spec in [box_spec(), ellipsoid_spec()] {
            let mut checked = 0;
            while checked < 200 {
                let code = random_code(&mut rng, 8);
                let b = spec.bounding_half_extents() * 1.3;
                let x = Vec3::new(
                    rng.random_range(-b.x..b.x),
                    rng.random_range(-b.y..b.y),
                    rng.random_range(-b.z..b.z),
                );
                if near_nonsmooth_locus(&x, &code, &spec) {
                    continue;
                }
                let (dx, dz) = decode_gradients(&x, &code, &spec);
                for i in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    let fd =
                        (decode_sdf(&xp, &code, &spec) - decode_sdf(&xm, &code, &spec)) / (2.0 * h);
                    let scale = 1f64.max(dx[i].abs()).max(fd.abs());
                    assert!(
                        (dx[i] - fd).abs() / scale <= 1e-5,
                        "dG/dx[{i}] analytic {} vs fd {fd}",
                        dx[i]
                    );
                }
                for j in 0..8 {
                    let mut zp = code.clone();
                    let mut zm = code.clone();
                    zp[j] += h;
                    zm[j] -= h;
                    let fd =
                        (decode_sdf(&x, &zp, &spec) - decode_sdf(&x, &zm, &spec)) / (2.0 * h);
                    let scale = 1f64.max(dz[j].abs()).max(fd.abs());
                    assert!(
                        (dz[j] - fd).abs() / scale <= 1e-5,
                        "dG/dz[{j}] analytic {} vs fd {fd}",
                        dz[j]
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn mixing_matrix_is_deterministic() {
        let a = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.1), 0.02, 8, 42);
        let b = DecoderSpec::rounded_box(Vec3::new(0.2, 0.1, 0.1), 0.02, 8, 42);
        assert_eq!(a.mixing, b.mixing);
    }
}
