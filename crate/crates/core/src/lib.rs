//! Prior-based object pose and shape estimation.
//!
//! The library fits a latent shape code and a Sim(3) object pose to sparse
//! surface observations and rendered-depth/silhouette constraints with a
//! Gauss-Newton solver, and maintains an object-level factor graph over
//! camera poses, object poses and point landmarks. A deterministic synthetic
//! scene generator provides ground truth for end-to-end verification.
//!
//! Module map:
//! - [`lie`]: Sim(3)/SE(3)/SO(3) types, exp/log maps, perturbation Jacobians
//! - [`prior`]: analytic latent-code SDF decoder with closed-form gradients
//! - [`mesh`]: marching-cubes extraction, OBJ export, surface sampling
//! - [`render`]: differentiable SDF depth renderer
//! - [`residuals`]: residual families and their analytic Jacobians
//! - [`solver`]: Gauss-Newton pose+shape fit and a first-order baseline
//! - [`simkit`]: synthetic scenes, observations, odometry noise
//! - [`graph`]: data association and joint bundle adjustment
//! - [`pipeline`]: sequential SLAM loop tying the modules together
//! - [`metrics`]: pose/shape/trajectory error metrics
//! - [`scene_io`]: scene/frame/depth-map/trajectory file formats
//! - [`checks`]: finite-difference verification of every analytic Jacobian

pub mod checks;
pub mod graph;
pub mod lie;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod render;
pub mod residuals;
pub mod scene_io;
pub mod simkit;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rotation angle within {margin:.1e} of pi: log map branch is ambiguous")]
    NearPiRotation { margin: f64 },

    #[error("object is behind the camera (center depth {depth:.4} m)")]
    BehindCamera { depth: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure in {module}: {detail}")]
    Numerical { module: &'static str, detail: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
