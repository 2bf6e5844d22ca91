//! Fitting an articulated proxy body inside a dressed mesh.

pub mod fit;
pub mod model;

pub use fit::{chamfer, fit, penetration, FitConfig, FitRecord, FitResult, LossTerms, Target};
pub use model::{body_mesh, BodyParams, Pose, ProxyBody, NUM_BETA, NUM_JOINTS, NUM_PARAMS, NUM_THETA};
