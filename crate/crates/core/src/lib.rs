//! SO(3)-equivariant point-cloud networks.
//!
//! Point-cloud layers that are equivariant to 3D rotations, translations and
//! permutations, built on:
//!
//! * [`so3`]: rotations, real spherical harmonics, real Clebsch-Gordan
//!   coefficients and real Wigner D-matrices,
//! * [`autodiff`]: a reverse-mode tape over dense `f64` arrays,
//! * [`layers`]: point convolution, self-interaction, norm nonlinearity,
//!   concatenation, pooling and vote aggregation,
//! * [`tasks`]: the Tetris, gravity, moment-of-inertia and missing-point
//!   demonstrations,
//! * [`equivariance`]: a property-check engine for any point-cloud map.

pub mod autodiff;
pub mod equivariance;
pub mod error;
pub mod layers;
pub mod so3;
pub mod tasks;

pub use autodiff::{NdArray, Tape, Var};
pub use error::{Error, Result};

pub use layers::{FeatureMap, Features, PointCloud};
pub use so3::{CgTable, Rotation, WignerD};
