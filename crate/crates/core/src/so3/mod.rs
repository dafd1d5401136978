//! SO(3) numerics in the real basis.
//!
//! Component ordering is fixed once for the whole crate: an order-`l` object
//! has `2l + 1` components indexed by `m = -l..=l` ascending, so index `i`
//! holds `m = i - l`. The real spherical harmonics carry no Condon-Shortley
//! phase, which makes the order-1 harmonics proportional to `(y, z, x)`.
//! [`xyz_to_sh`] and [`sh_to_xyz`] convert between that ordering and plain
//! Cartesian vectors.

mod clebsch_gordan;
mod harmonics;
mod rotation;
mod wigner;

pub use clebsch_gordan::{
    cg_commutation_residual, cg_orthogonality_residual, complex_clebsch_gordan, CgBlock, CgRecord, CgTable,
};
pub use harmonics::{real_spherical_harmonics, sh_equivariance_residual, RealSphericalHarmonicBasis};
pub use rotation::Rotation;
pub use wigner::{wigner_d, wigner_d_least_squares, WignerD};

/// Default maximum rotation order used by every task.
pub const DEFAULT_L_MAX: usize = 2;

/// Position of Cartesian axis `x, y, z` inside an order-1 component vector.
const SH_OF_XYZ: [usize; 3] = [2, 0, 1];

/// Reorders a Cartesian `(x, y, z)` vector into order-1 component order `(y, z, x)`.
pub fn xyz_to_sh(v: [f64; 3]) -> [f64; 3] {
    [v[1], v[2], v[0]]
}

/// Inverse of [`xyz_to_sh`].
pub fn sh_to_xyz(v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (axis, &slot) in SH_OF_XYZ.iter().enumerate() {
        out[axis] = v[slot];
    }
    out
}

pub(crate) fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
