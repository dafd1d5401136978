use std::ops::Mul;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A proper rotation stored as a unit quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes `(w, x, y, z)`; the zero quaternion is rejected.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Right-handed rotation by `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = norm3(axis);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroVector);
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::from_quaternion(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Haar-uniform sample: four standard normals, normalized.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(r) = Self::from_quaternion(q[0], q[1], q[2], q[3]) {
                return r;
            }
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::random(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn quaternion(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let (a, b) = (self, other);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        Self::from_quaternion(w, x, y, z).expect("product of unit quaternions is nonzero")
    }

    pub fn inverse(&self) -> Rotation {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Row-major 3×3 rotation matrix acting on column vectors.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let Self { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_diff(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> f64 {
        (0..9)
            .map(|k| (a[k / 3][k % 3] - b[k / 3][k % 3]).abs())
            .fold(0.0, f64::max)
    }

    const EYE: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn zero_angle_is_identity() {
        let r = Rotation::from_axis_angle([0.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(r.quaternion(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.matrix(), EYE);
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let r = Rotation::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_2).unwrap();
        let v = r.apply([1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn angle_then_negative_angle_cancels() {
        let axis = [0.3, -1.2, 0.7];
        let a = Rotation::from_axis_angle(axis, 1.1).unwrap();
        let b = Rotation::from_axis_angle(axis, -1.1).unwrap();
        assert!(max_diff((a * b).matrix(), EYE) < 1e-12);
    }

    #[test]
    fn zero_axis_is_rejected() {
        assert!(matches!(
            Rotation::from_axis_angle([0.0; 3], 1.0),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn matches_rodrigues_formula() {
        let axis = [1.0, 2.0, -0.5];
        let theta: f64 = 0.83;
        let n = norm3(axis);
        let k = [axis[0] / n, axis[1] / n, axis[2] / n];
        let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        let mut expect = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let kk: f64 = (0..3).map(|l| kx[i][l] * kx[l][j]).sum();
                expect[i][j] = EYE[i][j] + theta.sin() * kx[i][j] + (1.0 - theta.cos()) * kk;
            }
        }
        let r = Rotation::from_axis_angle(axis, theta).unwrap();
        assert!(max_diff(r.matrix(), expect) < 1e-14);
    }

    #[test]
    fn seeded_samples_are_reproducible_and_valid() {
        assert_eq!(Rotation::from_seed(7), Rotation::from_seed(7));
        assert_ne!(Rotation::from_seed(7), Rotation::from_seed(8));
        let r = Rotation::from_seed(1) * Rotation::from_seed(2);
        let q = r.quaternion();
        assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        let m = r.matrix();
        let mut mmt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                mmt[i][j] = (0..3).map(|k| m[i][k] * m[j][k]).sum();
            }
        }
        assert!(max_diff(mmt, EYE) < 1e-12);
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composition_matches_matrix_product() {
        let a = Rotation::from_seed(11);
        let b = Rotation::from_seed(12);
        let (ma, mb) = (a.matrix(), b.matrix());
        let mut prod = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                prod[i][j] = (0..3).map(|k| ma[i][k] * mb[k][j]).sum();
            }
        }
        assert!(max_diff((a * b).matrix(), prod) < 1e-14);
    }

    #[test]
    fn full_turn_is_identity() {
        let r = Rotation::from_axis_angle([0.2, 0.4, 0.1], 2.0 * PI).unwrap();
        assert!(max_diff(r.matrix(), EYE) < 1e-14);
    }
}
