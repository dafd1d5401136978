use std::f64::consts::PI;

use super::factorial;
use super::rotation::{norm3, Rotation};
use super::wigner::wigner_d;
use crate::error::{Error, Result};

/// Real spherical harmonics orthonormal over the unit sphere, up to `l_max`.
///
/// For `m > 0` the harmonic is `√2 N P_l^m(cos θ) cos(mφ)`, for `m < 0` it is
/// `√2 N P_l^|m|(cos θ) sin(|m|φ)`, with `P_l^m` taken without the
/// Condon-Shortley phase. Evaluation uses the polynomial form in `(x, y, z)`
/// so no angles are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RealSphericalHarmonicBasis {
    pub l_max: usize,
}

impl RealSphericalHarmonicBasis {
    pub fn new(l_max: usize) -> Self {
        Self { l_max }
    }

    /// All orders `0..=l_max` for the direction of `v`, which need not be unit length.
    pub fn eval_all(&self, v: [f64; 3]) -> Result<Vec<Vec<f64>>> {
        let n = norm3(v);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroVector);
        }
        let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
        let lmax = self.l_max;

        // q[l][m] = d^m P_l / dz^m, the associated Legendre factor with sin^m θ removed.
        let mut q = vec![vec![0.0; lmax + 1]; lmax + 1];
        for m in 0..=lmax {
            q[m][m] = if m == 0 {
                1.0
            } else {
                (2 * m - 1) as f64 * q[m - 1][m - 1]
            };
            if m < lmax {
                q[m + 1][m] = (2 * m + 1) as f64 * z * q[m][m];
            }
            for l in (m + 2)..=lmax {
                q[l][m] = ((2 * l - 1) as f64 * z * q[l - 1][m] - (l + m - 1) as f64 * q[l - 2][m])
                    / (l - m) as f64;
            }
        }

        // (x + iy)^m = sin^m θ e^{imφ}
        let mut cos_part = vec![1.0; lmax + 1];
        let mut sin_part = vec![0.0; lmax + 1];
        for m in 1..=lmax {
            cos_part[m] = cos_part[m - 1] * x - sin_part[m - 1] * y;
            sin_part[m] = sin_part[m - 1] * x + cos_part[m - 1] * y;
        }

        let out = (0..=lmax)
            .map(|l| {
                let mut row = vec![0.0; 2 * l + 1];
                for m in 0..=l {
                    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial((l - m) as i64)
                        / factorial((l + m) as i64))
                    .sqrt();
                    if m == 0 {
                        row[l] = norm * q[l][0];
                    } else {
                        let k = std::f64::consts::SQRT_2 * norm * q[l][m];
                        row[l + m] = k * cos_part[m];
                        row[l - m] = k * sin_part[m];
                    }
                }
                row
            })
            .collect();
        Ok(out)
    }

    pub fn eval(&self, l: usize, v: [f64; 3]) -> Result<Vec<f64>> {
        if l > self.l_max {
            return Err(Error::invalid(
                "spherical harmonics",
                format!("order {l} exceeds l_max {}", self.l_max),
            ));
        }
        Ok(RealSphericalHarmonicBasis::new(l).eval_all(v)?.swap_remove(l))
    }
}

/// The `2l + 1` real spherical harmonics of order `l` at the direction of `v`.
pub fn real_spherical_harmonics(l: usize, v: [f64; 3]) -> Result<Vec<f64>> {
    RealSphericalHarmonicBasis::new(l).eval(l, v)
}

/// `‖Y(R r̂) − D(R) Y(r̂)‖₂`.
pub fn sh_equivariance_residual(l: usize, rotation: &Rotation, v: [f64; 3]) -> Result<f64> {
    let rotated = real_spherical_harmonics(l, rotation.apply(v))?;
    let base = real_spherical_harmonics(l, v)?;
    let d = wigner_d(l, rotation);
    let transformed = d.apply(&base);
    Ok(rotated
        .iter()
        .zip(&transformed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
