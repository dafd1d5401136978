use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;

use super::clebsch_gordan::CgTable;
use super::harmonics::RealSphericalHarmonicBasis;
use super::rotation::Rotation;

/// Real Wigner D-matrix of order `l`, row-major `(2l+1) × (2l+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerD {
    l: usize,
    data: Vec<f64>,
}

/// Orders served from the shared table; higher orders build their own.
const SHARED_L_MAX: usize = 4;

fn shared_table() -> &'static CgTable {
    static TABLE: OnceLock<CgTable> = OnceLock::new();
    TABLE.get_or_init(|| CgTable::new(SHARED_L_MAX))
}

impl WignerD {
    pub fn identity(l: usize) -> Self {
        let dim = 2 * l + 1;
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { l, data }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim() + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        assert_eq!(v.len(), dim, "WignerD::apply: vector length");
        (0..dim)
            .map(|i| (0..dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &WignerD) -> WignerD {
        assert_eq!(self.l, other.l);
        let dim = self.dim();
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.get(i, k);
                for j in 0..dim {
                    data[i * dim + j] += a * other.get(k, j);
                }
            }
        }
        WignerD { l: self.l, data }
    }

    pub fn transpose(&self) -> WignerD {
        let dim = self.dim();
        let data = (0..dim * dim)
            .map(|idx| self.get(idx % dim, idx / dim))
            .collect();
        WignerD { l: self.l, data }
    }

    pub fn max_abs_diff(&self, other: &WignerD) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Order 1: the rotation matrix with rows and columns permuted into `(y, z, x)`.
    fn order_one(rotation: &Rotation) -> Self {
        const P: [usize; 3] = [1, 2, 0];
        let m = rotation.matrix();
        let data = (0..9).map(|idx| m[P[idx / 3]][P[idx % 3]]).collect();
        Self { l: 1, data }
    }

    /// Every order `0..=l_max`, by the recursion `D^(l) = C (D^(l−1) ⊗ D^(1)) Cᵀ`
    /// with `C` the `(l−1) ⊗ 1 → l` coupling block of `table`.
    pub fn all_orders(l_max: usize, rotation: &Rotation, table: &CgTable) -> Vec<WignerD> {
        assert!(
            table.l_max() >= l_max,
            "Clebsch-Gordan table covers l <= {}, need {l_max}",
            table.l_max()
        );
        let mut out = vec![WignerD::identity(0)];
        if l_max == 0 {
            return out;
        }
        if *rotation == Rotation::identity() {
            out.extend((1..=l_max).map(WignerD::identity));
            return out;
        }
        let d1 = WignerD::order_one(rotation);
        out.push(d1.clone());
        for l in 2..=l_max {
            let prev = &out[l - 1];
            let c = table
                .block(l, l - 1, 1)
                .expect("(l-1) ⊗ 1 → l is always admissible");
            let (dim, dp) = (2 * l + 1, 2 * l - 1);
            // t[m][a'][b'] = Σ_{a,b} C[m][a][b] P[a][a'] D1[b][b']
            let mut t = vec![0.0; dim * dp * 3];
            for m in 0..dim {
                for a in 0..dp {
                    for b in 0..3 {
                        let cab = c.get(m, a, b);
                        if cab == 0.0 {
                            continue;
                        }
                        for ap in 0..dp {
                            let pa = cab * prev.get(a, ap);
                            for bp in 0..3 {
                                t[(m * dp + ap) * 3 + bp] += pa * d1.get(b, bp);
                            }
                        }
                    }
                }
            }
            let mut data = vec![0.0; dim * dim];
            for m in 0..dim {
                for mp in 0..dim {
                    let mut acc = 0.0;
                    for ap in 0..dp {
                        for bp in 0..3 {
                            acc += t[(m * dp + ap) * 3 + bp] * c.get(mp, ap, bp);
                        }
                    }
                    data[m * dim + mp] = acc;
                }
            }
            out.push(WignerD { l, data });
        }
        out
    }
}

/// Real Wigner D-matrix of order `l` for `rotation`.
pub fn wigner_d(l: usize, rotation: &Rotation) -> WignerD {
    match l {
        0 => WignerD::identity(0),
        1 if *rotation == Rotation::identity() => WignerD::identity(1),
        1 => WignerD::order_one(rotation),
        l if l <= SHARED_L_MAX => WignerD::all_orders(l, rotation, shared_table()).swap_remove(l),
        l => WignerD::all_orders(l, rotation, &CgTable::new(l)).swap_remove(l),
    }
}

/// Independent estimate of `D^(l)` from the harmonics alone: the least-squares
/// solution of `Y(R r̂_k) = D Y(r̂_k)` over `4l + 2` random directions.
pub fn wigner_d_least_squares<R: Rng + ?Sized>(l: usize, rotation: &Rotation, rng: &mut R) -> WignerD {
    let dim = 2 * l + 1;
    let samples = 4 * l + 2;
    let basis = RealSphericalHarmonicBasis::new(l);
    let mut before = DMatrix::<f64>::zeros(dim, samples);
    let mut after = DMatrix::<f64>::zeros(dim, samples);
    for k in 0..samples {
        let r = loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-3 && n <= 1.0 {
                break v;
            }
        };
        let y0 = basis.eval(l, r).expect("nonzero direction");
        let y1 = basis.eval(l, rotation.apply(r)).expect("nonzero direction");
        for m in 0..dim {
            before[(m, k)] = y0[m];
            after[(m, k)] = y1[m];
        }
    }
    let gram = &before * before.transpose();
    let inv = gram
        .try_inverse()
        .expect("harmonics at 4l+2 random directions span the order-l space");
    let d = &after * before.transpose() * inv;
    let data = (0..dim * dim).map(|idx| d[(idx / dim, idx % dim)]).collect();
    WignerD { l, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn order_zero_is_one() {
        let d = wigner_d(0, &Rotation::from_seed(3));
        assert_eq!(d.data(), &[1.0]);
    }

    #[test]
    fn order_one_is_permuted_rotation_matrix() {
        let r = Rotation::from_seed(5);
        let d = wigner_d(1, &r);
        let m = r.matrix();
        // y, z, x ordering
        assert_eq!(d.get(0, 0), m[1][1]);
        assert_eq!(d.get(0, 2), m[1][0]);
        assert_eq!(d.get(2, 1), m[0][2]);
    }

    #[test]
    fn full_turn_gives_identity_at_order_two() {
        for axis in [[0.0, 0.0, 1.0], [1.0, 1.0, 0.2], [-0.3, 0.5, 0.9]] {
            let r = Rotation::from_axis_angle(axis, 2.0 * PI).unwrap();
            assert!(wigner_d(2, &r).max_abs_diff(&WignerD::identity(2)) < 1e-10);
        }
    }

    #[test]
    fn recursion_agrees_with_least_squares_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for l in 0..=4 {
            for _ in 0..5 {
                let r = Rotation::random(&mut rng);
                let exact = wigner_d(l, &r);
                let fit = wigner_d_least_squares(l, &r, &mut rng);
                assert!(exact.max_abs_diff(&fit) < 1e-9, "l={l}");
            }
        }
    }

    #[test]
    fn high_order_builds_its_own_table() {
        let r = Rotation::from_seed(9);
        let d = wigner_d(5, &r);
        let ddt = d.matmul(&d.transpose());
        assert!(ddt.max_abs_diff(&WignerD::identity(5)) < 1e-10);
    }
}
