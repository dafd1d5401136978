use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledSample, TaskKind, Target};
use super::sample_seed;
use crate::layers::PointCloud;
use crate::so3::CgTable;

pub const MIN_POINTS: usize = 2;
pub const MAX_POINTS: usize = 10;
pub const MASS_RANGE: (f64, f64) = (0.5, 2.0);
pub const GRAVITY_CUBE: f64 = 4.0;
pub const GRAVITY_MIN_DISTANCE: f64 = 0.5;
pub const INERTIA_CUBE: f64 = 1.0;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Attractive Newtonian acceleration with `G = 1`:
/// `a_p = Σ_{n≠p} m_n (r_n − r_p) / |r_n − r_p|³`.
pub fn gravity_accelerations(positions: &[[f64; 3]], masses: &[f64]) -> Vec<[f64; 3]> {
    positions
        .iter()
        .enumerate()
        .map(|(p, &rp)| {
            let mut a = [0.0; 3];
            for (n, (&rn, &m)) in positions.iter().zip(masses).enumerate() {
                if n == p {
                    continue;
                }
                let d = sub(rn, rp);
                let r = norm(d);
                let k = m / (r * r * r);
                for i in 0..3 {
                    a[i] += k * d[i];
                }
            }
            a
        })
        .collect()
}

/// `I_ij = Σ_p m_p [(r·r) δ_ij − r_i r_j]` with `r = r_p − origin`.
pub fn inertia_tensor(positions: &[[f64; 3]], masses: &[f64], origin: [f64; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (&p, &m) in positions.iter().zip(masses) {
        let r = sub(p, origin);
        let rr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += m * (if i == j { rr } else { 0.0 } - r[i] * r[j]);
            }
        }
    }
    out
}

fn uniform_cube<R: Rng + ?Sized>(rng: &mut R, side: f64) -> [f64; 3] {
    let h = 0.5 * side;
    [0; 3].map(|_| rng.random_range(-h..h))
}

fn min_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(norm(sub(points[i], points[j])));
        }
    }
    best
}

pub fn gen_gravity(seed: u64) -> LabeledSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(MIN_POINTS..=MAX_POINTS);
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(MASS_RANGE.0..=MASS_RANGE.1)).collect();
    let positions = loop {
        let p: Vec<[f64; 3]> = (0..n).map(|_| uniform_cube(&mut rng, GRAVITY_CUBE)).collect();
        if min_pairwise(&p) >= GRAVITY_MIN_DISTANCE {
            break p;
        }
    };
    let target = gravity_accelerations(&positions, &masses);
    LabeledSample {
        task: TaskKind::Gravity,
        seed,
        cloud: PointCloud::new(positions).and_then(|c| c.with_masses(masses)).expect("generated cloud is valid"),
        query: None,
        shape: None,
        target: Target::Vectors(target),
    }
}

/// Point 0 is the query point and carries mass 0; the tensor is taken about it.
pub fn gen_inertia(seed: u64) -> LabeledSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(MIN_POINTS..=MAX_POINTS);
    let query = uniform_cube(&mut rng, INERTIA_CUBE);
    let mut positions = vec![query];
    let mut masses = vec![0.0];
    for _ in 0..n {
        positions.push(uniform_cube(&mut rng, INERTIA_CUBE));
        masses.push(rng.random_range(MASS_RANGE.0..=MASS_RANGE.1));
    }
    let target = inertia_tensor(&positions[1..], &masses[1..], query);
    LabeledSample {
        task: TaskKind::Inertia,
        seed,
        cloud: PointCloud::new(positions).and_then(|c| c.with_masses(masses)).expect("generated cloud is valid"),
        query: Some(0),
        shape: None,
        target: Target::Matrix(target),
    }
}

pub fn gen_gravity_set(seed: u64, count: usize) -> Vec<LabeledSample> {
    (0..count as u64).map(|i| gen_gravity(sample_seed(seed, i))).collect()
}

pub fn gen_inertia_set(seed: u64, count: usize) -> Vec<LabeledSample> {
    (0..count as u64).map(|i| gen_inertia(sample_seed(seed, i))).collect()
}

/// Average over samples of the smallest query-to-mass distance.
pub fn mean_min_query_distance(samples: &[LabeledSample]) -> f64 {
    let mins: Vec<f64> = samples
        .iter()
        .filter_map(|s| {
            let q = s.query?;
            let p = s.cloud.positions();
            (0..p.len()).filter(|&i| i != q).map(|i| norm(sub(p[i], p[q]))).reduce(f64::min)
        })
        .collect();
    mins.iter().sum::<f64>() / mins.len().max(1) as f64
}

/// `k` in `Y^(2)_m(r̂) = k ⟨E_m, r̂ r̂ᵀ⟩`.
pub fn l2_tensor_factor() -> f64 {
    (15.0 / (8.0 * PI)).sqrt()
}

/// Orthonormal symmetric traceless basis `E_m`, `m = −2..2`, matching the
/// order-2 harmonics.
pub fn traceless_basis() -> [[[f64; 3]; 3]; 5] {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let b = 1.0 / 6f64.sqrt();
    [
        [[0.0, a, 0.0], [a, 0.0, 0.0], [0.0, 0.0, 0.0]],
        [[0.0, 0.0, 0.0], [0.0, 0.0, a], [0.0, a, 0.0]],
        [[-b, 0.0, 0.0], [0.0, -b, 0.0], [0.0, 0.0, 2.0 * b]],
        [[0.0, 0.0, a], [0.0, 0.0, 0.0], [a, 0.0, 0.0]],
        [[a, 0.0, 0.0], [0.0, -a, 0.0], [0.0, 0.0, 0.0]],
    ]
}

/// `M = s · I/√3 + Σ_m t_m E_m`.
pub fn assemble_symmetric(s: f64, t: [f64; 5]) -> [[f64; 3]; 3] {
    let e = traceless_basis();
    let iso = s / 3f64.sqrt();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = if i == j { iso } else { 0.0 } + (0..5).map(|k| t[k] * e[k][i][j]).sum::<f64>();
        }
    }
    m
}

/// Inverse of [`assemble_symmetric`] on symmetric matrices.
pub fn decompose_symmetric(m: &[[f64; 3]; 3]) -> (f64, [f64; 5]) {
    let e = traceless_basis();
    let s = (m[0][0] + m[1][1] + m[2][2]) / 3f64.sqrt();
    let t = [0, 1, 2, 3, 4].map(|k| (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| e[k][i][j] * m[i][j]).sum());
    (s, t)
}

/// Which learned radial function a curve refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RadialKey {
    pub task: TaskKind,
    pub l_filter: usize,
    pub l_in: usize,
}

/// Analytic radial profile in the textbook normalization:
/// gravity `−1/r²`; inertia `(2/3) r²` for order 0 and `−r²` for order 2.
pub fn analytic_radial(key: RadialKey, r: f64) -> Option<f64> {
    match (key.task, key.l_filter, key.l_in) {
        (TaskKind::Gravity, 1, 0) => Some(-1.0 / (r * r)),
        (TaskKind::Inertia, 0, 0) => Some(2.0 / 3.0 * r * r),
        (TaskKind::Inertia, 2, 0) => Some(-r * r),
        _ => None,
    }
}

/// Factor taking [`analytic_radial`] to the values a convolution with this
/// library's harmonic and coupling normalization must learn.
pub fn network_unit_factor(key: RadialKey, cg: &CgTable) -> Option<f64> {
    let y0 = 0.5 / PI.sqrt();
    let y1 = (3.0 / (4.0 * PI)).sqrt();
    match (key.task, key.l_filter, key.l_in) {
        (TaskKind::Gravity, 1, 0) => Some(1.0 / (y1 * cg.block(1, 1, 0)?.get(0, 0, 0))),
        // s = tr(I)/√3 = (2/√3) Σ m r² and the network gives C·Y⁰·R·m
        (TaskKind::Inertia, 0, 0) => Some(3f64.sqrt() / (y0 * cg.block(0, 0, 0)?.get(0, 0, 0))),
        (TaskKind::Inertia, 2, 0) => Some(1.0 / (l2_tensor_factor() * cg.block(2, 2, 0)?.get(0, 0, 0))),
        _ => None,
    }
}
