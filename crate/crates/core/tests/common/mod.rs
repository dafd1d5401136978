#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tfn::autodiff::ParamStore;
use tfn::{Features, NdArray, PointCloud, Tape, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Sphere quadrature: Gauss-Legendre in cos θ times the trapezoid rule in φ.
pub fn sphere_quadrature(n_theta: usize, n_phi: usize) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::new();
    for (z, w) in gauss_legendre(n_theta) {
        let s = (1.0 - z * z).sqrt();
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            out.push(([s * phi.cos(), s * phi.sin(), z], w * 2.0 * PI / n_phi as f64));
        }
    }
    out
}

pub fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return v.map(|c| c / n);
        }
    }
}

pub fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [0; 3].map(|_| rng.random_range(-1.5..1.5))).collect()).unwrap()
}

pub fn random_features<R: Rng>(rng: &mut R, n: usize, channels: &BTreeMap<usize, usize>) -> Features {
    Features::per_point(
        channels
            .iter()
            .map(|(&l, &c)| (l, NdArray::randn(&[n, c, 2 * l + 1], 1.0, rng)))
            .collect(),
    )
    .unwrap()
}

pub fn random_array<R: Rng>(rng: &mut R, shape: &[usize]) -> NdArray {
    NdArray::randn(shape, 1.0, rng)
}

/// `max_i |analytic_i − fd_i| / max(max_i |analytic_i|, 1e-12)` for the
/// scalar `Σ w ⊙ f(inputs)` with a fixed random `w`. `f` builds the output
/// on a fresh tape from leaf parameters named `x0`, `x1`, …
pub fn gradcheck<F>(inputs: &[NdArray], h: f64, seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let weights = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, a)| t.param(format!("x{i}"), a.clone())).collect();
        let out = f(&mut t, &vars);
        NdArray::randn(t.shape(out), 1.0, &mut rng(seed))
    };
    let eval = |xs: &[NdArray]| -> (f64, Option<BTreeMap<String, NdArray>>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().enumerate().map(|(i, a)| t.param(format!("x{i}"), a.clone())).collect();
        let out = f(&mut t, &vars);
        let w = t.constant(weights.clone());
        let prod = t.mul(out, w).unwrap();
        let loss = t.sum_all(prod).unwrap();
        let value = t.value(loss).item();
        (value, Some(t.backward(loss).unwrap().by_name()))
    };
    let (_, grads) = eval(inputs);
    let grads = grads.unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1e-12;
    for (i, x) in inputs.iter().enumerate() {
        let g = &grads[&format!("x{i}")];
        for k in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= h;
            let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            worst = worst.max((fd - g.data()[k]).abs());
            scale = scale.max(g.data()[k].abs());
        }
    }
    worst / scale
}

/// Relative error of the directional derivative of `loss(params)` along a
/// random direction: `|g·v − (L(p + hv) − L(p − hv)) / 2h| / |g·v|`.
pub fn directional_check<F>(params: &ParamStore, h: f64, seed: u64, loss: F) -> f64
where
    F: Fn(&ParamStore) -> (f64, BTreeMap<String, NdArray>),
{
    let mut r = rng(seed);
    let dir: BTreeMap<String, NdArray> = params.iter().map(|(k, v)| (k.clone(), NdArray::randn(v.shape(), 1.0, &mut r))).collect();
    let shifted = |sign: f64| {
        let mut p = params.clone();
        for (k, d) in &dir {
            let v = p.get_mut(k).unwrap();
            for (a, b) in v.data_mut().iter_mut().zip(d.data()) {
                *a += sign * h * b;
            }
        }
        p
    };
    let (_, grads) = loss(params);
    let analytic: f64 = dir
        .iter()
        .map(|(k, d)| grads[k].data().iter().zip(d.data()).map(|(g, v)| g * v).sum::<f64>())
        .sum();
    let fd = (loss(&shifted(1.0)).0 - loss(&shifted(-1.0)).0) / (2.0 * h);
    (analytic - fd).abs() / analytic.abs().max(1e-300)
}
