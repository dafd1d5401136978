mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use tfn::autodiff::{shifted_softplus, Adam, AdamConfig, ParamStore};
use tfn::{NdArray, Tape};

use common::{gradcheck, random_array, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn broadcast_mul_gradients(rows in 1usize..4, cols in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_array(&mut r, &[rows, cols]);
        let b = random_array(&mut r, &[cols]);
        let e = gradcheck(&[a, b], 1e-6, seed, |t, v| t.mul(v[0], v[1]).unwrap());
        prop_assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn contraction_gradients(n in 1usize..4, c in 1usize..3, d in 1usize..3, m in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_array(&mut r, &[d, c]);
        let x = random_array(&mut r, &[n, c, m]);
        let e = gradcheck(&[w, x], 1e-6, seed, |t, v| t.contract(v[0], v[1], "dc,ncm->ndm").unwrap());
        prop_assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn softmax_rows_sum_to_one(cols in 1usize..6, seed in any::<u64>()) {
        let mut t = Tape::new();
        let x = t.constant(random_array(&mut rng(seed), &[3, cols]));
        let s = t.softmax(x, 1).unwrap();
        for row in t.value(s).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn square_gradient() {
    let mut t = Tape::new();
    let x = t.param("x", NdArray::scalar(3.0));
    let y = t.square(x);
    let g = t.backward(y).unwrap();
    assert!((g.get(x).unwrap().item() - 6.0).abs() < 1e-10);
}

#[test]
fn matmul_sum_gradient_is_broadcast_input() {
    let mut t = Tape::new();
    let w = t.param("w", random_array(&mut rng(1), &[2, 3]));
    let xv = NdArray::new(vec![3, 1], vec![0.5, -1.0, 2.0]).unwrap();
    let x = t.constant(xv.clone());
    let y = t.matmul(w, x).unwrap();
    let s = t.sum_all(y).unwrap();
    let g = t.backward(s).unwrap().by_name();
    assert_eq!(g["w"].data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
}

#[test]
fn elementary_values() {
    assert_eq!(shifted_softplus(0.0), 0.0);
    let mut t = Tape::new();
    let a = t.constant(NdArray::vector(vec![1.0, 2.0, 3.0]));
    let b = t.constant(NdArray::vector(vec![4.0, -5.0, 6.0]));
    let d = t.contract(a, b, "i,i->").unwrap();
    assert_eq!(t.value(d).item(), 12.0);
    let u = t.constant(NdArray::vector(vec![0.7; 4]));
    let p = t.softmax(u, 0).unwrap();
    assert!(t.value(p).data().iter().all(|v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn loss_must_be_scalar() {
    let mut t = Tape::new();
    let x = t.param("x", NdArray::vector(vec![1.0, 2.0]));
    assert!(t.backward(x).is_err());
}

#[test]
fn shape_errors_are_reported() {
    let mut t = Tape::new();
    let a = t.constant(NdArray::zeros(&[2, 3]));
    let b = t.constant(NdArray::zeros(&[2, 3]));
    assert!(t.matmul(a, b).is_err());
    let c = t.constant(NdArray::zeros(&[4]));
    assert!(t.add(a, c).is_err());
    assert!(t.gather(a, &[5]).is_err());
    assert!(t.narrow(a, 1, 2, 2).is_err());
}

fn one_param(name: &str, v: Vec<f64>) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert(name, NdArray::vector(v));
    p
}

#[test]
fn adam_ignores_zero_gradient() {
    let mut p = one_param("x", vec![1.0, -2.0]);
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default());
    for _ in 0..10 {
        adam.step(&mut p, &BTreeMap::from([("x".to_string(), NdArray::zeros(&[2]))])).unwrap();
    }
    assert_eq!(p, before);
}

#[test]
fn adam_step_tends_to_lr_times_sign() {
    let cfg = AdamConfig { lr: 0.01, ..Default::default() };
    let mut p = one_param("x", vec![0.0, 0.0]);
    let mut adam = Adam::new(cfg);
    let g = BTreeMap::from([("x".to_string(), NdArray::vector(vec![3.0, -0.2]))]);
    let mut last = p.get("x").unwrap().clone();
    for _ in 0..200 {
        adam.step(&mut p, &g).unwrap();
        let now = p.get("x").unwrap().clone();
        let step: Vec<f64> = now.data().iter().zip(last.data()).map(|(a, b)| a - b).collect();
        last = now;
        assert!((step[0] + 0.01).abs() < 1e-6 && (step[1] - 0.01).abs() < 1e-6, "{step:?}");
    }
}

#[test]
fn adam_converges_on_quadratic_bowl() {
    let c = [1.5, -0.5, 3.0];
    let mut p = one_param("x", vec![0.0; 3]);
    let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
    for _ in 0..5000 {
        let mut t = Tape::new();
        let bound = p.bind(&mut t);
        let x = bound["x"];
        let target = t.constant(NdArray::vector(c.to_vec()));
        let d = t.sub(x, target).unwrap();
        let sq = t.square(d);
        let loss = t.sum_all(sq).unwrap();
        adam.step(&mut p, &t.backward(loss).unwrap().by_name()).unwrap();
    }
    for (v, want) in p.get("x").unwrap().data().iter().zip(c) {
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");
    }
}

#[test]
fn adam_rejects_unknown_gradient() {
    let mut p = one_param("x", vec![0.0]);
    let mut adam = Adam::new(AdamConfig::default());
    let g = BTreeMap::from([("y".to_string(), NdArray::zeros(&[1]))]);
    assert!(adam.step(&mut p, &g).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut p = ParamStore::new();
    p.insert("a.w", random_array(&mut rng(3), &[3, 4]));
    p.insert("b", NdArray::vector(vec![0.1, 1.0 / 3.0, -2e-300]));
    let json = serde_json::to_string(&p.to_checkpoint()).unwrap();
    let back = ParamStore::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, p);
    back.check_compatible(&p).unwrap();
    let mut wrong = p.clone();
    wrong.insert("a.w", NdArray::zeros(&[4, 3]));
    assert!(wrong.check_compatible(&p).is_err());
}
