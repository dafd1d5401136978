mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use tfn::so3::{real_spherical_harmonics, sh_equivariance_residual, wigner_d, WignerD};
use tfn::{CgTable, Rotation};

fn rotation() -> impl Strategy<Value = Rotation> {
    any::<u64>().prop_map(Rotation::from_seed)
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    any::<u64>().prop_map(|s| common::random_unit(&mut common::rng(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn harmonics_are_equivariant(g in rotation(), v in direction(), l in 0usize..=2) {
        prop_assert!(sh_equivariance_residual(l, &g, v).unwrap() < 1e-9);
    }

    #[test]
    fn wigner_is_a_homomorphism(g in rotation(), h in rotation(), l in 0usize..=2) {
        let lhs = wigner_d(l, &(g * h));
        let rhs = wigner_d(l, &g).matmul(&wigner_d(l, &h));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        prop_assert!(wigner_d(l, &g.inverse()).max_abs_diff(&wigner_d(l, &g).transpose()) < 1e-9);
    }

    #[test]
    fn coupling_commutes_with_rotation(g in rotation(), seed in any::<u64>()) {
        let table = CgTable::new(2);
        let mut r = common::rng(seed);
        for b in table.blocks() {
            let u: Vec<f64> = (0..2 * b.l_filter + 1).map(|_| common::random_unit(&mut r)[0]).collect();
            let v: Vec<f64> = (0..2 * b.l_in + 1).map(|_| common::random_unit(&mut r)[1]).collect();
            let lhs = b.couple(&wigner_d(b.l_filter, &g).apply(&u), &wigner_d(b.l_in, &g).apply(&v));
            let rhs = wigner_d(b.l_out, &g).apply(&b.couple(&u, &v));
            for (x, y) in lhs.iter().zip(&rhs) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn harmonics_ignore_length(v in direction(), k in 0.01f64..100.0, l in 0usize..=2) {
        let a = real_spherical_harmonics(l, v).unwrap();
        let b = real_spherical_harmonics(l, v.map(|x| x * k)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn scalar_harmonic_is_constant() {
    for s in 0..10 {
        let v = common::random_unit(&mut common::rng(s));
        assert!((real_spherical_harmonics(0, v).unwrap()[0] - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }
}

#[test]
fn vector_harmonic_of_z_axis() {
    let y = real_spherical_harmonics(1, [0.0, 0.0, 1.0]).unwrap();
    let k = (3.0 / (4.0 * PI)).sqrt();
    assert_eq!(y.len(), 3);
    assert!(y[0].abs() < 1e-15 && (y[1] - k).abs() < 1e-15 && y[2].abs() < 1e-15);
}

#[test]
fn quadrupole_of_z_axis_is_pure_m0() {
    let y = real_spherical_harmonics(2, [0.0, 0.0, 1.0]).unwrap();
    for (i, v) in y.iter().enumerate() {
        let want = if i == 2 { (5.0 / (4.0 * PI)).sqrt() } else { 0.0 };
        assert!((v - want).abs() < 1e-14, "m index {i}: {v}");
    }
}

#[test]
fn zero_vector_has_no_harmonics() {
    assert!(real_spherical_harmonics(1, [0.0; 3]).is_err());
}

#[test]
fn identity_rotation_has_zero_residual() {
    for l in 0..=2 {
        assert_eq!(sh_equivariance_residual(l, &Rotation::identity(), [0.3, -0.4, 0.5]).unwrap(), 0.0);
    }
}

#[test]
fn vector_rotation_is_the_rotation_matrix() {
    let mut r = common::rng(3);
    for _ in 0..100 {
        let g = Rotation::random(&mut r);
        assert!(sh_equivariance_residual(1, &g, common::random_unit(&mut r)).unwrap() < 1e-12);
    }
}

#[test]
fn full_turn_is_identity_for_quadrupoles() {
    for s in 0..10 {
        let axis = common::random_unit(&mut common::rng(s));
        let g = Rotation::from_axis_angle(axis, 2.0 * PI).unwrap();
        assert!(wigner_d(2, &g).max_abs_diff(&WignerD::identity(2)) < 1e-10);
    }
    assert_eq!(wigner_d(0, &Rotation::from_seed(9)).data(), &[1.0]);
}

#[test]
fn elementary_rotations() {
    let quarter = Rotation::from_axis_angle([0.0, 0.0, 1.0], PI / 2.0).unwrap();
    let x = quarter.apply([1.0, 0.0, 0.0]);
    assert!((x[0]).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15 && x[2].abs() < 1e-15);
    let none = Rotation::from_axis_angle([0.0, 0.0, 1.0], 0.0).unwrap();
    assert_eq!(none.quaternion(), [1.0, 0.0, 0.0, 0.0]);
    let axis = [0.6, 0.0, 0.8];
    let back = Rotation::from_axis_angle(axis, 1.1).unwrap() * Rotation::from_axis_angle(axis, -1.1).unwrap();
    let m = back.matrix();
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - f64::from(u8::from(i == j))).abs() < 1e-12);
        }
    }
}

#[test]
fn haar_mean_is_zero() {
    let n = 100_000;
    let mut r = common::rng(17);
    let mut sum = [[0.0; 3]; 3];
    for _ in 0..n {
        let m = Rotation::random(&mut r).matrix();
        for i in 0..3 {
            for j in 0..3 {
                sum[i][j] += m[i][j];
            }
        }
    }
    // each entry of a Haar rotation has mean 0 and variance 1/3
    let three_sigma = 3.0 * (1.0 / 3.0 / n as f64).sqrt();
    for row in sum {
        for s in row {
            assert!((s / n as f64).abs() < three_sigma, "{}", s / n as f64);
        }
    }
}

#[test]
fn seeded_rotation_is_deterministic_and_closed() {
    assert_eq!(Rotation::from_seed(4), Rotation::from_seed(4));
    let g = Rotation::from_seed(4) * Rotation::from_seed(5);
    let q = g.quaternion();
    assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn coupling_blocks_of_low_orders() {
    let t = CgTable::new(2);
    let scalar = t.block(0, 0, 0).unwrap();
    assert_eq!(scalar.shape(), [1, 1, 1]);
    assert!((scalar.get(0, 0, 0).abs() - 1.0).abs() < 1e-15);

    // dot product: proportional to the identity
    let dot = t.block(0, 1, 1).unwrap();
    let k = dot.get(0, 0, 0);
    assert!(k.abs() > 0.1);
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { k } else { 0.0 };
            assert!((dot.get(0, i, j) - want).abs() < 1e-15);
        }
    }

    // cross product: proportional to the Levi-Civita symbol in some fixed ordering
    let cross = t.block(1, 1, 1).unwrap();
    let mut nonzero = 0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let v = cross.get(i, j, k);
                assert!((v + cross.get(i, k, j)).abs() < 1e-15);
                if i == j || j == k || i == k {
                    assert!(v.abs() < 1e-15);
                } else {
                    nonzero += 1;
                    assert!((v.abs() - cross.get(0, 1, 2).abs()).abs() < 1e-15);
                }
            }
        }
    }
    assert_eq!(nonzero, 6);
}

#[test]
fn coupling_is_real_and_orthogonal() {
    let t = CgTable::new(2);
    assert!(t.max_imaginary_residue() < 1e-12);
    assert!(tfn::so3::cg_orthogonality_residual(&t) < 1e-12);
}
