//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records each forward op together with what its adjoint needs;
//! [`Tape::backward`] sweeps it once in reverse from a scalar loss.
//! Parameters live in a [`ParamStore`] and are re-registered on a fresh
//! tape for every forward pass.

mod adam;
mod array;
mod contract;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use array::NdArray;
pub use contract::ContractSpec;
pub use params::{Bound, Checkpoint, ParamRecord, ParamStore, CHECKPOINT_SCHEMA};
pub use tape::{Gradients, Tape, Var};

/// `ln(0.5 eˣ + 0.5)` on a plain number.
pub fn shifted_softplus(x: f64) -> f64 {
    tape::ssp(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_softplus_vanishes_at_zero() {
        assert_eq!(shifted_softplus(0.0), 0.0);
        assert!((shifted_softplus(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((shifted_softplus(-800.0) + std::f64::consts::LN_2).abs() < 1e-12);
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
        let w = t.param("w", NdArray::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let x = t.constant(NdArray::new(vec![3, 1], vec![1.0, -2.0, 4.0]).unwrap());
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum_all(y).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, -2.0, 4.0, 1.0, -2.0, 4.0]);
        assert_eq!(g.by_name()["w"].shape(), &[2, 3]);
    }

    #[test]
    fn softmax_of_uniform_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(NdArray::full(&[4], 2.5));
        let p = t.softmax(x, 0).unwrap();
        assert!(t.value(p).data().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.param("x", NdArray::zeros(&[3]));
        assert!(matches!(t.backward(x), Err(crate::Error::NonScalarLoss(_))));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(NdArray::zeros(&[2, 3]));
        let b = t.constant(NdArray::zeros(&[4]));
        let msg = t.add(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4]"), "{msg}");
        let msg = t.matmul(a, a).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn unreached_parameter_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.param("a", NdArray::scalar(1.0));
        let _b = t.param("b", NdArray::zeros(&[2]));
        let y = t.scale(a, 3.0);
        let g = t.backward(y).unwrap().by_name();
        assert_eq!(g["a"].item(), 3.0);
        assert_eq!(g["b"].data(), &[0.0, 0.0]);
    }
}
