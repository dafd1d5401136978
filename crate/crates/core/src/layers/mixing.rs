//! Per-point channel mixing and the norm nonlinearity.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::feature::FeatureMap;
use crate::autodiff::{Bound, NdArray, ParamStore, Tape, Var};
use crate::error::{Error, Result};

fn lookup(bound: &Bound, key: String) -> Result<Var> {
    bound.get(&key).copied().ok_or(Error::Parameter {
        name: key,
        msg: "not bound on the tape".into(),
    })
}

/// `V'[a, c, m] = Σ_{c'} W^(l)[c, c'] V[a, c', m]` with the same weights for
/// every `m`, plus a bias on order 0 only.
///
/// Parameters: `{name}.w{l} [c_out, c_in]` and, when `bias`, `{name}.b0 [c_out]`.
/// Orders not listed in `channels` are dropped from the output.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfInteraction {
    pub name: String,
    /// `l → (c_in, c_out)`.
    pub channels: BTreeMap<usize, (usize, usize)>,
    pub bias: bool,
}

impl SelfInteraction {
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for (&l, &(cin, cout)) in &self.channels {
            store.insert(format!("{}.w{l}", self.name), NdArray::randn(&[cout, cin], 1.0 / (cin as f64).sqrt(), rng));
        }
        if self.bias {
            if let Some(&(_, cout)) = self.channels.get(&0) {
                store.insert(format!("{}.b0", self.name), NdArray::zeros(&[cout]));
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: &FeatureMap) -> Result<FeatureMap> {
        let mut out = FeatureMap::empty(input.num_points());
        for (&l, &(cin, cout)) in &self.channels {
            let v = input.get(l)?;
            let w = lookup(bound, format!("{}.w{l}", self.name))?;
            if tape.shape(w) != [cout, cin] || tape.shape(v)[1] != cin {
                return Err(Error::shape("self_interaction", tape.shape(w), tape.shape(v)));
            }
            let mut y = tape.contract(w, v, "dc,ncm->ndm")?;
            if l == 0 && self.bias {
                let b = lookup(bound, format!("{}.b0", self.name))?;
                let b = tape.reshape(b, &[cout, 1])?;
                y = tape.add(y, b)?;
            }
            out.insert(tape, l, y)?;
        }
        Ok(out)
    }
}

/// Deliberately broken self-interaction whose weights depend on `m`.
/// Exists only so equivariance checks can be shown to fail.
///
/// Parameters: `{name}.w{l} [2l + 1, c_out, c_in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MDependentSelfInteraction {
    pub name: String,
    pub channels: BTreeMap<usize, (usize, usize)>,
}

impl MDependentSelfInteraction {
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for (&l, &(cin, cout)) in &self.channels {
            store.insert(
                format!("{}.w{l}", self.name),
                NdArray::randn(&[2 * l + 1, cout, cin], 1.0 / (cin as f64).sqrt(), rng),
            );
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: &FeatureMap) -> Result<FeatureMap> {
        let mut out = FeatureMap::empty(input.num_points());
        for &l in self.channels.keys() {
            let v = input.get(l)?;
            let w = lookup(bound, format!("{}.w{l}", self.name))?;
            let y = tape.contract(w, v, "mdc,ncm->ndm")?;
            out.insert(tape, l, y)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    ShiftedSoftplus,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::ShiftedSoftplus => tape.shifted_softplus(x),
            Activation::Identity => x,
        }
    }
}

/// Added under the square root of the norm so its gradient stays finite at zero.
pub const NORM_EPS: f64 = 1e-12;

/// Initial bias of the `l > 0` gates. With a zero bias the gate of a
/// small vector is about `‖V‖ / 2` and deep stacks start near a saddle.
pub const GATE_BIAS_INIT: f64 = 1.0;

/// Order 0: `η(V + b)`. Order `l > 0`: `η(‖V‖ + b) V` with `‖V‖` taken over `m`.
///
/// Parameters: `{name}.b{l} [channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormNonlinearity {
    pub name: String,
    pub channels: BTreeMap<usize, usize>,
    /// Per-order override; orders not listed use shifted softplus.
    pub activations: BTreeMap<usize, Activation>,
}

impl NormNonlinearity {
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, _rng: &mut R) {
        for (&l, &c) in &self.channels {
            let b = if l == 0 { 0.0 } else { GATE_BIAS_INIT };
            store.insert(format!("{}.b{l}", self.name), NdArray::full(&[c], b));
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: &FeatureMap) -> Result<FeatureMap> {
        let n = input.num_points();
        let mut out = FeatureMap::empty(n);
        for (&l, &c) in &self.channels {
            let v = input.get(l)?;
            if tape.shape(v)[1] != c {
                return Err(Error::shape("norm_nonlinearity", tape.shape(v), &[n, c, 2 * l + 1]));
            }
            let b = lookup(bound, format!("{}.b{l}", self.name))?;
            let eta = self.activations.get(&l).copied().unwrap_or_default();
            let y = if l == 0 {
                let b = tape.reshape(b, &[c, 1])?;
                let pre = tape.add(v, b)?;
                eta.apply(tape, pre)
            } else {
                let sq = tape.square(v);
                let s = tape.sum_axis(sq, 2)?;
                let s = tape.add_scalar(s, NORM_EPS);
                let norm = tape.sqrt(s);
                let pre = tape.add(norm, b)?;
                let gain = eta.apply(tape, pre);
                let gain = tape.reshape(gain, &[n, c, 1])?;
                tape.mul(v, gain)?
            };
            out.insert(tape, l, y)?;
        }
        Ok(out)
    }
}
