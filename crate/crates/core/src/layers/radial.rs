use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, NdArray, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Gaussian radial basis followed by two dense layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    pub num_basis: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub hidden: usize,
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self {
            num_basis: 30,
            r_min: 0.0,
            r_max: 2.0,
            hidden: 32,
        }
    }
}

impl RadialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_basis < 2 || self.hidden == 0 {
            return Err(Error::invalid("RadialConfig", "need >= 2 basis functions and a nonzero hidden width"));
        }
        if !(self.r_max > self.r_min && self.r_min >= 0.0 && self.r_max.is_finite()) {
            return Err(Error::invalid(
                "RadialConfig",
                format!("invalid basis range [{}, {}]", self.r_min, self.r_max),
            ));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.num_basis - 1) as f64
    }

    /// `exp(−(r − μ_k)² / 2σ²)` with centers evenly spaced over the range and
    /// variance `σ²` equal to half the center spacing.
    pub fn basis(&self, r: f64) -> Vec<f64> {
        let spacing = self.spacing();
        let variance = 0.5 * spacing;
        (0..self.num_basis)
            .map(|k| {
                let mu = self.r_min + k as f64 * spacing;
                (-(r - mu) * (r - mu) / (2.0 * variance)).exp()
            })
            .collect()
    }
}

/// Learned functions of distance, `outputs` values per distance.
///
/// Parameters: `{name}.w1 [basis, hidden]`, `{name}.b1 [hidden]`,
/// `{name}.w2 [hidden, outputs]`, `{name}.b2 [outputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialNet {
    pub name: String,
    pub config: RadialConfig,
    pub outputs: usize,
}

impl RadialNet {
    pub fn new(name: impl Into<String>, config: RadialConfig, outputs: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            name: name.into(),
            config,
            outputs,
        })
    }

    fn key(&self, part: &str) -> String {
        format!("{}.{part}", self.name)
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let (k, h, o) = (self.config.num_basis, self.config.hidden, self.outputs);
        store.insert(self.key("w1"), NdArray::randn(&[k, h], (2.0 / (k + h) as f64).sqrt(), rng));
        store.insert(self.key("b1"), NdArray::zeros(&[h]));
        store.insert(self.key("w2"), NdArray::randn(&[h, o], (2.0 / (h + o) as f64).sqrt(), rng));
        store.insert(self.key("b2"), NdArray::zeros(&[o]));
    }

    fn bound(&self, bound: &Bound, part: &str) -> Result<Var> {
        let key = self.key(part);
        bound.get(&key).copied().ok_or(Error::Parameter {
            name: key,
            msg: "not bound on the tape".into(),
        })
    }

    /// `[distances.len(), outputs]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, distances: &[f64]) -> Result<Var> {
        if let Some(&r) = distances.iter().find(|&&r| r < 0.0) {
            return Err(Error::NegativeDistance(r));
        }
        let k = self.config.num_basis;
        let data: Vec<f64> = distances.iter().flat_map(|&r| self.config.basis(r)).collect();
        let basis = tape.constant(NdArray::new(vec![distances.len(), k], data)?);
        let (w1, b1, w2, b2) = (
            self.bound(bound, "w1")?,
            self.bound(bound, "b1")?,
            self.bound(bound, "w2")?,
            self.bound(bound, "b2")?,
        );
        let h = tape.matmul(basis, w1)?;
        let h = tape.add(h, b1)?;
        let h = tape.shifted_softplus(h);
        let out = tape.matmul(h, w2)?;
        tape.add(out, b2)
    }

    /// Plain evaluation at one distance.
    pub fn eval(&self, params: &ParamStore, r: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, &[r])?;
        Ok(tape.value(out).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_peaks_at_its_center() {
        let cfg = RadialConfig::default();
        let spacing = cfg.spacing();
        let b = cfg.basis(7.0 * spacing);
        assert!((b[7] - 1.0).abs() < 1e-15);
        let argmax = b.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 7);
        assert!(b[6] < 1.0 && (b[6] - b[8]).abs() < 1e-15);
    }

    #[test]
    fn center_dominates_with_pass_through_weights() {
        // Hidden layer copies the basis; the output reads only basis 10.
        let cfg = RadialConfig { num_basis: 30, r_min: 0.0, r_max: 2.0, hidden: 30 };
        let net = RadialNet::new("r", cfg, 30).unwrap();
        let mut p = ParamStore::new();
        let mut eye = NdArray::zeros(&[30, 30]);
        for i in 0..30 {
            eye.set(&[i, i], 1.0);
        }
        p.insert("r.w1", eye.clone());
        p.insert("r.b1", NdArray::zeros(&[30]));
        p.insert("r.w2", eye);
        p.insert("r.b2", NdArray::zeros(&[30]));
        let out = net.eval(&p, 10.0 * cfg.spacing()).unwrap();
        let argmax = out.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 10);
        assert!((out[10] - crate::autodiff::shifted_softplus(1.0)).abs() < 1e-12);
    }

    #[test]
    fn negative_distance_is_rejected() {
        let net = RadialNet::new("r", RadialConfig::default(), 1).unwrap();
        let mut p = ParamStore::new();
        net.init_params(&mut p, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(net.eval(&p, -0.1), Err(Error::NegativeDistance(_))));
        assert_eq!(net.eval(&p, 0.7).unwrap().len(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = RadialConfig { r_max: 0.0, ..Default::default() };
        assert!(RadialNet::new("r", bad, 1).is_err());
    }
}
