use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::array::NdArray;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates, one moment pair per parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (NdArray, NdArray)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, NdArray>) -> Result<()> {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (name, g) in grads {
            let p = params.get_mut(name).ok_or_else(|| Error::Parameter {
                name: name.clone(),
                msg: "gradient for unknown parameter".into(),
            })?;
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (NdArray::zeros(g.shape()), NdArray::zeros(g.shape())));
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", NdArray::vector(values.to_vec()));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = store(&[1.0, -2.0]);
        let mut opt = Adam::new(AdamConfig::default());
        let grads = BTreeMap::from([("x".to_string(), NdArray::zeros(&[2]))]);
        for _ in 0..10 {
            opt.step(&mut p, &grads).unwrap();
        }
        assert_eq!(p.get("x").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_steps_by_lr_times_sign() {
        let mut p = store(&[0.0, 0.0]);
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        let mut opt = Adam::new(cfg);
        let grads = BTreeMap::from([("x".to_string(), NdArray::vector(vec![3.5, -0.2]))]);
        let mut last = [0.0, 0.0];
        for _ in 0..2000 {
            last.copy_from_slice(p.get("x").unwrap().data());
            opt.step(&mut p, &grads).unwrap();
        }
        let now = p.get("x").unwrap().data();
        assert!((now[0] - last[0] + 0.01).abs() < 1e-8);
        assert!((now[1] - last[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let c = [1.5, -0.7, 3.0];
        let mut p = store(&[0.0, 0.0, 0.0]);
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
        let mut steps = 0;
        for _ in 0..5000 {
            let x = p.get("x").unwrap().data().to_vec();
            let g: Vec<f64> = x.iter().zip(c).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            opt.step(&mut p, &BTreeMap::from([("x".to_string(), NdArray::vector(g))])).unwrap();
            steps += 1;
            let err = p.get("x").unwrap().data().iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if err < 1e-6 {
                break;
            }
        }
        let err = p.get("x").unwrap().data().iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "error {err} after {steps} steps");
    }

    #[test]
    fn unknown_parameter_is_an_error() {
        let mut p = store(&[0.0]);
        let mut opt = Adam::new(AdamConfig::default());
        let grads = BTreeMap::from([("y".to_string(), NdArray::zeros(&[1]))]);
        assert!(opt.step(&mut p, &grads).is_err());
    }
}
