use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::NdArray;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "tfn-checkpoint/1";

/// Named trainable arrays, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, NdArray>,
}

/// Parameter name → tape variable for one forward pass.
pub type Bound = BTreeMap<String, Var>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NdArray) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&NdArray> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NdArray> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NdArray)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(NdArray::len).sum()
    }

    /// Registers every parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.params
            .iter()
            .map(|(name, value)| (name.clone(), tape.param(name.clone(), value.clone())))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.to_string(),
            params: self
                .params
                .iter()
                .map(|(name, v)| ParamRecord {
                    name: name.clone(),
                    shape: v.shape().to_vec(),
                    values: v.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Incompatible(format!(
                "checkpoint schema `{}`, expected `{CHECKPOINT_SCHEMA}`",
                ck.schema
            )));
        }
        let mut out = Self::new();
        for rec in &ck.params {
            let arr = NdArray::new(rec.shape.clone(), rec.values.clone()).map_err(|e| Error::Parameter {
                name: rec.name.clone(),
                msg: e.to_string(),
            })?;
            if out.params.insert(rec.name.clone(), arr).is_some() {
                return Err(Error::Parameter {
                    name: rec.name.clone(),
                    msg: "duplicate entry".into(),
                });
            }
        }
        Ok(out)
    }

    /// Fails unless `self` has exactly the names and shapes of `expected`.
    pub fn check_compatible(&self, expected: &ParamStore) -> Result<()> {
        for (name, want) in &expected.params {
            match self.params.get(name) {
                None => {
                    return Err(Error::Parameter {
                        name: name.clone(),
                        msg: "missing from checkpoint".into(),
                    })
                }
                Some(got) if got.shape() != want.shape() => {
                    return Err(Error::Parameter {
                        name: name.clone(),
                        msg: format!("shape mismatch: checkpoint {:?}, model {:?}", got.shape(), want.shape()),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = self.params.keys().find(|k| !expected.params.contains_key(*k)) {
            return Err(Error::Parameter {
                name: extra.clone(),
                msg: "not used by the model".into(),
            });
        }
        Ok(())
    }
}

/// JSON checkpoint: `{"schema": ..., "params": [{"name", "shape", "values"}]}`,
/// values row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema: String,
    pub params: Vec<ParamRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut s = ParamStore::new();
        s.insert("b", NdArray::vector(vec![0.1, -0.2]));
        s.insert("a", NdArray::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let json = serde_json::to_string(&s.to_checkpoint()).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params[0].name, "a");
        assert_eq!(ParamStore::from_checkpoint(&back).unwrap(), s);
    }

    #[test]
    fn shape_mismatch_is_explicit() {
        let mut a = ParamStore::new();
        a.insert("w", NdArray::zeros(&[2, 3]));
        let mut b = ParamStore::new();
        b.insert("w", NdArray::zeros(&[3, 2]));
        let err = a.check_compatible(&b).unwrap_err().to_string();
        assert!(err.contains("shape mismatch"), "{err}");
    }

    #[test]
    fn bad_value_count_is_rejected() {
        let ck = Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            params: vec![ParamRecord { name: "w".into(), shape: vec![2], values: vec![1.0] }],
        };
        assert!(ParamStore::from_checkpoint(&ck).is_err());
    }
}
