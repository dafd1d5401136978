//! Two-operand tensor contraction over named axes (`"abc,abf->abcf"`).
//!
//! Every axis label of an operand must appear either in the other operand or
//! in the output, so the adjoint of a contraction is again a contraction.

use std::collections::BTreeMap;

use super::array::NdArray;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractSpec {
    pub(crate) a: Vec<char>,
    pub(crate) b: Vec<char>,
    pub(crate) out: Vec<char>,
}

impl ContractSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |msg: &str| Error::invalid("contract", format!("`{spec}`: {msg}"));
        let (inputs, out) = spec.split_once("->").ok_or_else(|| bad("missing `->`"))?;
        let (a, b) = inputs
            .split_once(',')
            .ok_or_else(|| bad("expected two operands"))?;
        let labels = |s: &str| -> Result<Vec<char>> {
            let v: Vec<char> = s.trim().chars().collect();
            if let Some(c) = v.iter().find(|c| !c.is_ascii_alphabetic()) {
                return Err(bad(&format!("invalid axis label {c:?}")));
            }
            let mut seen = v.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != v.len() {
                return Err(bad("repeated label within one operand"));
            }
            Ok(v)
        };
        let parsed = Self {
            a: labels(a)?,
            b: labels(b)?,
            out: labels(out)?,
        };
        for c in &parsed.out {
            if !parsed.a.contains(c) && !parsed.b.contains(c) {
                return Err(bad(&format!("output label {c} not in any operand")));
            }
        }
        for (mine, other) in [(&parsed.a, &parsed.b), (&parsed.b, &parsed.a)] {
            for c in mine {
                if !other.contains(c) && !parsed.out.contains(c) {
                    return Err(bad(&format!("label {c} is summed within a single operand")));
                }
            }
        }
        Ok(parsed)
    }

    pub(crate) fn grad_a(&self) -> ContractSpec {
        ContractSpec {
            a: self.out.clone(),
            b: self.b.clone(),
            out: self.a.clone(),
        }
    }

    pub(crate) fn grad_b(&self) -> ContractSpec {
        ContractSpec {
            a: self.out.clone(),
            b: self.a.clone(),
            out: self.b.clone(),
        }
    }
}

pub(crate) fn contract(a: &NdArray, b: &NdArray, spec: &ContractSpec) -> Result<NdArray> {
    if a.ndim() != spec.a.len() || b.ndim() != spec.b.len() {
        return Err(Error::shape("contract", a.shape(), b.shape()));
    }
    let mut sizes: BTreeMap<char, usize> = BTreeMap::new();
    for (labels, arr) in [(&spec.a, a), (&spec.b, b)] {
        for (c, &n) in labels.iter().zip(arr.shape()) {
            if let Some(&prev) = sizes.get(c) {
                if prev != n {
                    return Err(Error::shape("contract", a.shape(), b.shape()));
                }
            } else {
                sizes.insert(*c, n);
            }
        }
    }
    let labels: Vec<char> = sizes.keys().copied().collect();
    let extents: Vec<usize> = labels.iter().map(|c| sizes[c]).collect();
    let strides_for = |operand: &[char]| -> Vec<usize> {
        let mut s = vec![0; labels.len()];
        let mut acc = 1;
        for c in operand.iter().rev() {
            let k = labels.iter().position(|l| l == c).expect("label collected above");
            s[k] = acc;
            acc *= sizes[c];
        }
        s
    };
    let (sa, sb, so) = (strides_for(&spec.a), strides_for(&spec.b), strides_for(&spec.out));
    let out_shape: Vec<usize> = spec.out.iter().map(|c| sizes[c]).collect();
    let mut out = NdArray::zeros(&out_shape);

    let total: usize = extents.iter().product();
    if total == 0 {
        return Ok(out);
    }
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    let n = labels.len();
    let mut idx = vec![0usize; n];
    let (mut ia, mut ib, mut io) = (0usize, 0usize, 0usize);
    for _ in 0..total {
        od[io] += ad[ia] * bd[ib];
        for d in (0..n).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            io += so[d];
            if idx[d] < extents[d] {
                break;
            }
            ia -= sa[d] * extents[d];
            ib -= sb[d] * extents[d];
            io -= so[d] * extents[d];
            idx[d] = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> NdArray {
        NdArray::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn dot_product() {
        let a = arr(&[3], &[1.0, 2.0, 3.0]);
        let b = arr(&[3], &[4.0, -1.0, 0.5]);
        let out = contract(&a, &b, &ContractSpec::parse("i,i->").unwrap()).unwrap();
        assert_eq!(out.shape(), &[] as &[usize]);
        assert_eq!(out.item(), 1.0 * 4.0 - 2.0 + 1.5);
    }

    #[test]
    fn matrix_product() {
        let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = arr(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        let out = contract(&a, &b, &ContractSpec::parse("ij,jk->ik").unwrap()).unwrap();
        assert_eq!(out.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn batch_outer_product() {
        let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = arr(&[2, 3], &[1.0, 0.0, -1.0, 2.0, 2.0, 2.0]);
        let out = contract(&a, &b, &ContractSpec::parse("nc,nf->ncf").unwrap()).unwrap();
        assert_eq!(out.shape(), &[2, 2, 3]);
        assert_eq!(out.get(&[1, 0, 2]), 6.0);
        assert_eq!(out.get(&[0, 1, 2]), -2.0);
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(ContractSpec::parse("ij,jk").is_err());
        assert!(ContractSpec::parse("ii,ij->j").is_err());
        assert!(ContractSpec::parse("ij,k->k").is_err());
        assert!(ContractSpec::parse("i,i->z").is_err());
    }

    #[test]
    fn extent_mismatch_reports_shapes() {
        let a = arr(&[3], &[0.0; 3]);
        let b = arr(&[4], &[0.0; 4]);
        let err = contract(&a, &b, &ContractSpec::parse("i,i->").unwrap()).unwrap_err();
        assert!(err.to_string().contains("[3]") && err.to_string().contains("[4]"));
    }
}
