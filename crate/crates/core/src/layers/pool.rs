//! Concatenation, pooling and vote aggregation.

use std::collections::BTreeMap;

use super::feature::{FeatureMap, PointCloud};
use crate::autodiff::{NdArray, Tape, Var};
use crate::error::{Error, Result};

/// Channel-wise concatenation; an order present in several inputs is joined
/// in argument order, an order present in one is passed through.
pub fn concat_features(tape: &mut Tape, inputs: &[&FeatureMap]) -> Result<FeatureMap> {
    let n = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat_features", "no inputs"))?
        .num_points();
    let mut parts: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
    for f in inputs {
        if f.num_points() != n {
            return Err(Error::shape("concat_features", &[n], &[f.num_points()]));
        }
        for (l, v) in f.orders() {
            parts.entry(l).or_default().push(v);
        }
    }
    let mut out = FeatureMap::empty(n);
    for (l, vs) in parts {
        let v = if vs.len() == 1 { vs[0] } else { tape.concat(&vs, 1)? };
        out.insert(tape, l, v)?;
    }
    Ok(out)
}

/// Sum over points: `l → [channels, 2l + 1]`.
pub fn global_pool(tape: &mut Tape, input: &FeatureMap) -> Result<BTreeMap<usize, Var>> {
    input.orders().map(|(l, v)| Ok((l, tape.sum_axis(v, 0)?))).collect()
}

/// `[.., 3]` in harmonic order `(y, z, x)` to Cartesian `(x, y, z)`.
pub fn sh_vector_to_xyz(tape: &mut Tape, v: Var) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    if shape.last() != Some(&3) {
        return Err(Error::invalid("sh_vector_to_xyz", format!("last axis must be 3, got {shape:?}")));
    }
    let rows = shape.iter().product::<usize>() / 3;
    // column k of the result reads component perm[k]
    let mut p = NdArray::zeros(&[3, 3]);
    for (k, &m) in [2usize, 0, 1].iter().enumerate() {
        p.set(&[m, k], 1.0);
    }
    let p = tape.constant(p);
    let flat = tape.reshape(v, &[rows, 3])?;
    let out = tape.matmul(flat, p)?;
    tape.reshape(out, &shape)
}

/// Softmax-weighted vote `Σ_a p_a (r_a + δ_a)`.
///
/// `confidence` holds one logit per point (`[n, 1, 1]` or any shape with `n`
/// elements); `displacement` is an order-1 feature `[n, 1, 3]`.
/// Returns `(position [3], weights [n])`.
pub fn vote_aggregate(tape: &mut Tape, cloud: &PointCloud, confidence: Var, displacement: Var) -> Result<(Var, Var)> {
    let n = cloud.len();
    if tape.value(confidence).len() != n || tape.shape(displacement) != [n, 1, 3] {
        return Err(Error::shape("vote_aggregate", tape.shape(confidence), tape.shape(displacement)));
    }
    let logits = tape.reshape(confidence, &[n])?;
    let w = tape.softmax(logits, 0)?;
    let d = tape.reshape(displacement, &[n, 3])?;
    let d = sh_vector_to_xyz(tape, d)?;
    let pos = tape.constant(NdArray::new(vec![n, 3], cloud.positions().iter().flatten().copied().collect())?);
    let votes = tape.add(pos, d)?;
    let w_col = tape.reshape(w, &[n, 1])?;
    let weighted = tape.mul(votes, w_col)?;
    Ok((tape.sum_axis(weighted, 0)?, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Features;

    #[test]
    fn pool_sums_over_points() {
        let mut t = Tape::new();
        let f = FeatureMap::from_features(&mut t, &Features::scalars(&[1.0, 2.0, 6.0])).unwrap();
        let p = global_pool(&mut t, &f).unwrap();
        assert_eq!(t.value(p[&0]).data(), &[9.0]);
        assert_eq!(t.shape(p[&0]), &[1, 1]);
    }

    #[test]
    fn concat_stacks_channels() {
        let mut t = Tape::new();
        let a = FeatureMap::from_features(&mut t, &Features::scalars(&[1.0, 2.0])).unwrap();
        let b = FeatureMap::from_features(&mut t, &Features::scalars(&[3.0, 4.0])).unwrap();
        let c = concat_features(&mut t, &[&a, &b]).unwrap();
        assert_eq!(t.value(c.get(0).unwrap()).data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn sh_vector_reorders() {
        let mut t = Tape::new();
        let v = t.constant(NdArray::vector(vec![2.0, 3.0, 1.0]));
        let x = sh_vector_to_xyz(&mut t, v).unwrap();
        assert_eq!(t.value(x).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn uniform_votes_average_positions() {
        let cloud = PointCloud::new(vec![[0.0; 3], [2.0, 0.0, 0.0]]).unwrap();
        let mut t = Tape::new();
        let c = t.constant(NdArray::zeros(&[2, 1, 1]));
        // (y, z, x) = (0, 1, 0): one unit up z
        let d = t.constant(NdArray::new(vec![2, 1, 3], vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap());
        let (p, w) = vote_aggregate(&mut t, &cloud, c, d).unwrap();
        assert_eq!(t.value(p).data(), &[1.0, 0.0, 1.0]);
        assert_eq!(t.value(w).data(), &[0.5, 0.5]);
    }
}
