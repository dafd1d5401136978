use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NdArray, Tape, Var};
use crate::error::{Error, Result};
use crate::so3::{wigner_d, Rotation};

/// Points in 3D plus optional per-point attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    types: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("PointCloud", "needs at least one point"));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("PointCloud", "positions must be finite"));
        }
        Ok(Self {
            positions,
            masses: None,
            types: None,
        })
    }

    pub fn with_masses(mut self, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != self.positions.len() {
            return Err(Error::shape("PointCloud::with_masses", &[self.len()], &[masses.len()]));
        }
        self.masses = Some(masses);
        Ok(self)
    }

    pub fn with_types(mut self, types: Vec<usize>) -> Result<Self> {
        if types.len() != self.positions.len() {
            return Err(Error::shape("PointCloud::with_types", &[self.len()], &[types.len()]));
        }
        self.types = Some(types);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn masses(&self) -> Option<&[f64]> {
        self.masses.as_deref()
    }

    pub fn types(&self) -> Option<&[usize]> {
        self.types.as_deref()
    }

    /// `r_a − r_b`.
    pub fn relative(&self, a: usize, b: usize) -> [f64; 3] {
        let (p, q) = (self.positions[a], self.positions[b]);
        [p[0] - q[0], p[1] - q[1], p[2] - q[2]]
    }

    pub fn rotated(&self, rotation: &Rotation) -> Self {
        Self {
            positions: self.positions.iter().map(|&p| rotation.apply(p)).collect(),
            ..self.clone()
        }
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
            ..self.clone()
        }
    }

    /// Point `i` of the result is point `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            masses: self.masses.as_ref().map(|m| perm.iter().map(|&i| m[i]).collect()),
            types: self.types.as_ref().map(|t| perm.iter().map(|&i| t[i]).collect()),
        }
    }
}

/// Numeric feature tensors keyed by rotation order. Per-point tensors have
/// shape `[num_points, channels, 2l + 1]`; pooled tensors `[channels, 2l + 1]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Features(pub BTreeMap<usize, NdArray>);

impl Features {
    pub fn new() -> Self {
        Self::default()
    }

    /// Per-point features; checks the `[n, c, 2l+1]` layout and a shared `n`.
    pub fn per_point(orders: BTreeMap<usize, NdArray>) -> Result<Self> {
        let mut n = None;
        for (&l, arr) in &orders {
            let s = arr.shape();
            if s.len() != 3 || s[2] != 2 * l + 1 || s[1] == 0 {
                return Err(Error::invalid(
                    "Features",
                    format!("order {l} needs shape [points, channels >= 1, {}], got {s:?}", 2 * l + 1),
                ));
            }
            match n {
                None => n = Some(s[0]),
                Some(m) if m != s[0] => {
                    return Err(Error::invalid(
                        "Features",
                        format!("orders disagree on point count ({m} vs {})", s[0]),
                    ))
                }
                _ => {}
            }
        }
        Ok(Self(orders))
    }

    /// One channel of scalars per point, e.g. masses.
    pub fn scalars(values: &[f64]) -> Self {
        let arr = NdArray::new(vec![values.len(), 1, 1], values.to_vec()).expect("length matches");
        Self(BTreeMap::from([(0, arr)]))
    }

    pub fn get(&self, l: usize) -> Option<&NdArray> {
        self.0.get(&l)
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    /// Applies `D^(l)(rotation)` along the last axis of every order.
    pub fn rotated(&self, rotation: &Rotation) -> Self {
        Self(
            self.0
                .iter()
                .map(|(&l, arr)| {
                    let d = wigner_d(l, rotation);
                    let dim = 2 * l + 1;
                    let mut out = arr.clone();
                    for (src, dst) in arr.data().chunks(dim).zip(out.data_mut().chunks_mut(dim)) {
                        dst.copy_from_slice(&d.apply(src));
                    }
                    (l, out)
                })
                .collect(),
        )
    }

    /// Reorders axis 0 so that row `i` becomes row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(
            self.0
                .iter()
                .map(|(&l, arr)| {
                    let inner = arr.len() / arr.shape()[0].max(1);
                    let mut data = Vec::with_capacity(arr.len());
                    for &i in perm {
                        data.extend_from_slice(&arr.data()[i * inner..(i + 1) * inner]);
                    }
                    (l, NdArray::new(arr.shape().to_vec(), data).expect("same size"))
                })
                .collect(),
        )
    }

    pub fn rms(&self) -> f64 {
        let (sum, count) = self
            .0
            .values()
            .fold((0.0, 0usize), |(s, c), a| (s + a.data().iter().map(|v| v * v).sum::<f64>(), c + a.len()));
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }

    /// Max-abs difference over shared orders; a missing or reshaped order counts as infinite.
    pub fn max_abs_diff(&self, other: &Features) -> f64 {
        if self.0.len() != other.0.len() {
            return f64::INFINITY;
        }
        self.0
            .iter()
            .map(|(l, a)| other.0.get(l).map_or(f64::INFINITY, |b| a.max_abs_diff(b)))
            .fold(0.0, f64::max)
    }
}

/// Feature tensors on a tape, `[num_points, channels_l, 2l + 1]` per order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    num_points: usize,
    orders: BTreeMap<usize, Var>,
}

impl FeatureMap {
    pub fn empty(num_points: usize) -> Self {
        Self {
            num_points,
            orders: BTreeMap::new(),
        }
    }

    pub fn from_features(tape: &mut Tape, features: &Features) -> Result<Self> {
        let checked = Features::per_point(features.0.clone())?;
        let num_points = checked
            .0
            .values()
            .next()
            .map(|a| a.shape()[0])
            .ok_or_else(|| Error::invalid("FeatureMap", "no orders"))?;
        let orders = checked
            .0
            .into_iter()
            .map(|(l, arr)| (l, tape.constant(arr)))
            .collect();
        Ok(Self { num_points, orders })
    }

    pub fn to_features(&self, tape: &Tape) -> Features {
        Features(
            self.orders
                .iter()
                .map(|(&l, &v)| (l, tape.value(v).clone()))
                .collect(),
        )
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    /// Adds or replaces order `l`, checking the layout.
    pub fn insert(&mut self, tape: &Tape, l: usize, var: Var) -> Result<()> {
        let s = tape.shape(var);
        if s.len() != 3 || s[0] != self.num_points || s[1] == 0 || s[2] != 2 * l + 1 {
            return Err(Error::shape(
                "FeatureMap::insert",
                s,
                &[self.num_points, s.get(1).copied().unwrap_or(0).max(1), 2 * l + 1],
            ));
        }
        self.orders.insert(l, var);
        Ok(())
    }

    pub fn get(&self, l: usize) -> Result<Var> {
        self.orders.get(&l).copied().ok_or(Error::MissingOrder { order: l })
    }

    pub fn orders(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.orders.iter().map(|(&l, &v)| (l, v))
    }

    pub fn channels(&self, tape: &Tape, l: usize) -> Option<usize> {
        self.orders.get(&l).map(|&v| tape.shape(v)[1])
    }

    pub fn channel_map(&self, tape: &Tape) -> BTreeMap<usize, usize> {
        self.orders.iter().map(|(&l, &v)| (l, tape.shape(v)[1])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_validation() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]]).is_err());
        let c = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(c.clone().with_masses(vec![1.0]).is_err());
        assert_eq!(c.relative(1, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn features_validate_layout() {
        let bad = BTreeMap::from([(1, NdArray::zeros(&[2, 1, 2]))]);
        assert!(Features::per_point(bad).is_err());
        let mismatched = BTreeMap::from([(0, NdArray::zeros(&[2, 1, 1])), (1, NdArray::zeros(&[3, 1, 3]))]);
        assert!(Features::per_point(mismatched).is_err());
        let no_channels = BTreeMap::from([(0, NdArray::zeros(&[2, 0, 1]))]);
        assert!(Features::per_point(no_channels).is_err());
    }

    #[test]
    fn permutation_moves_rows() {
        let f = Features::scalars(&[1.0, 2.0, 3.0]);
        assert_eq!(f.permuted(&[2, 0, 1]).get(0).unwrap().data(), &[3.0, 1.0, 2.0]);
    }
}
