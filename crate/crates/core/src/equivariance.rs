//! Property checks for maps on point clouds: rotate, translate or permute the
//! input, run the map, and compare against the transformed baseline output.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::layers::{FeatureMap, Features, Geometry, Layer, Network, PointCloud};
use crate::so3::{CgTable, Rotation};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_TRIALS: usize = 50;

/// What a map produces and therefore how it should transform.
#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    /// `[n, c, 2l+1]` per order: rotated by D, rows permuted, translation-invariant.
    PerPoint(Features),
    /// `[c, 2l+1]` per order: rotated by D, permutation- and translation-invariant.
    Pooled(Features),
    /// A location in space: rotated by R, shifted by translations, permutation-invariant.
    Position([f64; 3]),
}

impl Output {
    fn orders(&self) -> Vec<usize> {
        match self {
            Output::PerPoint(f) | Output::Pooled(f) => f.orders().collect(),
            Output::Position(_) => vec![1],
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Output::PerPoint(f) | Output::Pooled(f) => f.rms(),
            Output::Position(p) => (p.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt(),
        }
    }

    fn rotated(&self, r: &Rotation) -> Output {
        match self {
            Output::PerPoint(f) => Output::PerPoint(f.rotated(r)),
            Output::Pooled(f) => Output::Pooled(f.rotated(r)),
            Output::Position(p) => Output::Position(r.apply(*p)),
        }
    }

    fn translated(&self, t: [f64; 3]) -> Output {
        match self {
            Output::Position(p) => Output::Position([p[0] + t[0], p[1] + t[1], p[2] + t[2]]),
            other => other.clone(),
        }
    }

    fn permuted(&self, perm: &[usize]) -> Output {
        match self {
            Output::PerPoint(f) => Output::PerPoint(f.permuted(perm)),
            other => other.clone(),
        }
    }

    /// `order → max |self − other|`; shape or kind mismatch is infinite.
    fn diff_by_order(&self, other: &Output) -> BTreeMap<usize, f64> {
        match (self, other) {
            (Output::PerPoint(a), Output::PerPoint(b)) | (Output::Pooled(a), Output::Pooled(b)) => a
                .0
                .iter()
                .map(|(&l, x)| {
                    let d = b.get(l).filter(|y| y.shape() == x.shape()).map_or(f64::INFINITY, |y| x.max_abs_diff(y));
                    (l, d)
                })
                .collect(),
            (Output::Position(a), Output::Position(b)) => {
                BTreeMap::from([(1, (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))])
            }
            _ => BTreeMap::from([(0, f64::INFINITY)]),
        }
    }
}

/// A map from (cloud, per-point features) to an [`Output`], with declared orders.
pub trait PointMap {
    fn name(&self) -> String;
    fn output_orders(&self) -> Vec<usize>;
    fn apply(&self, cloud: &PointCloud, input: &Features) -> Result<Output>;
}

fn apply_checked(map: &dyn PointMap, cloud: &PointCloud, input: &Features) -> Result<Output> {
    let out = map.apply(cloud, input)?;
    let declared = map.output_orders();
    if let Some(&l) = out.orders().iter().find(|l| !declared.contains(l)) {
        return Err(Error::UndeclaredOrder { order: l });
    }
    Ok(out)
}

/// Returns its per-point input unchanged.
pub struct IdentityMap {
    pub orders: Vec<usize>,
}

impl PointMap for IdentityMap {
    fn name(&self) -> String {
        "identity".into()
    }
    fn output_orders(&self) -> Vec<usize> {
        self.orders.clone()
    }
    fn apply(&self, _cloud: &PointCloud, input: &Features) -> Result<Output> {
        Ok(Output::PerPoint(input.clone()))
    }
}

/// One layer with fixed parameters.
pub struct LayerMap<'a> {
    pub layer: &'a Layer,
    pub params: &'a ParamStore,
    pub cg: &'a CgTable,
    pub filter_max: usize,
}

impl<'a> LayerMap<'a> {
    /// The `index`-th layer of `net`.
    pub fn of(net: &'a Network, params: &'a ParamStore, index: usize) -> Self {
        let filter_max = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Convolution(c) => c.paths.iter().map(|p| p.l_filter).max(),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Self { layer: &net.layers()[index], params, cg: net.cg(), filter_max }
    }
}

fn layer_name(layer: &Layer) -> String {
    match layer {
        Layer::Convolution(c) => c.name.clone(),
        Layer::SelfInteraction(s) => s.name.clone(),
        Layer::Nonlinearity(n) => n.name.clone(),
        Layer::MDependentSelfInteraction(s) => s.name.clone(),
    }
}

impl PointMap for LayerMap<'_> {
    fn name(&self) -> String {
        layer_name(self.layer)
    }
    fn output_orders(&self) -> Vec<usize> {
        self.layer.output_channels().into_keys().collect()
    }
    fn apply(&self, cloud: &PointCloud, input: &Features) -> Result<Output> {
        let mut tape = crate::autodiff::Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = FeatureMap::from_features(&mut tape, input)?;
        let g = Geometry::new(cloud, self.filter_max);
        let y = self.layer.forward(&mut tape, &bound, &g, self.cg, &x)?;
        Ok(Output::PerPoint(y.to_features(&tape)))
    }
}

pub struct NetworkMap<'a> {
    pub network: &'a Network,
    pub params: &'a ParamStore,
}

impl PointMap for NetworkMap<'_> {
    fn name(&self) -> String {
        "network".into()
    }
    fn output_orders(&self) -> Vec<usize> {
        self.network.output_channels().into_keys().collect()
    }
    fn apply(&self, cloud: &PointCloud, input: &Features) -> Result<Output> {
        Ok(Output::PerPoint(self.network.evaluate(self.params, cloud, input)?))
    }
}

/// Maps applied in sequence; every stage but the last must be per-point.
pub struct Composed<'a>(pub Vec<&'a dyn PointMap>);

impl PointMap for Composed<'_> {
    fn name(&self) -> String {
        self.0.iter().map(|m| m.name()).collect::<Vec<_>>().join(" ∘ ")
    }
    fn output_orders(&self) -> Vec<usize> {
        self.0.last().map(|m| m.output_orders()).unwrap_or_default()
    }
    fn apply(&self, cloud: &PointCloud, input: &Features) -> Result<Output> {
        let mut x = Output::PerPoint(input.clone());
        for m in &self.0 {
            x = match x {
                Output::PerPoint(f) => apply_checked(*m, cloud, &f)?,
                _ => return Err(Error::invalid("Composed", "only the last stage may pool")),
            };
        }
        Ok(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Rotation,
    Translation,
    Permutation,
    Composition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub map: String,
    pub check: Check,
    pub order: usize,
    pub trial: usize,
    /// `max |Δ| / max(1, rms(baseline))`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub tol: f64,
    pub residuals: Vec<Residual>,
    pub max: f64,
    pub mean: f64,
    pub passed: bool,
}

impl EquivarianceReport {
    pub fn new(tol: f64, residuals: Vec<Residual>) -> Self {
        let max = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
        let mean = if residuals.is_empty() {
            0.0
        } else {
            residuals.iter().map(|r| r.residual).sum::<f64>() / residuals.len() as f64
        };
        let passed = residuals.iter().all(|r| r.residual <= tol);
        Self { tol, residuals, max, mean, passed }
    }

    /// Concatenates residuals; the merged tolerance is the tighter one.
    pub fn merge(self, other: EquivarianceReport) -> Self {
        let mut residuals = self.residuals;
        residuals.extend(other.residuals);
        Self::new(self.tol.min(other.tol), residuals)
    }

    /// Largest residual per (map, check).
    pub fn summary(&self) -> BTreeMap<(String, Check), f64> {
        let mut out: BTreeMap<(String, Check), f64> = BTreeMap::new();
        for r in &self.residuals {
            let e = out.entry((r.map.clone(), r.check)).or_insert(0.0);
            *e = e.max(r.residual);
        }
        out
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<40} {:<12} {:>12}  {}\n", "map", "check", "max", "status");
        for ((map, check), max) in self.summary() {
            let status = if max <= self.tol { "pass" } else { "FAIL" };
            s += &format!("{:<40} {:<12} {:>12.3e}  {status}\n", map, format!("{check:?}").to_lowercase(), max);
        }
        s
    }
}

fn residuals(map: &str, check: Check, trial: usize, got: &Output, want: &Output, baseline_scale: f64) -> Vec<Residual> {
    let norm = baseline_scale.max(1.0);
    got.diff_by_order(want)
        .into_iter()
        .map(|(order, d)| Residual { map: map.to_string(), check, order, trial, residual: d / norm })
        .collect()
}

/// `n` Haar-random rotations from `seed`.
pub fn random_rotations(seed: u64, n: usize) -> Vec<Rotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Rotation::random(&mut rng)).collect()
}

/// `map(R·cloud, D·x)` against `D·map(cloud, x)` for every rotation.
pub fn check_rotation(
    map: &dyn PointMap,
    cloud: &PointCloud,
    input: &Features,
    rotations: &[Rotation],
    tol: f64,
) -> Result<EquivarianceReport> {
    let base = apply_checked(map, cloud, input)?;
    let scale = base.scale();
    let mut out = Vec::new();
    for (trial, r) in rotations.iter().enumerate() {
        let got = apply_checked(map, &cloud.rotated(r), &input.rotated(r))?;
        out.extend(residuals(&map.name(), Check::Rotation, trial, &got, &base.rotated(r), scale));
    }
    Ok(EquivarianceReport::new(tol, out))
}

pub fn check_translation(
    map: &dyn PointMap,
    cloud: &PointCloud,
    input: &Features,
    shifts: &[[f64; 3]],
    tol: f64,
) -> Result<EquivarianceReport> {
    let base = apply_checked(map, cloud, input)?;
    let scale = base.scale();
    let mut out = Vec::new();
    for (trial, &t) in shifts.iter().enumerate() {
        let got = apply_checked(map, &cloud.translated(t), input)?;
        out.extend(residuals(&map.name(), Check::Translation, trial, &got, &base.translated(t), scale));
    }
    Ok(EquivarianceReport::new(tol, out))
}

pub fn check_permutation(
    map: &dyn PointMap,
    cloud: &PointCloud,
    input: &Features,
    perms: &[Vec<usize>],
    tol: f64,
) -> Result<EquivarianceReport> {
    let base = apply_checked(map, cloud, input)?;
    let scale = base.scale();
    let mut out = Vec::new();
    for (trial, p) in perms.iter().enumerate() {
        let mut sorted = p.clone();
        sorted.sort_unstable();
        if sorted != (0..cloud.len()).collect::<Vec<_>>() {
            return Err(Error::invalid("check_permutation", format!("{p:?} is not a permutation of 0..{}", cloud.len())));
        }
        let got = apply_checked(map, &cloud.permuted(p), &input.permuted(p))?;
        out.extend(residuals(&map.name(), Check::Permutation, trial, &got, &base.permuted(p), scale));
    }
    Ok(EquivarianceReport::new(tol, out))
}

/// Rotation check on every stage (fed the previous stage's baseline output)
/// and on the whole stack. Fails if the stack's residual is above `tol` or
/// exceeds the sum of the per-stage residuals by more than `tol`.
pub fn check_composition(
    stages: &[&dyn PointMap],
    cloud: &PointCloud,
    input: &Features,
    rotations: &[Rotation],
    tol: f64,
) -> Result<EquivarianceReport> {
    if stages.len() < 2 {
        return Err(Error::invalid("check_composition", "needs at least two stages"));
    }
    let mut per_stage = vec![0.0; rotations.len()];
    let mut report = EquivarianceReport::new(tol, Vec::new());
    let mut x = input.clone();
    for (i, stage) in stages.iter().enumerate() {
        let r = check_rotation(*stage, cloud, &x, rotations, tol)?;
        let mut worst = vec![0.0f64; rotations.len()];
        for res in &r.residuals {
            worst[res.trial] = worst[res.trial].max(res.residual);
        }
        for (acc, w) in per_stage.iter_mut().zip(worst) {
            *acc += w;
        }
        report = report.merge(r);
        if i + 1 < stages.len() {
            x = match apply_checked(*stage, cloud, &x)? {
                Output::PerPoint(f) => f,
                _ => return Err(Error::invalid("check_composition", "only the last stage may pool")),
            };
        }
    }
    let stack = Composed(stages.to_vec());
    let end = check_rotation(&stack, cloud, input, rotations, tol)?;
    let mut worst_end = vec![0.0f64; rotations.len()];
    for res in &end.residuals {
        worst_end[res.trial] = worst_end[res.trial].max(res.residual);
    }
    let bound_violation: Vec<Residual> = worst_end
        .iter()
        .zip(&per_stage)
        .enumerate()
        .map(|(trial, (&e, &sum))| Residual {
            map: stack.name(),
            check: Check::Composition,
            order: 0,
            trial,
            // zero when within tolerance of the per-stage sum
            residual: (e - sum).max(0.0),
        })
        .collect();
    Ok(report.merge(end).merge(EquivarianceReport::new(tol, bound_violation)))
}

/// For random pairs `(g, h)`: `(residual(gh), residual(g) + residual(h))`.
pub fn group_composition_residuals(
    map: &dyn PointMap,
    cloud: &PointCloud,
    input: &Features,
    pairs: &[(Rotation, Rotation)],
) -> Result<Vec<(f64, f64)>> {
    pairs
        .iter()
        .map(|(g, h)| {
            let worst = |r: &Rotation| -> Result<f64> {
                Ok(check_rotation(map, cloud, input, std::slice::from_ref(r), f64::INFINITY)?.max)
            };
            Ok((worst(&(*g * *h))?, worst(g)? + worst(h)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NdArray;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![[0.0; 3], [1.0, 0.2, 0.0], [0.3, -0.5, 0.9]]).unwrap()
    }

    fn features() -> Features {
        Features::per_point(BTreeMap::from([
            (0, NdArray::new(vec![3, 1, 1], vec![1.0, -2.0, 0.5]).unwrap()),
            (1, NdArray::new(vec![3, 1, 3], vec![0.1, 0.2, 0.3, -1.0, 0.0, 1.0, 0.4, 0.4, -0.2]).unwrap()),
        ]))
        .unwrap()
    }

    #[test]
    fn identity_map_is_neutral() {
        let id = IdentityMap { orders: vec![0, 1] };
        let rot = check_rotation(&id, &cloud(), &features(), &random_rotations(1, 5), 1e-12).unwrap();
        let tr = check_translation(&id, &cloud(), &features(), &[[1.0, 2.0, 3.0]], 0.0).unwrap();
        let pe = check_permutation(&id, &cloud(), &features(), &[vec![2, 0, 1]], 0.0).unwrap();
        assert!(rot.passed && tr.passed && pe.passed);
        assert_eq!(tr.max, 0.0);
        assert_eq!(pe.max, 0.0);
    }

    #[test]
    fn undeclared_order_is_an_error() {
        let id = IdentityMap { orders: vec![0] };
        let err = check_rotation(&id, &cloud(), &features(), &random_rotations(1, 1), 1e-8).unwrap_err();
        assert!(matches!(err, Error::UndeclaredOrder { order: 1 }));
    }

    #[test]
    fn bad_permutation_rejected() {
        let id = IdentityMap { orders: vec![0, 1] };
        assert!(check_permutation(&id, &cloud(), &features(), &[vec![0, 0, 1]], 0.0).is_err());
    }

    #[test]
    fn merge_is_associative() {
        let r = |v: f64| Residual { map: "m".into(), check: Check::Rotation, order: 0, trial: 0, residual: v };
        let a = EquivarianceReport::new(1e-8, vec![r(1e-9)]);
        let b = EquivarianceReport::new(1e-6, vec![r(1e-7)]);
        let c = EquivarianceReport::new(1e-8, vec![r(0.0)]);
        assert_eq!(a.clone().merge(b.clone()).merge(c.clone()), a.merge(b.merge(c)));
    }

    #[test]
    fn report_round_trips_json() {
        let id = IdentityMap { orders: vec![0, 1] };
        let rep = check_rotation(&id, &cloud(), &features(), &random_rotations(2, 2), 1e-8).unwrap();
        let back: EquivarianceReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
        assert!(rep.table().contains("identity"));
    }
}
