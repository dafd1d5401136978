use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::feature::{FeatureMap, PointCloud};
use super::radial::{RadialConfig, RadialNet};
use crate::autodiff::{Bound, NdArray, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::so3::{CgTable, RealSphericalHarmonicBasis};

/// One convolution path: an order-`l_in` input, an order-`l_filter` filter,
/// coupled to order `l_out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterSpec {
    pub l_in: usize,
    pub l_filter: usize,
    pub l_out: usize,
}

impl FilterSpec {
    pub fn new(l_in: usize, l_filter: usize, l_out: usize) -> Result<Self> {
        if l_out < l_in.abs_diff(l_filter) || l_out > l_in + l_filter {
            return Err(Error::invalid(
                "FilterSpec",
                format!("{l_in} ⊗ {l_filter} cannot couple to {l_out}"),
            ));
        }
        Ok(Self { l_in, l_filter, l_out })
    }

    /// Every admissible output order of `l_in ⊗ l_filter`.
    pub fn fan_out(l_in: usize, l_filter: usize) -> Vec<FilterSpec> {
        (l_in.abs_diff(l_filter)..=l_in + l_filter)
            .map(|l_out| FilterSpec { l_in, l_filter, l_out })
            .collect()
    }
}

/// Pairwise displacements `r_ab = r_a − r_b` of one cloud, with distances and
/// spherical harmonics precomputed for every ordered pair.
///
/// At `r_ab = 0` (the self-pair, or coincident points) the order-0 harmonic
/// keeps its constant value and every higher order is zero.
#[derive(Clone, Debug)]
pub struct Geometry {
    n: usize,
    distances: Vec<f64>,
    harmonics: Vec<NdArray>,
}

impl Geometry {
    pub fn new(cloud: &PointCloud, l_max: usize) -> Self {
        let n = cloud.len();
        let basis = RealSphericalHarmonicBasis::new(l_max);
        let mut distances = Vec::with_capacity(n * n);
        let mut harmonics: Vec<NdArray> = (0..=l_max).map(|l| NdArray::zeros(&[n, n, 2 * l + 1])).collect();
        let y0 = 0.5 / std::f64::consts::PI.sqrt();
        for a in 0..n {
            for b in 0..n {
                let r = cloud.relative(a, b);
                let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                distances.push(d);
                if d == 0.0 {
                    harmonics[0].set(&[a, b, 0], y0);
                    continue;
                }
                let ys = basis.eval_all(r).expect("nonzero displacement");
                for (l, y) in ys.into_iter().enumerate() {
                    let dim = 2 * l + 1;
                    let off = (a * n + b) * dim;
                    harmonics[l].data_mut()[off..off + dim].copy_from_slice(&y);
                }
            }
        }
        Self { n, distances, harmonics }
    }

    pub fn num_points(&self) -> usize {
        self.n
    }

    pub fn l_max(&self) -> usize {
        self.harmonics.len() - 1
    }

    /// Row-major `[n, n]` distances.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `[n, n, 2l + 1]`.
    pub fn harmonics(&self, l: usize) -> Result<&NdArray> {
        self.harmonics.get(l).ok_or_else(|| {
            Error::invalid("Geometry", format!("order {l} above precomputed l_max {}", self.l_max()))
        })
    }
}

/// Evaluates `F_cm(r⃗) = R_c(|r⃗|) Y_m(r̂)` for one path; returns `[channels, 2l_f + 1]`.
/// `net` must produce exactly the channels of this filter.
pub fn filter_eval(spec: &FilterSpec, net: &RadialNet, params: &ParamStore, r: [f64; 3]) -> Result<NdArray> {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !d.is_finite() {
        return Err(Error::invalid("filter_eval", "displacement must be finite"));
    }
    let radial = net.eval(params, d)?;
    let dim = 2 * spec.l_filter + 1;
    let y = if d == 0.0 {
        let mut y = vec![0.0; dim];
        if spec.l_filter == 0 {
            y[0] = 0.5 / std::f64::consts::PI.sqrt();
        }
        y
    } else {
        RealSphericalHarmonicBasis::new(spec.l_filter).eval(spec.l_filter, r)?
    };
    let data = radial.iter().flat_map(|&rc| y.iter().map(move |&ym| rc * ym)).collect();
    NdArray::new(vec![radial.len(), dim], data)
}

/// One path of the point convolution,
/// `L[a, c, m_o] = Σ_{m_f, m_i} C[m_o, m_f, m_i] Σ_b R[a, b, c] Y[a, b, m_f] V[b, c, m_i]`.
///
/// `radial` is `[n, n, c]` and `input` is `[n, c, 2l_i + 1]`; channels are
/// not mixed.
pub fn point_convolution(
    tape: &mut Tape,
    spec: &FilterSpec,
    radial: Var,
    geometry: &Geometry,
    cg: &CgTable,
    input: Var,
) -> Result<Var> {
    let n = geometry.num_points();
    let (rs, is) = (tape.shape(radial).to_vec(), tape.shape(input).to_vec());
    if is.len() != 3 || is[0] != n || is[2] != 2 * spec.l_in + 1 {
        return Err(Error::shape("point_convolution", &is, &[n, is.get(1).copied().unwrap_or(0), 2 * spec.l_in + 1]));
    }
    if rs != [n, n, is[1]] {
        return Err(Error::shape("point_convolution", &rs, &[n, n, is[1]]));
    }
    let block = cg
        .block(spec.l_out, spec.l_filter, spec.l_in)
        .ok_or_else(|| Error::invalid("point_convolution", format!("no coupling block for {spec:?}")))?;
    let cg_var = tape.constant(NdArray::new(block.shape().to_vec(), block.data().to_vec())?);
    let y = tape.constant(geometry.harmonics(spec.l_filter)?.clone());
    let filter = tape.contract(radial, y, "abc,abf->abcf")?;
    let summed = tape.contract(filter, input, "abcf,bci->acfi")?;
    tape.contract(summed, cg_var, "acfi,ofi->aco")
}

/// A set of convolution paths sharing one radial network. The network has
/// one output per `(l_f, l_i, channel)`; outputs of paths landing on the
/// same `l_o` are concatenated along channels in path order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub paths: Vec<FilterSpec>,
    pub input_channels: BTreeMap<usize, usize>,
    pub radial: RadialNet,
    pub cutoff: Option<f64>,
    /// `(l_f, l_i) → first output column` in the radial network.
    slots: BTreeMap<(usize, usize), usize>,
}

impl ConvLayer {
    pub fn new(
        name: impl Into<String>,
        paths: Vec<FilterSpec>,
        input_channels: BTreeMap<usize, usize>,
        radial: RadialConfig,
        cutoff: Option<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if paths.is_empty() {
            return Err(Error::invalid("ConvLayer", "needs at least one path"));
        }
        let mut slots = BTreeMap::new();
        let mut width = 0;
        for p in &paths {
            FilterSpec::new(p.l_in, p.l_filter, p.l_out)?;
            let c = *input_channels
                .get(&p.l_in)
                .ok_or(Error::MissingOrder { order: p.l_in })?;
            slots.entry((p.l_filter, p.l_in)).or_insert_with(|| {
                let start = width;
                width += c;
                start
            });
        }
        if let Some(c) = cutoff {
            if !(c > 0.0) {
                return Err(Error::invalid("ConvLayer", format!("cutoff must be positive, got {c}")));
            }
        }
        let radial = RadialNet::new(format!("{name}.radial"), radial, width)?;
        Ok(Self {
            name,
            paths,
            input_channels,
            radial,
            cutoff,
            slots,
        })
    }

    pub fn max_order(&self) -> usize {
        self.paths.iter().map(|p| p.l_filter.max(p.l_out).max(p.l_in)).max().unwrap_or(0)
    }

    pub fn filters(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.slots.iter().map(|(&k, &v)| (k, v))
    }

    pub fn output_channels(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for p in &self.paths {
            *out.entry(p.l_out).or_insert(0) += self.input_channels[&p.l_in];
        }
        out
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.radial.init_params(store, rng);
    }

    /// Learned radial values for filter `(l_f, l_i)` at distance `r`, one per channel.
    pub fn radial_eval(&self, params: &ParamStore, l_filter: usize, l_in: usize, r: f64) -> Result<Vec<f64>> {
        let start = *self
            .slots
            .get(&(l_filter, l_in))
            .ok_or_else(|| Error::invalid("radial_eval", format!("no filter ({l_filter}, {l_in})")))?;
        let all = self.radial.eval(params, r)?;
        Ok(all[start..start + self.input_channels[&l_in]].to_vec())
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        geometry: &Geometry,
        cg: &CgTable,
        input: &FeatureMap,
    ) -> Result<FeatureMap> {
        let n = geometry.num_points();
        if input.num_points() != n {
            return Err(Error::shape("ConvLayer", &[input.num_points()], &[n]));
        }
        for (&l, &c) in &self.input_channels {
            match input.channels(tape, l) {
                Some(got) if got == c => {}
                Some(got) => return Err(Error::shape("ConvLayer", &[n, got, 2 * l + 1], &[n, c, 2 * l + 1])),
                None => return Err(Error::MissingOrder { order: l }),
            }
        }
        let mut radial = self.radial.forward(tape, bound, geometry.distances())?;
        if let Some(cutoff) = self.cutoff {
            let mask: Vec<f64> = geometry
                .distances()
                .iter()
                .map(|&d| if d <= cutoff { 1.0 } else { 0.0 })
                .collect();
            let mask = tape.constant(NdArray::new(vec![n * n, 1], mask)?);
            radial = tape.mul(radial, mask)?;
        }

        let mut per_order: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
        for p in &self.paths {
            let c = self.input_channels[&p.l_in];
            let start = self.slots[&(p.l_filter, p.l_in)];
            let r = tape.narrow(radial, 1, start, c)?;
            let r = tape.reshape(r, &[n, n, c])?;
            let v = input.get(p.l_in)?;
            let out = point_convolution(tape, p, r, geometry, cg, v)?;
            per_order.entry(p.l_out).or_default().push(out);
        }
        let mut out = FeatureMap::empty(n);
        for (l, parts) in per_order {
            let v = if parts.len() == 1 { parts[0] } else { tape.concat(&parts, 1)? };
            out.insert(tape, l, v)?;
        }
        Ok(out)
    }
}
