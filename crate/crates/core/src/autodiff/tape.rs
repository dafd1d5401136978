use std::collections::BTreeMap;

use super::array::{broadcast_shape, broadcast_strides, for_each_broadcast, reduce_to, NdArray};
use super::contract::{contract, ContractSpec};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Contract(Var, Var, ContractSpec),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    SumAxis(Var, usize),
    Sqrt(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    ShiftedSoftplus(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Narrow(Var, usize, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: NdArray,
    op: Op,
}

/// Append-only record of array operations for reverse-mode differentiation.
///
/// Node ids increase strictly, so every op refers only to earlier nodes.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Adjoints of every node with respect to one scalar loss.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<NdArray>>,
    params: Vec<(String, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&NdArray> {
        self.grads[var.0].as_ref()
    }

    /// Gradient of each registered parameter; parameters the loss does not reach get zeros.
    pub fn by_name(&self) -> BTreeMap<String, NdArray> {
        self.params
            .iter()
            .map(|(name, v)| {
                let g = self.grads[v.0]
                    .clone()
                    .unwrap_or_else(|| NdArray::zeros(&self.shapes[v.0]));
                (name.clone(), g)
            })
            .collect()
    }
}

pub(crate) fn ssp(x: f64) -> f64 {
    // ln(0.5 eˣ + 0.5) = softplus(x) − ln 2, evaluated without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p() - std::f64::consts::LN_2
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_axis(x: &NdArray, axis: usize) -> NdArray {
    let (outer, len, inner) = NdArray::axis_split(x.shape(), axis);
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (d[at(k)] - max).exp();
                d[at(k)] = e;
                total += e;
            }
            for k in 0..len {
                d[at(k)] /= total;
            }
        }
    }
    out
}

fn sum_axis(x: &NdArray, axis: usize) -> NdArray {
    let (outer, len, inner) = NdArray::axis_split(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    let mut out = NdArray::zeros(&shape);
    let (src, dst) = (x.data(), out.data_mut());
    for o in 0..outer {
        for k in 0..len {
            for i in 0..inner {
                dst[o * inner + i] += src[(o * len + k) * inner + i];
            }
        }
    }
    out
}

/// Repeats `g` (shape of `x` with `axis` removed) along `axis` of length `len`.
fn expand_axis(g: &NdArray, shape: &[usize], axis: usize) -> NdArray {
    let (outer, len, inner) = NdArray::axis_split(shape, axis);
    let mut out = NdArray::zeros(shape);
    let (src, dst) = (g.data(), out.data_mut());
    for o in 0..outer {
        for k in 0..len {
            for i in 0..inner {
                dst[(o * len + k) * inner + i] = src[o * inner + i];
            }
        }
    }
    out
}

fn matmul(a: &NdArray, b: &NdArray) -> NdArray {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = NdArray::zeros(&[m, n]);
    let (ad, bd, od) = (a.data(), b.data(), out.data_mut());
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                od[i * n + j] += av * bd[p * n + j];
            }
        }
    }
    out
}

fn transpose2(a: &NdArray) -> NdArray {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = NdArray::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data_mut()[j * m + i] = a.data()[i * n + j];
        }
    }
    out
}

fn binary_broadcast(a: &NdArray, b: &NdArray, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<NdArray> {
    let shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::shape(op, a.shape(), b.shape()))?;
    if a.shape() == b.shape() {
        return Ok(a.zip_map(b, f));
    }
    let (sa, sb) = (broadcast_strides(a.shape(), &shape), broadcast_strides(b.shape(), &shape));
    let mut out = NdArray::zeros(&shape);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for_each_broadcast(&shape, &sa, &sb, |o, i, j| od[o] = f(ad[i], bd[j]));
    Ok(out)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::invalid(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: NdArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &NdArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: NdArray) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a named trainable leaf.
    pub fn param(&mut self, name: impl Into<String>, value: NdArray) -> Var {
        let v = self.push(value, Op::Leaf);
        self.params.push((name.into(), v));
        v
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_broadcast(self.value(a), self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_broadcast(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = binary_broadcast(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddScalar(a))
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let v = matmul(self.value(a), self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Contraction over named axes, e.g. `"ij,jk->ik"`.
    pub fn contract(&mut self, a: Var, b: Var, spec: &str) -> Result<Var> {
        let spec = ContractSpec::parse(spec)?;
        let v = contract(self.value(a), self.value(b), &spec)?;
        Ok(self.push(v, Op::Contract(a, b, spec)))
    }

    /// Rows of `x` (axis 0) at `indices`.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() == 0 {
            return Err(Error::invalid("gather", "cannot index a scalar"));
        }
        let (rows, inner) = (xv.shape()[0], xv.len() / xv.shape()[0].max(1));
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid("gather", format!("index {bad} out of range for {rows} rows")));
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            data.extend_from_slice(&xv.data()[i * inner..(i + 1) * inner]);
        }
        let v = NdArray::new(shape, data)?;
        Ok(self.push(v, Op::Gather(x, indices.to_vec())))
    }

    /// Adds row `k` of `x` into row `indices[k]` of a zero array with `rows` rows.
    pub fn scatter_add(&mut self, x: Var, indices: &[usize], rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.ndim() == 0 || xv.shape()[0] != indices.len() {
            return Err(Error::shape("scatter_add", xv.shape(), &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid("scatter_add", format!("index {bad} out of range for {rows} rows")));
        }
        let inner = xv.len() / indices.len().max(1);
        let mut shape = xv.shape().to_vec();
        shape[0] = rows;
        let mut out = NdArray::zeros(&shape);
        for (k, &i) in indices.iter().enumerate() {
            for j in 0..inner {
                out.data_mut()[i * inner + j] += xv.data()[k * inner + j];
            }
        }
        Ok(self.push(out, Op::ScatterAdd(x, indices.to_vec())))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("sum_axis", self.shape(x), axis)?;
        let v = sum_axis(self.value(x), axis);
        Ok(self.push(v, Op::SumAxis(x, axis)))
    }

    /// Sum of every entry, as a shape-`[]` scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let flat = self.reshape(x, &[n])?;
        self.sum_axis(flat, 0)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::sqrt);
        self.push(v, Op::Sqrt(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::ln);
        self.push(v, Op::Ln(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("softmax", self.shape(x), axis)?;
        let v = softmax_axis(self.value(x), axis);
        Ok(self.push(v, Op::Softmax(x, axis)))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("log_softmax", self.shape(x), axis)?;
        let p = softmax_axis(self.value(x), axis);
        let (outer, len, inner) = NdArray::axis_split(p.shape(), axis);
        let mut v = self.value(x).clone();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| v.data()[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..len).map(|k| (v.data()[at(k)] - max).exp()).sum::<f64>().ln();
                for k in 0..len {
                    v.data_mut()[at(k)] -= lse;
                }
            }
        }
        Ok(self.push(v, Op::LogSoftmax(x, axis)))
    }

    /// `ln(0.5 eˣ + 0.5)`, zero at the origin.
    pub fn shifted_softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(ssp);
        self.push(v, Op::ShiftedSoftplus(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Joins arrays along `axis`; all other extents must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let base = self.shape(first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = NdArray::axis_split(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let v = self.value(x);
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let v = NdArray::new(shape, data)?;
        Ok(self.push(v, Op::Concat(xs.to_vec(), axis)))
    }

    /// Slice `start..start + len` of `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("narrow", &shape, axis)?;
        if start + len > shape[axis] {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} exceeds extent {} of shape {shape:?}", start + len, shape[axis]),
            ));
        }
        let (outer, full, inner) = NdArray::axis_split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let begin = (o * full + start) * inner;
            data.extend_from_slice(&src[begin..begin + len * inner]);
        }
        let v = NdArray::new(out_shape, data)?;
        Ok(self.push(v, Op::Narrow(x, axis, start)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 || lv.ndim() > 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<NdArray>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(NdArray::full(lv.shape(), 1.0));

        fn accumulate(grads: &mut [Option<NdArray>], v: Var, g: NdArray) {
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(&g, self.shape(*a)));
                    accumulate(&mut grads, *b, reduce_to(&g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(&g, self.shape(*a)));
                    accumulate(&mut grads, *b, reduce_to(&g.map(|v| -v), self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = binary_broadcast(&g, bv, "mul", |x, y| x * y)?;
                    let gb = binary_broadcast(&g, av, "mul", |x, y| x * y)?;
                    accumulate(&mut grads, *a, reduce_to(&ga, av.shape()));
                    accumulate(&mut grads, *b, reduce_to(&gb, bv.shape()));
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|v| k * v)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, matmul(&g, &transpose2(bv)));
                    accumulate(&mut grads, *b, matmul(&transpose2(av), &g));
                }
                Op::Contract(a, b, spec) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, contract(&g, bv, &spec.grad_a())?);
                    accumulate(&mut grads, *b, contract(&g, av, &spec.grad_b())?);
                }
                Op::Gather(x, indices) => {
                    let xs = self.shape(*x);
                    let inner = self.value(*x).len() / xs[0].max(1);
                    let mut gx = NdArray::zeros(xs);
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..inner {
                            gx.data_mut()[i * inner + j] += g.data()[k * inner + j];
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ScatterAdd(x, indices) => {
                    let xs = self.shape(*x);
                    let inner = self.value(*x).len() / indices.len().max(1);
                    let mut data = Vec::with_capacity(self.value(*x).len());
                    for &i in indices {
                        data.extend_from_slice(&g.data()[i * inner..(i + 1) * inner]);
                    }
                    accumulate(&mut grads, *x, NdArray::new(xs.to_vec(), data)?);
                }
                Op::SumAxis(x, axis) => {
                    accumulate(&mut grads, *x, expand_axis(&g, self.shape(*x), *axis));
                }
                Op::Sqrt(x) => accumulate(&mut grads, *x, g.zip_map(y, |gv, yv| 0.5 * gv / yv)),
                Op::Exp(x) => accumulate(&mut grads, *x, g.zip_map(y, |gv, yv| gv * yv)),
                Op::Ln(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, g.zip_map(xv, |gv, xv| gv / xv));
                }
                Op::Square(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, g.zip_map(xv, |gv, xv| 2.0 * gv * xv));
                }
                Op::Softmax(x, axis) => {
                    let gy = g.zip_map(y, |a, b| a * b);
                    let s = expand_axis(&sum_axis(&gy, *axis), y.shape(), *axis);
                    let mut gx = gy;
                    for ((gx, yv), sv) in gx.data_mut().iter_mut().zip(y.data()).zip(s.data()) {
                        *gx -= yv * sv;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::LogSoftmax(x, axis) => {
                    let s = expand_axis(&sum_axis(&g, *axis), y.shape(), *axis);
                    let mut gx = g.clone();
                    for ((gx, yv), sv) in gx.data_mut().iter_mut().zip(y.data()).zip(s.data()) {
                        *gx -= yv.exp() * sv;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ShiftedSoftplus(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, g.zip_map(xv, |gv, xv| gv * sigmoid(xv)));
                }
                Op::Reshape(x) => {
                    accumulate(&mut grads, *x, g.clone().reshape(self.shape(*x))?);
                }
                Op::Concat(xs, axis) => {
                    let mut start = 0;
                    let (outer, total, inner) = NdArray::axis_split(g.shape(), *axis);
                    for &x in xs {
                        let s = self.shape(x);
                        let len = s[*axis];
                        let mut data = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let begin = (o * total + start) * inner;
                            data.extend_from_slice(&g.data()[begin..begin + len * inner]);
                        }
                        accumulate(&mut grads, x, NdArray::new(s.to_vec(), data)?);
                        start += len;
                    }
                }
                Op::Narrow(x, axis, start) => {
                    let s = self.shape(*x);
                    let (outer, full, inner) = NdArray::axis_split(s, *axis);
                    let len = g.shape()[*axis];
                    let mut gx = NdArray::zeros(s);
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let src = o * len * inner;
                        gx.data_mut()[dst..dst + len * inner]
                            .copy_from_slice(&g.data()[src..src + len * inner]);
                    }
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[id] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}
