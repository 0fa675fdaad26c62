//! Wengert tape: records array primitives during the forward pass and
//! replays them in reverse to accumulate gradients for named leaves.

use std::collections::BTreeMap;

use crate::array::Array;
use crate::error::DiffError;
use crate::kernels::{self, ConvDims, DenseDims, NormDims};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { name: Option<String> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    MeanSquare(Var, Var),
    Dense { x: Var, w: Var, b: Var },
    Conv1d { x: Var, w: Var, b: Var, stride: usize, padding: usize },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, eps: f64 },
    Mish(Var),
    Film { x: Var, scale: Var, shift: Var },
    Concat(Var, Var),
    Narrow { x: Var, start: usize, len: usize },
    UpsampleNearest(Var),
    Transpose12(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MeanSquare(a, b) | Op::Concat(a, b) => {
                vec![a, b]
            }
            Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Mish(a)
            | Op::UpsampleNearest(a)
            | Op::Transpose12(a) => vec![a],
            Op::Narrow { x, .. } => vec![x],
            Op::Dense { x, w, b } | Op::Conv1d { x, w, b, .. } => vec![x, w, b],
            Op::GroupNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::Film { x, scale, shift } => vec![x, scale, shift],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Array,
    requires_grad: bool,
}

/// Ordered record of primitive operations. Every node's inputs precede it.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a backward pass, keyed by leaf name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Array>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Array> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.by_name.iter()
    }

    pub fn into_map(self) -> BTreeMap<String, Array> {
        self.by_name
    }
}

fn same_shape(op: &'static str, a: &Array, b: &Array) -> Result<(), DiffError> {
    if a.shape() != b.shape() {
        return Err(DiffError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn expect_rank(op: &'static str, what: &str, a: &Array, rank: usize) -> Result<(), DiffError> {
    if a.rank() != rank {
        return Err(DiffError::shape(op, format!("{what} must be rank {rank}, got {:?}", a.shape())));
    }
    Ok(())
}

fn dense_dims(x: &Array, w: &Array, b: &Array) -> Result<DenseDims, DiffError> {
    expect_rank("dense", "input", x, 2)?;
    expect_rank("dense", "weight", w, 2)?;
    let d = DenseDims { batch: x.shape()[0], inputs: x.shape()[1], outputs: w.shape()[0] };
    if w.shape()[1] != d.inputs || b.shape() != [d.outputs] {
        return Err(DiffError::shape(
            "dense",
            format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    Ok(d)
}

fn conv_dims(x: &Array, w: &Array, b: &Array, stride: usize, padding: usize) -> Result<ConvDims, DiffError> {
    expect_rank("conv1d", "input", x, 3)?;
    expect_rank("conv1d", "kernel", w, 3)?;
    let d = ConvDims {
        batch: x.shape()[0],
        in_channels: x.shape()[1],
        length: x.shape()[2],
        out_channels: w.shape()[0],
        kernel: w.shape()[2],
        stride,
        padding,
    };
    if w.shape()[1] != d.in_channels || b.shape() != [d.out_channels] || d.out_length().is_none() {
        return Err(DiffError::shape(
            "conv1d",
            format!(
                "input {:?}, kernel {:?}, bias {:?}, stride {stride}, padding {padding}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        ));
    }
    Ok(d)
}

fn norm_dims(x: &Array, gamma: &Array, beta: &Array, groups: usize) -> Result<NormDims, DiffError> {
    expect_rank("group_norm", "input", x, 3)?;
    let d = NormDims { batch: x.shape()[0], channels: x.shape()[1], length: x.shape()[2], groups };
    if groups == 0 || d.channels % groups != 0 || gamma.shape() != [d.channels] || beta.shape() != [d.channels] {
        return Err(DiffError::shape(
            "group_norm",
            format!("input {:?}, {groups} groups, gamma {:?}, beta {:?}", x.shape(), gamma.shape(), beta.shape()),
        ));
    }
    Ok(d)
}

/// Splits a shape around axis 1 into (outer, axis, inner) extents.
fn axis1_split(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product())
}

fn film_check(x: &Array, scale: &Array, shift: &Array) -> Result<(), DiffError> {
    let lead = &x.shape()[..x.rank().saturating_sub(1)];
    if x.rank() < 2 || scale.shape() != lead || shift.shape() != lead {
        return Err(DiffError::shape(
            "film",
            format!("features {:?}, scale {:?}, shift {:?}", x.shape(), scale.shape(), shift.shape()),
        ));
    }
    Ok(())
}

fn eval<'a>(op: &Op, v: impl Fn(Var) -> &'a Array) -> Result<Array, DiffError> {
    Ok(match *op {
        Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
        Op::Add(a, b) => v(a).zip_map(v(b), |x, y| x + y).map_err(|_| shape_pair("add", v(a), v(b)))?,
        Op::Sub(a, b) => v(a).zip_map(v(b), |x, y| x - y).map_err(|_| shape_pair("sub", v(a), v(b)))?,
        Op::Mul(a, b) => v(a).zip_map(v(b), |x, y| x * y).map_err(|_| shape_pair("mul", v(a), v(b)))?,
        Op::Scale(a, s) => v(a).map(|x| x * s),
        Op::Sum(a) => Array::scalar(v(a).data().iter().sum()),
        Op::Mean(a) => Array::scalar(v(a).data().iter().sum::<f64>() / v(a).len() as f64),
        Op::MeanSquare(a, b) => {
            same_shape("mean_square", v(a), v(b))?;
            let s: f64 = v(a).data().iter().zip(v(b).data()).map(|(x, y)| (x - y) * (x - y)).sum();
            Array::scalar(s / v(a).len() as f64)
        }
        Op::Dense { x, w, b } => {
            let d = dense_dims(v(x), v(w), v(b))?;
            let out = kernels::dense_forward(v(x).data(), v(w).data(), v(b).data(), d);
            Array::from_parts(vec![d.batch, d.outputs], out)
        }
        Op::Conv1d { x, w, b, stride, padding } => {
            let d = conv_dims(v(x), v(w), v(b), stride, padding)?;
            let out = kernels::conv1d_forward(v(x).data(), v(w).data(), v(b).data(), d);
            Array::from_parts(vec![d.batch, d.out_channels, d.out_length().unwrap()], out)
        }
        Op::GroupNorm { x, gamma, beta, groups, eps } => {
            let d = norm_dims(v(x), v(gamma), v(beta), groups)?;
            let out = kernels::group_norm_forward(v(x).data(), v(gamma).data(), v(beta).data(), d, eps);
            Array::from_parts(v(x).shape().to_vec(), out)
        }
        Op::Mish(a) => v(a).map(kernels::mish),
        Op::Film { x, scale, shift } => {
            film_check(v(x), v(scale), v(shift))?;
            let len = *v(x).shape().last().unwrap();
            let mut out = v(x).data().to_vec();
            for (i, chunk) in out.chunks_exact_mut(len).enumerate() {
                let (s, h) = (v(scale).data()[i], v(shift).data()[i]);
                for val in chunk {
                    *val = *val * (1.0 + s) + h;
                }
            }
            Array::from_parts(v(x).shape().to_vec(), out)
        }
        Op::Concat(a, b) => {
            let (sa, sb) = (v(a).shape(), v(b).shape());
            if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
                return Err(shape_pair("concat", v(a), v(b)));
            }
            let (outer, na, inner) = axis1_split(sa);
            let nb = sb[1];
            let mut out = Vec::with_capacity(v(a).len() + v(b).len());
            for o in 0..outer {
                out.extend_from_slice(&v(a).data()[o * na * inner..(o + 1) * na * inner]);
                out.extend_from_slice(&v(b).data()[o * nb * inner..(o + 1) * nb * inner]);
            }
            let mut shape = sa.to_vec();
            shape[1] = na + nb;
            Array::from_parts(shape, out)
        }
        Op::Narrow { x, start, len } => {
            let s = v(x).shape();
            if s.len() < 2 || len == 0 || start + len > s[1] {
                return Err(DiffError::shape("narrow", format!("[{start}, {}) of {s:?}", start + len)));
            }
            let (outer, n, inner) = axis1_split(s);
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * n * inner;
                out.extend_from_slice(&v(x).data()[base + start * inner..base + (start + len) * inner]);
            }
            let mut shape = s.to_vec();
            shape[1] = len;
            Array::from_parts(shape, out)
        }
        Op::UpsampleNearest(a) => {
            let len = *v(a).shape().last().unwrap();
            let mut out = Vec::with_capacity(2 * v(a).len());
            for row in v(a).data().chunks_exact(len) {
                for &val in row {
                    out.push(val);
                    out.push(val);
                }
            }
            let mut shape = v(a).shape().to_vec();
            *shape.last_mut().unwrap() *= 2;
            Array::from_parts(shape, out)
        }
        Op::Transpose12(a) => {
            expect_rank("transpose12", "input", v(a), 3)?;
            let (b, r, c) = (v(a).shape()[0], v(a).shape()[1], v(a).shape()[2]);
            Array::from_parts(vec![b, c, r], transpose12(v(a).data(), b, r, c))
        }
    })
}

fn shape_pair(op: &'static str, a: &Array, b: &Array) -> DiffError {
    DiffError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape()))
}

fn transpose12(data: &[f64], b: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for bi in 0..b {
        for i in 0..r {
            for j in 0..c {
                out[bi * r * c + j * r + i] = data[bi * r * c + i * c + j];
            }
        }
    }
    out
}

/// Vector-Jacobian products of one node: `(input, gradient)` pairs.
fn vjp(op: &Op, out: &Array, g: &Array, nodes: &[Node]) -> Vec<(Var, Array)> {
    let v = |var: Var| &nodes[var.0].value;
    let like = |var: Var, data: Vec<f64>| Array::from_parts(v(var).shape().to_vec(), data);
    match *op {
        Op::Leaf { .. } => vec![],
        Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
        Op::Sub(a, b) => vec![(a, g.clone()), (b, g.map(|x| -x))],
        Op::Mul(a, b) => vec![
            (a, g.zip_map(v(b), |x, y| x * y).unwrap()),
            (b, g.zip_map(v(a), |x, y| x * y).unwrap()),
        ],
        Op::Scale(a, s) => vec![(a, g.map(|x| x * s))],
        Op::Sum(a) => vec![(a, Array::full(v(a).shape(), g.item()))],
        Op::Mean(a) => vec![(a, Array::full(v(a).shape(), g.item() / v(a).len() as f64))],
        Op::MeanSquare(a, b) => {
            let k = 2.0 * g.item() / v(a).len() as f64;
            let da = v(a).zip_map(v(b), |x, y| k * (x - y)).unwrap();
            let db = da.map(|x| -x);
            vec![(a, da), (b, db)]
        }
        Op::Dense { x, w, b } => {
            let d = dense_dims(v(x), v(w), v(b)).unwrap();
            let (dx, dw, db) = kernels::dense_backward(v(x).data(), v(w).data(), g.data(), d);
            vec![(x, like(x, dx)), (w, like(w, dw)), (b, like(b, db))]
        }
        Op::Conv1d { x, w, b, stride, padding } => {
            let d = conv_dims(v(x), v(w), v(b), stride, padding).unwrap();
            let (dx, dw, db) = kernels::conv1d_backward(v(x).data(), v(w).data(), g.data(), d);
            vec![(x, like(x, dx)), (w, like(w, dw)), (b, like(b, db))]
        }
        Op::GroupNorm { x, gamma, beta, groups, eps } => {
            let d = norm_dims(v(x), v(gamma), v(beta), groups).unwrap();
            let (dx, dg, db) = kernels::group_norm_backward(v(x).data(), v(gamma).data(), g.data(), d, eps);
            vec![(x, like(x, dx)), (gamma, like(gamma, dg)), (beta, like(beta, db))]
        }
        Op::Mish(a) => vec![(a, g.zip_map(v(a), |gy, x| gy * kernels::mish_grad(x)).unwrap())],
        Op::Film { x, scale, shift } => {
            let len = *v(x).shape().last().unwrap();
            let mut dx = g.data().to_vec();
            let mut ds = vec![0.0; v(scale).len()];
            let mut dh = vec![0.0; v(shift).len()];
            for (i, (gchunk, xchunk)) in g.data().chunks_exact(len).zip(v(x).data().chunks_exact(len)).enumerate() {
                let s = v(scale).data()[i];
                for l in 0..len {
                    dx[i * len + l] = gchunk[l] * (1.0 + s);
                    ds[i] += gchunk[l] * xchunk[l];
                    dh[i] += gchunk[l];
                }
            }
            vec![(x, like(x, dx)), (scale, like(scale, ds)), (shift, like(shift, dh))]
        }
        Op::Concat(a, b) => {
            let (outer, na, inner) = axis1_split(v(a).shape());
            let nb = v(b).shape()[1];
            let mut da = Vec::with_capacity(v(a).len());
            let mut db = Vec::with_capacity(v(b).len());
            for o in 0..outer {
                let base = o * (na + nb) * inner;
                da.extend_from_slice(&g.data()[base..base + na * inner]);
                db.extend_from_slice(&g.data()[base + na * inner..base + (na + nb) * inner]);
            }
            vec![(a, like(a, da)), (b, like(b, db))]
        }
        Op::Narrow { x, start, len } => {
            let (outer, n, inner) = axis1_split(v(x).shape());
            let mut dx = vec![0.0; v(x).len()];
            for o in 0..outer {
                let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                let base = o * n * inner + start * inner;
                dx[base..base + len * inner].copy_from_slice(src);
            }
            vec![(x, like(x, dx))]
        }
        Op::UpsampleNearest(a) => {
            let dx = g.data().chunks_exact(2).map(|p| p[0] + p[1]).collect();
            vec![(a, like(a, dx))]
        }
        Op::Transpose12(a) => {
            let s = out.shape();
            vec![(a, like(a, transpose12(g.data(), s[0], s[1], s[2])))]
        }
    }
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

    pub fn value(&self, var: Var) -> &Array {
        &self.nodes[var.0].value
    }

    /// Records a differentiable input. Names must be unique on a tape.
    pub fn leaf(&mut self, name: &str, value: Array) -> Result<Var, DiffError> {
        if self.nodes.iter().any(|n| matches!(&n.op, Op::Leaf { name: Some(existing) } if existing == name)) {
            return Err(DiffError::Usage(format!("leaf `{name}` recorded twice")));
        }
        Ok(self.push_node(Op::Leaf { name: Some(name.to_string()) }, value, true))
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: Array) -> Var {
        self.push_node(Op::Leaf { name: None }, value, false)
    }

    fn push_node(&mut self, op: Op, value: Array, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var, DiffError> {
        let nodes = &self.nodes;
        let value = eval(&op, |var| &nodes[var.0].value)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(op, value, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, DiffError> {
        self.record(Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        self.record(Op::Mean(a))
    }

    /// Mean over all elements of `(a - b)²`.
    pub fn mean_square(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::MeanSquare(a, b))
    }

    /// `x [B, in] · wᵀ + b` with `w [out, in]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::Dense { x, w, b })
    }

    /// 1D cross-correlation of `x [B, Cin, L]` with `w [Cout, Cin, K]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var, DiffError> {
        self.record(Op::Conv1d { x, w, b, stride, padding })
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize, eps: f64) -> Result<Var, DiffError> {
        self.record(Op::GroupNorm { x, gamma, beta, groups, eps })
    }

    pub fn mish(&mut self, a: Var) -> Result<Var, DiffError> {
        self.record(Op::Mish(a))
    }

    /// `x · (1 + scale) + shift`, with scale/shift indexed by all but the last axis of `x`.
    pub fn film(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var, DiffError> {
        self.record(Op::Film { x, scale, shift })
    }

    /// Concatenates along axis 1.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.record(Op::Concat(a, b))
    }

    /// Slice `[start, start + len)` of axis 1.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        self.record(Op::Narrow { x, start, len })
    }

    /// Repeats every element of the last axis twice.
    pub fn upsample_nearest(&mut self, a: Var) -> Result<Var, DiffError> {
        self.record(Op::UpsampleNearest(a))
    }

    /// Swaps the last two axes of a rank-3 array.
    pub fn transpose12(&mut self, a: Var) -> Result<Var, DiffError> {
        self.record(Op::Transpose12(a))
    }

    /// Re-evaluates every recorded node from the stored leaf values.
    pub fn replay(&self) -> Result<Vec<Array>, DiffError> {
        let mut values: Vec<Array> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf { .. } => node.value.clone(),
                ref op => eval(op, |var| &values[var.0])?,
            };
            values.push(value);
        }
        Ok(values)
    }

    /// True when [`Tape::replay`] reproduces every stored value bit for bit.
    pub fn replay_matches(&self) -> Result<bool, DiffError> {
        let values = self.replay()?;
        Ok(values.iter().zip(&self.nodes).all(|(a, n)| {
            a.shape() == n.value.shape()
                && a.data().iter().zip(n.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        }))
    }

    /// Reverse sweep from `output`, seeded with `seed` (same shape as the output).
    ///
    /// A tape supports exactly one backward pass.
    pub fn backward(&mut self, output: Var, seed: &Array) -> Result<Gradients, DiffError> {
        if self.consumed {
            return Err(DiffError::Usage("tape already consumed by a backward pass".into()));
        }
        if output.0 >= self.nodes.len() {
            return Err(DiffError::Usage(format!("output {output:?} is not on this tape")));
        }
        if seed.shape() != self.nodes[output.0].value.shape() {
            return Err(DiffError::shape(
                "backward",
                format!("seed {:?} vs output {:?}", seed.shape(), self.nodes[output.0].value.shape()),
            ));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Array>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.clone());
        let mut named = BTreeMap::new();
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf { name: Some(name) } = &node.op {
                named.insert(name.clone(), g);
                continue;
            }
            for (input, contrib) in vjp(&node.op, &node.value, &g, &self.nodes) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0].take() {
                    Some(acc) => acc.zip_map(&contrib, |a, b| a + b)?,
                    None => contrib,
                });
            }
        }
        // Leaves that the output does not depend on get explicit zeros.
        for node in &self.nodes[..=output.0] {
            if let Op::Leaf { name: Some(name) } = &node.op {
                named.entry(name.clone()).or_insert_with(|| Array::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { by_name: named })
    }
}

/// Records `expr` over named leaves and returns its value, the tape, and the output handle.
pub fn record_forward<F>(leaves: &[(&str, Array)], expr: F) -> Result<(Array, Tape, Var), DiffError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars = leaves
        .iter()
        .map(|(name, value)| tape.leaf(name, value.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = expr(&mut tape, &vars)?;
    Ok((tape.value(out).clone(), tape, out))
}
