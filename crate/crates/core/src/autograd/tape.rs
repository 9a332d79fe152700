use std::collections::HashMap;

use ndarray::{concatenate, ArrayD, ArrayView2, Axis, Ix1, Ix2, IxDyn};

use super::conv;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Gradients of one scalar output with respect to tape nodes, keyed by node.
pub struct Gradients<T: Scalar> {
    by_node: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a node, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&ArrayD<T>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }
}

enum Op<T: Scalar> {
    Leaf { param: Option<String> },
    Add,
    Sub,
    Mul,
    Neg,
    AddScalar,
    MulScalar(T),
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Square,
    LeakyRelu(T),
    Clamp(T, T),
    SumAll,
    MeanAll,
    MatMul,
    Transpose,
    Reshape { from: Vec<usize> },
    SliceCols { start: usize, from_len: usize },
    PadCols { left: usize, from_len: usize },
    SliceRows { start: usize, from_rows: usize },
    ConcatRows { row_counts: Vec<usize> },
    GatherCols { indices: Vec<usize>, from_len: usize },
    SoftmaxRows,
    LayerNorm { eps: T },
    WeightNorm,
    Conv1d { stride: usize, pad: usize },
    ConvTranspose1d { stride: usize, pad: usize },
    Conv2d { stride: (usize, usize), pad: (usize, usize) },
    AvgPool1d { k: usize },
}

struct Node<T: Scalar> {
    value: ArrayD<T>,
    parents: Vec<Var>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only computation graph for one forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    param_leaves: HashMap<String, Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), param_leaves: HashMap::new() }
    }

    pub fn value(&self, v: Var) -> &ArrayD<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> T {
        let value = &self.nodes[v.0].value;
        assert_eq!(value.len(), 1, "scalar() on non-scalar node");
        *value.iter().next().unwrap()
    }

    fn push(&mut self, value: ArrayD<T>, parents: Vec<Var>, op: Op<T>) -> Var {
        // Keep every node value in standard layout so kernels can take the
        // contiguous fast path unconditionally.
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        let needs_grad = match op {
            Op::Leaf { ref param } => param.is_some(),
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, parents, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf: gradients never flow into it.
    pub fn constant(&mut self, value: ArrayD<T>) -> Var {
        self.push(value, vec![], Op::Leaf { param: None })
    }

    /// Named parameter leaf. Binding the same name twice returns the first
    /// leaf so a parameter appears once per tape.
    pub fn param(&mut self, name: &str, value: ArrayD<T>) -> Var {
        if let Some(&v) = self.param_leaves.get(name) {
            return v;
        }
        let v = self.push(value, vec![], Op::Leaf { param: Some(name.to_string()) });
        self.param_leaves.insert(name.to_string(), v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, vec![a, b], Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, vec![a, b], Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(value, vec![a, b], Op::Mul)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| -x);
        self.push(value, vec![a], Op::Neg)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x + c);
        self.push(value, vec![a], Op::AddScalar)
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * c);
        self.push(value, vec![a], Op::MulScalar(c))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.exp());
        self.push(value, vec![a], Op::Exp)
    }

    /// Natural log; caller guarantees positive inputs.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.ln());
        self.push(value, vec![a], Op::Log)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.sqrt());
        self.push(value, vec![a], Op::Sqrt)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.tanh());
        self.push(value, vec![a], Op::Tanh)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.abs());
        self.push(value, vec![a], Op::Abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * x);
        self.push(value, vec![a], Op::Square)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| if x >= T::zero() { x } else { x * slope });
        self.push(value, vec![a], Op::LeakyRelu(slope))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(lo).min(hi));
        self.push(value, vec![a], Op::Clamp(lo, hi))
    }

    /// Sum of all elements; result has shape `[1]`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: T = self.nodes[a.0].value.iter().copied().sum();
        self.push(ArrayD::from_elem(IxDyn(&[1]), s), vec![a], Op::SumAll)
    }

    /// Mean of all elements; result has shape `[1]`.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        let s: T = self.nodes[a.0].value.iter().copied().sum();
        let m = s / T::from_config(n as f64);
        self.push(ArrayD::from_elem(IxDyn(&[1]), m), vec![a], Op::MeanAll)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = as2(&self.nodes[a.0].value);
        let bv = as2(&self.nodes[b.0].value);
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let value = av.dot(&bv).into_dyn();
        self.push(value, vec![a, b], Op::MatMul)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = as2(&self.nodes[a.0].value).t().to_owned().into_dyn();
        self.push(value, vec![a], Op::Transpose)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let from = self.shape(a).to_vec();
        let value = self.nodes[a.0]
            .value
            .clone()
            .into_shape_clone(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(value, vec![a], Op::Reshape { from })
    }

    /// Slice along the last axis, half-open `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let last = self.shape(a).len() - 1;
        let from_len = self.shape(a)[last];
        assert!(start <= end && end <= from_len, "slice_cols out of bounds");
        let value = self.nodes[a.0]
            .value
            .slice_axis(Axis(last), ndarray::Slice::from(start..end))
            .to_owned();
        self.push(value, vec![a], Op::SliceCols { start, from_len })
    }

    /// Zero-pad along the last axis.
    pub fn pad_cols(&mut self, a: Var, left: usize, right: usize) -> Var {
        let last = self.shape(a).len() - 1;
        let from_len = self.shape(a)[last];
        let mut shape = self.shape(a).to_vec();
        shape[last] = from_len + left + right;
        let mut value = ArrayD::zeros(IxDyn(&shape));
        value
            .slice_axis_mut(Axis(last), ndarray::Slice::from(left..left + from_len))
            .assign(&self.nodes[a.0].value);
        self.push(value, vec![a], Op::PadCols { left, from_len })
    }

    /// Slice along axis 0, half-open `[start, end)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let from_rows = self.shape(a)[0];
        assert!(start <= end && end <= from_rows, "slice_rows out of bounds");
        let value = self.nodes[a.0]
            .value
            .slice_axis(Axis(0), ndarray::Slice::from(start..end))
            .to_owned();
        self.push(value, vec![a], Op::SliceRows { start, from_rows })
    }

    /// Concatenate along axis 0.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = concatenate(Axis(0), &views).expect("concat_rows shape mismatch");
        let row_counts = parts.iter().map(|v| self.shape(*v)[0]).collect();
        self.push(value, parts.to_vec(), Op::ConcatRows { row_counts })
    }

    /// Select columns (last axis) by index, with repetition allowed. Used for
    /// embedding lookup and duration-driven length regulation.
    pub fn gather_cols(&mut self, a: Var, indices: &[usize]) -> Var {
        let last = self.shape(a).len() - 1;
        let from_len = self.shape(a)[last];
        assert!(indices.iter().all(|&i| i < from_len), "gather_cols index out of bounds");
        let src = &self.nodes[a.0].value;
        let mut shape = self.shape(a).to_vec();
        shape[last] = indices.len();
        let mut value = ArrayD::zeros(IxDyn(&shape));
        for (j, &i) in indices.iter().enumerate() {
            value
                .index_axis_mut(Axis(last), j)
                .assign(&src.index_axis(Axis(last), i));
        }
        self.push(value, vec![a], Op::GatherCols { indices: indices.to_vec(), from_len })
    }

    /// Row-wise softmax of a 2-D array.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = as2(&self.nodes[a.0].value);
        let mut value = av.to_owned();
        for mut row in value.rows_mut() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: T = row.iter().copied().sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(value.into_dyn(), vec![a], Op::SoftmaxRows)
    }

    /// Layer normalization of a 2-D `(channels, time)` array over the channel
    /// axis, per time step, followed by per-channel gain and bias (shape
    /// `(channels, 1)`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Var {
        let xv = as2(&self.nodes[x.0].value).to_owned();
        let g = as2(&self.nodes[gain.0].value).to_owned();
        let b = as2(&self.nodes[bias.0].value).to_owned();
        let c = xv.nrows();
        assert_eq!(g.nrows(), c);
        assert_eq!(b.nrows(), c);
        let cn = T::from_config(c as f64);
        let mut out = xv.clone();
        for mut col in out.columns_mut() {
            let mean = col.iter().copied().sum::<T>() / cn;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let inv = (var + eps).sqrt().recip();
            col.mapv_inplace(|v| (v - mean) * inv);
        }
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let (gi, bi) = (g[(i, 0)], b[(i, 0)]);
            row.mapv_inplace(|v| v * gi + bi);
        }
        self.push(out.into_dyn(), vec![x, gain, bias], Op::LayerNorm { eps })
    }

    /// Weight normalization: `w = v * g / ||v||` with the norm taken per
    /// output channel (axis 0 of `v`); `g` has shape `(out_channels,)`.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Var {
        let vv = &self.nodes[v.0].value;
        let gv = self.nodes[g.0].value.view().into_dimensionality::<Ix1>().expect("g 1-d");
        let out_ch = vv.shape()[0];
        assert_eq!(gv.len(), out_ch);
        let mut value = vv.clone();
        for (i, mut lane) in value.outer_iter_mut().enumerate() {
            let norm = lane.iter().map(|&x| x * x).sum::<T>().sqrt();
            let scale = gv[i] / norm;
            lane.mapv_inplace(|x| x * scale);
        }
        self.push(value, vec![v, g], Op::WeightNorm)
    }

    /// 1-D convolution: `x (C_in, T)`, `w (C_out, C_in, K)`, `b (C_out,)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let value = conv::conv1d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
            stride,
            pad,
        );
        self.push(value, vec![x, w, b], Op::Conv1d { stride, pad })
    }

    /// Transposed 1-D convolution: `x (C_in, T)`, `w (C_in, C_out, K)`,
    /// `b (C_out,)`; output length `(T-1)*stride + K - 2*pad`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let value = conv::conv_transpose1d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
            stride,
            pad,
        );
        self.push(value, vec![x, w, b], Op::ConvTranspose1d { stride, pad })
    }

    /// 2-D convolution: `x (C_in, H, W)`, `w (C_out, C_in, KH, KW)`, `b (C_out,)`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Var {
        let value = conv::conv2d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
            stride,
            pad,
        );
        self.push(value, vec![x, w, b], Op::Conv2d { stride, pad })
    }

    /// Non-overlapping average pooling along the last axis of a 2-D array.
    pub fn avg_pool1d(&mut self, x: Var, k: usize) -> Var {
        let xv = as2(&self.nodes[x.0].value);
        let (c, t) = (xv.nrows(), xv.ncols());
        let t_out = t / k;
        let kn = T::from_config(k as f64);
        let mut out = ndarray::Array2::<T>::zeros((c, t_out));
        for ci in 0..c {
            for to in 0..t_out {
                let mut s = T::zero();
                for j in 0..k {
                    s += xv[(ci, to * k + j)];
                }
                out[(ci, to)] = s / kn;
            }
        }
        self.push(out.into_dyn(), vec![x], Op::AvgPool1d { k })
    }

    /// Reverse pass from a single-element `root`, accumulating gradients for
    /// every node on a path to it.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<ArrayD<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(ArrayD::from_elem(IxDyn(self.shape(root)), T::one()));

        for id in (0..=root.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let node = &self.nodes[id];
            if node.parents.is_empty() {
                continue;
            }
            let grad_out = grads[id].take().unwrap();
            let parent_vals: Vec<&ArrayD<T>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let needs: Vec<bool> =
                node.parents.iter().map(|p| self.nodes[p.0].needs_grad).collect();
            let parent_grads = self.op_backward(node, &grad_out, &parent_vals, &needs);
            for (slot, grad) in node.parents.iter().zip(parent_grads) {
                if let Some(g) = grad {
                    match &mut grads[slot.0] {
                        Some(acc) => *acc += &g,
                        none => *none = Some(g),
                    }
                }
            }
            grads[id] = Some(grad_out);
        }
        Gradients { by_node: grads }
    }

    /// Collect per-parameter gradients by leaf name.
    pub fn param_grads(&self, grads: &Gradients<T>) -> HashMap<String, ArrayD<T>> {
        let mut out = HashMap::new();
        for (name, var) in &self.param_leaves {
            if let Some(g) = grads.get(*var) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }

    /// Like [`Tape::param_grads`] but moves the arrays out of the gradient
    /// set instead of cloning them.
    pub fn take_param_grads(&self, grads: &mut Gradients<T>) -> HashMap<String, ArrayD<T>> {
        let mut out = HashMap::new();
        for (name, var) in &self.param_leaves {
            if let Some(g) = grads.by_node[var.0].take() {
                out.insert(name.clone(), g);
            }
        }
        out
    }

    fn op_backward(
        &self,
        node: &Node<T>,
        g: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let y = &node.value;
        match &node.op {
            Op::Leaf { .. } => vec![],
            Op::Add => vec![some_if(needs[0], || g.clone()), some_if(needs[1], || g.clone())],
            Op::Sub => {
                vec![some_if(needs[0], || g.clone()), some_if(needs[1], || g.mapv(|v| -v))]
            }
            Op::Mul => vec![
                some_if(needs[0], || g * parents[1]),
                some_if(needs[1], || g * parents[0]),
            ],
            Op::Neg => vec![some_if(needs[0], || g.mapv(|v| -v))],
            Op::AddScalar => vec![some_if(needs[0], || g.clone())],
            Op::MulScalar(c) => vec![some_if(needs[0], || g.mapv(|v| v * *c))],
            Op::Exp => vec![some_if(needs[0], || g * y)],
            Op::Log => vec![some_if(needs[0], || g / parents[0])],
            Op::Sqrt => vec![some_if(needs[0], || {
                let half = T::from_config(0.5);
                let mut out = g / y;
                out.mapv_inplace(|v| v * half);
                out
            })],
            Op::Tanh => vec![some_if(needs[0], || {
                let mut out = y.mapv(|v| T::one() - v * v);
                out *= g;
                out
            })],
            Op::Abs => vec![some_if(needs[0], || {
                let mut out = parents[0].mapv(|v| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                });
                out *= g;
                out
            })],
            Op::Square => vec![some_if(needs[0], || {
                let two = T::from_config(2.0);
                let mut out = parents[0] * g;
                out.mapv_inplace(|v| v * two);
                out
            })],
            Op::LeakyRelu(slope) => vec![some_if(needs[0], || {
                let slope = *slope;
                let mut out = parents[0].mapv(|v| if v >= T::zero() { T::one() } else { slope });
                out *= g;
                out
            })],
            Op::Clamp(lo, hi) => vec![some_if(needs[0], || {
                let (lo, hi) = (*lo, *hi);
                let mut out =
                    parents[0].mapv(|v| if v >= lo && v <= hi { T::one() } else { T::zero() });
                out *= g;
                out
            })],
            Op::SumAll => vec![some_if(needs[0], || {
                ArrayD::from_elem(parents[0].raw_dim(), g[[0]])
            })],
            Op::MeanAll => vec![some_if(needs[0], || {
                let scale = g[[0]] / T::from_config(parents[0].len() as f64);
                ArrayD::from_elem(parents[0].raw_dim(), scale)
            })],
            Op::MatMul => {
                let a = as2(parents[0]);
                let b = as2(parents[1]);
                let gv = as2(g);
                vec![
                    some_if(needs[0], || gv.dot(&b.t()).into_dyn()),
                    some_if(needs[1], || a.t().dot(&gv).into_dyn()),
                ]
            }
            Op::Transpose => vec![some_if(needs[0], || as2(g).t().to_owned().into_dyn())],
            Op::Reshape { from } => vec![some_if(needs[0], || {
                g.clone().into_shape_clone(IxDyn(from)).expect("reshape back")
            })],
            Op::SliceCols { start, from_len } => vec![some_if(needs[0], || {
                let last = parents[0].ndim() - 1;
                let mut out = ArrayD::zeros(parents[0].raw_dim());
                let end = start + g.shape()[last];
                out.slice_axis_mut(Axis(last), ndarray::Slice::from(*start..end))
                    .assign(g);
                let _ = from_len;
                out
            })],
            Op::PadCols { left, from_len } => vec![some_if(needs[0], || {
                let last = g.ndim() - 1;
                g.slice_axis(Axis(last), ndarray::Slice::from(*left..left + from_len))
                    .to_owned()
            })],
            Op::SliceRows { start, from_rows } => vec![some_if(needs[0], || {
                let mut out = ArrayD::zeros(parents[0].raw_dim());
                let end = start + g.shape()[0];
                out.slice_axis_mut(Axis(0), ndarray::Slice::from(*start..end)).assign(g);
                let _ = from_rows;
                out
            })],
            Op::ConcatRows { row_counts } => {
                let mut offset = 0usize;
                let mut out = Vec::with_capacity(row_counts.len());
                for (i, &rows) in row_counts.iter().enumerate() {
                    out.push(some_if(needs[i], || {
                        g.slice_axis(Axis(0), ndarray::Slice::from(offset..offset + rows))
                            .to_owned()
                    }));
                    offset += rows;
                }
                out
            }
            Op::GatherCols { indices, from_len } => vec![some_if(needs[0], || {
                let last = parents[0].ndim() - 1;
                let mut shape = parents[0].shape().to_vec();
                shape[last] = *from_len;
                let mut out = ArrayD::<T>::zeros(IxDyn(&shape));
                for (j, &i) in indices.iter().enumerate() {
                    let src = g.index_axis(Axis(last), j);
                    let mut dst = out.index_axis_mut(Axis(last), i);
                    dst += &src;
                }
                out
            })],
            Op::SoftmaxRows => vec![some_if(needs[0], || {
                let yv = as2(y);
                let gv = as2(g);
                let mut out = (&gv * &yv).to_owned();
                for (mut orow, yrow) in out.rows_mut().into_iter().zip(yv.rows()) {
                    let dot: T = orow.iter().copied().sum();
                    ndarray::Zip::from(&mut orow).and(&yrow).for_each(|o, &yy| {
                        *o -= yy * dot;
                    });
                }
                out.into_dyn()
            })],
            Op::LayerNorm { eps } => self.layer_norm_backward(g, parents, needs, *eps),
            Op::WeightNorm => {
                let v = parents[0];
                let gw = g;
                let gv1 = parents[1].view().into_dimensionality::<Ix1>().unwrap();
                let out_ch = v.shape()[0];
                let mut dv = ArrayD::<T>::zeros(v.raw_dim());
                let mut dg = ndarray::Array1::<T>::zeros(out_ch);
                for i in 0..out_ch {
                    let vlane = v.index_axis(Axis(0), i);
                    let glane = gw.index_axis(Axis(0), i);
                    let norm = vlane.iter().map(|&x| x * x).sum::<T>().sqrt();
                    let dot = ndarray::Zip::from(&glane)
                        .and(&vlane)
                        .fold(T::zero(), |acc, &a, &b| acc + a * b);
                    dg[i] = dot / norm;
                    if needs[0] {
                        let gi = gv1[i];
                        let c1 = gi / norm;
                        let c2 = gi * dot / (norm * norm * norm);
                        let mut dlane = dv.index_axis_mut(Axis(0), i);
                        ndarray::Zip::from(&mut dlane).and(&glane).and(&vlane).for_each(
                            |d, &gg, &vv| {
                                *d = c1 * gg - c2 * vv;
                            },
                        );
                    }
                }
                vec![
                    some_if(needs[0], || dv),
                    some_if(needs[1], || dg.into_dyn()),
                ]
            }
            Op::Conv1d { stride, pad } => {
                conv::conv1d_backward(g, parents, needs, *stride, *pad)
            }
            Op::ConvTranspose1d { stride, pad } => {
                conv::conv_transpose1d_backward(g, parents, needs, *stride, *pad)
            }
            Op::Conv2d { stride, pad } => {
                conv::conv2d_backward(g, parents, needs, *stride, *pad)
            }
            Op::AvgPool1d { k } => vec![some_if(needs[0], || {
                let gv = as2(g);
                let (c, t_out) = (gv.nrows(), gv.ncols());
                let mut out = ndarray::Array2::<T>::zeros((c, parents[0].shape()[1]));
                let kn = T::from_config(*k as f64);
                for ci in 0..c {
                    for to in 0..t_out {
                        let v = gv[(ci, to)] / kn;
                        for j in 0..*k {
                            out[(ci, to * k + j)] = v;
                        }
                    }
                }
                out.into_dyn()
            })],
        }
    }

    fn layer_norm_backward(
        &self,
        g: &ArrayD<T>,
        parents: &[&ArrayD<T>],
        needs: &[bool],
        eps: T,
    ) -> Vec<Option<ArrayD<T>>> {
        let x = as2(parents[0]);
        let gain = as2(parents[1]);
        let gv = as2(g);
        let (c, f) = (x.nrows(), x.ncols());
        let cn = T::from_config(c as f64);

        let mut dx = ndarray::Array2::<T>::zeros((c, f));
        let mut dgain = ndarray::Array2::<T>::zeros((c, 1));
        let mut dbias = ndarray::Array2::<T>::zeros((c, 1));

        for j in 0..f {
            let col = x.column(j);
            let mean = col.iter().copied().sum::<T>() / cn;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let inv = (var + eps).sqrt().recip();

            // xhat_i = (x_i - mean) * inv, forward output y_i = xhat_i*gain_i + bias_i
            let mut sum_gy = T::zero();
            let mut sum_gyx = T::zero();
            for i in 0..c {
                let xhat = (x[(i, j)] - mean) * inv;
                let gyi = gv[(i, j)] * gain[(i, 0)];
                sum_gy += gyi;
                sum_gyx += gyi * xhat;
                dgain[(i, 0)] += gv[(i, j)] * xhat;
                dbias[(i, 0)] += gv[(i, j)];
            }
            if needs[0] {
                for i in 0..c {
                    let xhat = (x[(i, j)] - mean) * inv;
                    let gyi = gv[(i, j)] * gain[(i, 0)];
                    dx[(i, j)] = inv * (gyi - sum_gy / cn - xhat * sum_gyx / cn);
                }
            }
        }
        vec![
            some_if(needs[0], || dx.into_dyn()),
            some_if(needs[1], || dgain.into_dyn()),
            some_if(needs[2], || dbias.into_dyn()),
        ]
    }
}

fn some_if<T>(cond: bool, f: impl FnOnce() -> T) -> Option<T> {
    if cond {
        Some(f())
    } else {
        None
    }
}

pub(crate) fn as2<T: Scalar>(a: &ArrayD<T>) -> ArrayView2<'_, T> {
    a.view().into_dimensionality::<Ix2>().expect("expected 2-d array")
}
