//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every optimization step: leaves are either
//! constants (inputs, targets, frozen parameters) or trainable parameters;
//! operations append nodes; [`Graph::backward`] walks the node list in
//! reverse, accumulating gradients into every trainable leaf. Shape errors in
//! graph construction are programming errors and panic.

use crate::conv;
use ndarray::{ArrayD, Axis, Ix1, Ix2, Ix3, Ix4, IxDyn};
use trajmia_core::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

#[derive(Clone)]
enum Op<F: Scalar> {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, F),
    AddScalar(VarId, F),
    MatMul(VarId, VarId),
    AddBias(VarId, VarId),
    Relu(VarId),
    Tanh(VarId),
    Exp(VarId),
    Clamp(VarId, F, F),
    ConcatCols(VarId, VarId),
    Reshape(VarId),
    Conv1dCausal { x: VarId, w: VarId, b: VarId, dilation: usize },
    Conv2dSame { x: VarId, w: VarId, b: VarId },
    GlobalAvgPool(VarId),
    MeanAll(VarId),
    SumAll(VarId),
    BceWithLogits { logits: VarId, targets: VarId },
}

pub struct Graph<F: Scalar> {
    values: Vec<ArrayD<F>>,
    grads: Vec<Option<ArrayD<F>>>,
    ops: Vec<Op<F>>,
    requires: Vec<bool>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { values: Vec::new(), grads: Vec::new(), ops: Vec::new(), requires: Vec::new() }
    }

    fn push(&mut self, value: ArrayD<F>, op: Op<F>, requires: bool) -> VarId {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires.push(requires);
        VarId(self.values.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: ArrayD<F>) -> VarId {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf; its gradient is available after [`Graph::backward`].
    pub fn trainable(&mut self, value: ArrayD<F>) -> VarId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: VarId) -> &ArrayD<F> {
        &self.values[id.0]
    }

    /// Gradient of a leaf after `backward`; `None` if the node does not
    /// influence the differentiated output or is not trainable.
    pub fn grad(&self, id: VarId) -> Option<&ArrayD<F>> {
        self.grads[id.0].as_ref()
    }

    /// Removes and returns the gradient of a leaf.
    pub fn take_grad(&mut self, id: VarId) -> Option<ArrayD<F>> {
        self.grads[id.0].take()
    }

    /// Value of a single-element node as a scalar.
    pub fn scalar_value(&self, id: VarId) -> F {
        let v = &self.values[id.0];
        assert_eq!(v.len(), 1, "scalar_value on a non-scalar node");
        *v.iter().next().unwrap()
    }

    fn requires_any(&self, ids: &[VarId]) -> bool {
        ids.iter().any(|id| self.requires[id.0])
    }

    // ---- elementwise and dense ops -------------------------------------

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "add shape mismatch");
        let v = &self.values[a.0] + &self.values[b.0];
        let req = self.requires_any(&[a, b]);
        self.push(v, Op::Add(a, b), req)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "sub shape mismatch");
        let v = &self.values[a.0] - &self.values[b.0];
        let req = self.requires_any(&[a, b]);
        self.push(v, Op::Sub(a, b), req)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "mul shape mismatch");
        let v = &self.values[a.0] * &self.values[b.0];
        let req = self.requires_any(&[a, b]);
        self.push(v, Op::Mul(a, b), req)
    }

    pub fn scale(&mut self, a: VarId, c: F) -> VarId {
        let v = self.values[a.0].mapv(|x| x * c);
        let req = self.requires[a.0];
        self.push(v, Op::Scale(a, c), req)
    }

    pub fn add_scalar(&mut self, a: VarId, c: F) -> VarId {
        let v = self.values[a.0].mapv(|x| x + c);
        let req = self.requires[a.0];
        self.push(v, Op::AddScalar(a, c), req)
    }

    /// `(n, k) x (k, m) -> (n, m)`
    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let av = self.values[a.0].view().into_dimensionality::<Ix2>().expect("matmul lhs 2-D");
        let bv = self.values[b.0].view().into_dimensionality::<Ix2>().expect("matmul rhs 2-D");
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dim mismatch");
        let v = av.dot(&bv).into_dyn();
        let req = self.requires_any(&[a, b]);
        self.push(v, Op::MatMul(a, b), req)
    }

    /// `(n, m) + (m)` broadcast over rows.
    pub fn add_bias(&mut self, x: VarId, bias: VarId) -> VarId {
        let xv = self.values[x.0].view().into_dimensionality::<Ix2>().expect("add_bias lhs 2-D");
        let bv = self.values[bias.0].view().into_dimensionality::<Ix1>().expect("add_bias rhs 1-D");
        assert_eq!(xv.ncols(), bv.len(), "add_bias width mismatch");
        let v = (&xv + &bv).into_dyn();
        let req = self.requires_any(&[x, bias]);
        self.push(v, Op::AddBias(x, bias), req)
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.values[a.0].mapv(|x| if x > F::zero() { x } else { F::zero() });
        let req = self.requires[a.0];
        self.push(v, Op::Relu(a), req)
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let v = self.values[a.0].mapv(|x| x.tanh());
        let req = self.requires[a.0];
        self.push(v, Op::Tanh(a), req)
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let v = self.values[a.0].mapv(|x| x.exp());
        let req = self.requires[a.0];
        self.push(v, Op::Exp(a), req)
    }

    pub fn clamp(&mut self, a: VarId, lo: F, hi: F) -> VarId {
        let v = self.values[a.0].mapv(|x| x.max(lo).min(hi));
        let req = self.requires[a.0];
        self.push(v, Op::Clamp(a, lo, hi), req)
    }

    /// Concatenates two 2-D nodes along the column axis.
    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> VarId {
        let av = self.values[a.0].view().into_dimensionality::<Ix2>().expect("concat lhs 2-D");
        let bv = self.values[b.0].view().into_dimensionality::<Ix2>().expect("concat rhs 2-D");
        assert_eq!(av.nrows(), bv.nrows(), "concat row mismatch");
        let v = ndarray::concatenate(Axis(1), &[av, bv]).expect("concat").into_dyn();
        let req = self.requires_any(&[a, b]);
        self.push(v, Op::ConcatCols(a, b), req)
    }

    /// Order-preserving reshape; the element count must match.
    pub fn reshape(&mut self, a: VarId, shape: &[usize]) -> VarId {
        let v = self.values[a.0]
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape must preserve element count");
        let req = self.requires[a.0];
        self.push(v, Op::Reshape(a), req)
    }

    /// `(n, 1) -> (n,)` squeeze, the common logit shape fix.
    pub fn squeeze_col(&mut self, a: VarId) -> VarId {
        let shape = self.values[a.0].shape().to_vec();
        assert!(shape.len() == 2 && shape[1] == 1, "squeeze_col expects (n, 1)");
        self.reshape(a, &[shape[0]])
    }

    // ---- convolutions and reductions -----------------------------------

    /// Dilated causal 1-D convolution: `x (n, c_in, len)`, `w (c_out, c_in,
    /// k)`, `b (c_out)` -> `(n, c_out, len)`.
    pub fn conv1d_causal(&mut self, x: VarId, w: VarId, b: VarId, dilation: usize) -> VarId {
        let xv = self.values[x.0].view().into_dimensionality::<Ix3>().expect("conv1d input 3-D");
        let wv = self.values[w.0].view().into_dimensionality::<Ix3>().expect("conv1d weight 3-D");
        let bv = self.values[b.0].view().into_dimensionality::<Ix1>().expect("conv1d bias 1-D");
        let v = conv::conv1d_forward(&xv, &wv, bv.as_slice().expect("contiguous bias"), dilation)
            .into_dyn();
        let req = self.requires_any(&[x, w, b]);
        self.push(v, Op::Conv1dCausal { x, w, b, dilation }, req)
    }

    /// "Same"-padded 2-D convolution with odd kernels: `x (n, c_in, h, w)`,
    /// `w (c_out, c_in, kh, kw)`, `b (c_out)` -> `(n, c_out, h, w)`.
    pub fn conv2d_same(&mut self, x: VarId, w: VarId, b: VarId) -> VarId {
        let xv = self.values[x.0].view().into_dimensionality::<Ix4>().expect("conv2d input 4-D");
        let wv = self.values[w.0].view().into_dimensionality::<Ix4>().expect("conv2d weight 4-D");
        let bv = self.values[b.0].view().into_dimensionality::<Ix1>().expect("conv2d bias 1-D");
        let v = conv::conv2d_forward(&xv, &wv, bv.as_slice().expect("contiguous bias")).into_dyn();
        let req = self.requires_any(&[x, w, b]);
        self.push(v, Op::Conv2dSame { x, w, b }, req)
    }

    /// Mean over all trailing spatial axes: `(n, c, ...)` -> `(n, c)`.
    pub fn global_avg_pool(&mut self, a: VarId) -> VarId {
        let av = &self.values[a.0];
        let shape = av.shape().to_vec();
        assert!(shape.len() >= 3, "global_avg_pool expects at least 3 axes");
        let (n, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        let flat = av
            .view()
            .into_shape_with_order(IxDyn(&[n, c, spatial]))
            .expect("standard layout");
        let v = flat.mean_axis(Axis(2)).expect("nonempty spatial").into_dyn();
        let req = self.requires[a.0];
        self.push(v, Op::GlobalAvgPool(a), req)
    }

    /// Mean of every element; returns a 1-element node.
    pub fn mean_all(&mut self, a: VarId) -> VarId {
        let av = &self.values[a.0];
        let mean = av.sum() / F::of_f64(av.len() as f64);
        let v = ArrayD::from_elem(IxDyn(&[1]), mean);
        let req = self.requires[a.0];
        self.push(v, Op::MeanAll(a), req)
    }

    /// Sum of every element; returns a 1-element node.
    pub fn sum_all(&mut self, a: VarId) -> VarId {
        let v = ArrayD::from_elem(IxDyn(&[1]), self.values[a.0].sum());
        let req = self.requires[a.0];
        self.push(v, Op::SumAll(a), req)
    }

    /// Mean binary cross-entropy between `logits (n)` and constant targets
    /// `(n)`, computed in the numerically stable form.
    pub fn bce_with_logits(&mut self, logits: VarId, targets: VarId) -> VarId {
        let z = self.values[logits.0].view().into_dimensionality::<Ix1>().expect("logits 1-D");
        let y = self.values[targets.0].view().into_dimensionality::<Ix1>().expect("targets 1-D");
        assert_eq!(z.len(), y.len(), "bce length mismatch");
        assert!(!z.is_empty(), "bce on empty batch");
        let mut total = F::zero();
        for (&zi, &yi) in z.iter().zip(y.iter()) {
            let pos = if zi > F::zero() { zi } else { F::zero() };
            total = total + pos - zi * yi + (F::one() + (-zi.abs()).exp()).ln();
        }
        let v = ArrayD::from_elem(IxDyn(&[1]), total / F::of_f64(z.len() as f64));
        let req = self.requires_any(&[logits, targets]);
        self.push(v, Op::BceWithLogits { logits, targets }, req)
    }

    // ---- backward -------------------------------------------------------

    fn accum(&mut self, id: VarId, contribution: ArrayD<F>) {
        if !self.requires[id.0] {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => *g += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Accumulates `d out / d leaf` into every trainable leaf reachable from
    /// `out`. `out` is seeded with ones, so it is normally a 1-element loss.
    pub fn backward(&mut self, out: VarId) {
        assert!(self.requires[out.0], "backward on a node with no trainable ancestors");
        let shape = self.values[out.0].raw_dim();
        self.grads[out.0] = Some(ArrayD::ones(shape));

        for id in (0..=out.0).rev() {
            if matches!(self.ops[id], Op::Leaf) {
                continue; // leaf gradients stay readable after backward
            }
            if !self.requires[id] {
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            let op = self.ops[id].clone();
            match op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    self.accum(a, g.clone());
                    self.accum(b, g);
                }
                Op::Sub(a, b) => {
                    self.accum(a, g.clone());
                    self.accum(b, g.mapv(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.values[b.0];
                    let gb = &g * &self.values[a.0];
                    self.accum(a, ga);
                    self.accum(b, gb);
                }
                Op::Scale(a, c) => {
                    self.accum(a, g.mapv(|x| x * c));
                }
                Op::AddScalar(a, _) => {
                    self.accum(a, g);
                }
                Op::MatMul(a, b) => {
                    let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                    let av = self.values[a.0].view().into_dimensionality::<Ix2>().unwrap();
                    let bv = self.values[b.0].view().into_dimensionality::<Ix2>().unwrap();
                    let ga = gv.dot(&bv.t()).into_dyn();
                    let gb = av.t().dot(&gv).into_dyn();
                    self.accum(a, ga);
                    self.accum(b, gb);
                }
                Op::AddBias(x, bias) => {
                    let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                    let gb = gv.sum_axis(Axis(0)).into_dyn();
                    self.accum(x, g.clone());
                    self.accum(bias, gb);
                }
                Op::Relu(a) => {
                    let mask = self.values[a.0].mapv(|x| if x > F::zero() { F::one() } else { F::zero() });
                    self.accum(a, &g * &mask);
                }
                Op::Tanh(a) => {
                    let y = &self.values[id];
                    let dy = y.mapv(|t| F::one() - t * t);
                    self.accum(a, &g * &dy);
                }
                Op::Exp(a) => {
                    let dy = &g * &self.values[id];
                    self.accum(a, dy);
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = self.values[a.0]
                        .mapv(|x| if x >= lo && x <= hi { F::one() } else { F::zero() });
                    self.accum(a, &g * &mask);
                }
                Op::ConcatCols(a, b) => {
                    let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                    let ncols_a = self.values[a.0].shape()[1];
                    let ga = gv.slice(ndarray::s![.., ..ncols_a]).to_owned().into_dyn();
                    let gb = gv.slice(ndarray::s![.., ncols_a..]).to_owned().into_dyn();
                    self.accum(a, ga);
                    self.accum(b, gb);
                }
                Op::Reshape(a) => {
                    let shape = self.values[a.0].raw_dim();
                    let ga = g.into_shape_with_order(shape).expect("reshape backward");
                    self.accum(a, ga);
                }
                Op::Conv1dCausal { x, w, b, dilation } => {
                    let xv = self.values[x.0].view().into_dimensionality::<Ix3>().unwrap();
                    let wv = self.values[w.0].view().into_dimensionality::<Ix3>().unwrap();
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let (dx, dw, db) = conv::conv1d_backward(&xv, &wv, &gv, dilation);
                    self.accum(x, dx.into_dyn());
                    self.accum(w, dw.into_dyn());
                    self.accum(b, ArrayD::from_shape_vec(IxDyn(&[db.len()]), db).unwrap());
                }
                Op::Conv2dSame { x, w, b } => {
                    let xv = self.values[x.0].view().into_dimensionality::<Ix4>().unwrap();
                    let wv = self.values[w.0].view().into_dimensionality::<Ix4>().unwrap();
                    let gv = g.view().into_dimensionality::<Ix4>().unwrap();
                    let (dx, dw, db) = conv::conv2d_backward(&xv, &wv, &gv);
                    self.accum(x, dx.into_dyn());
                    self.accum(w, dw.into_dyn());
                    self.accum(b, ArrayD::from_shape_vec(IxDyn(&[db.len()]), db).unwrap());
                }
                Op::GlobalAvgPool(a) => {
                    let in_shape = self.values[a.0].shape().to_vec();
                    let spatial: usize = in_shape[2..].iter().product();
                    let scale = F::one() / F::of_f64(spatial as f64);
                    let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                    let mut da = ArrayD::<F>::zeros(IxDyn(&in_shape));
                    {
                        let mut flat = da
                            .view_mut()
                            .into_shape_with_order(IxDyn(&[in_shape[0], in_shape[1], spatial]))
                            .unwrap();
                        for n in 0..in_shape[0] {
                            for c in 0..in_shape[1] {
                                let v = gv[[n, c]] * scale;
                                for s in 0..spatial {
                                    flat[[n, c, s]] = v;
                                }
                            }
                        }
                    }
                    self.accum(a, da);
                }
                Op::MeanAll(a) => {
                    let shape = self.values[a.0].raw_dim();
                    let n = self.values[a.0].len();
                    let gs = *g.iter().next().unwrap() / F::of_f64(n as f64);
                    self.accum(a, ArrayD::from_elem(shape, gs));
                }
                Op::SumAll(a) => {
                    let shape = self.values[a.0].raw_dim();
                    let gs = *g.iter().next().unwrap();
                    self.accum(a, ArrayD::from_elem(shape, gs));
                }
                Op::BceWithLogits { logits, targets } => {
                    let gs = *g.iter().next().unwrap();
                    let z = self.values[logits.0].view().into_dimensionality::<Ix1>().unwrap();
                    let y = self.values[targets.0].view().into_dimensionality::<Ix1>().unwrap();
                    let n = F::of_f64(z.len() as f64);
                    let dz = ndarray::Array1::from_iter(
                        z.iter()
                            .zip(y.iter())
                            .map(|(&zi, &yi)| gs * (crate::sigmoid(zi) - yi) / n),
                    );
                    self.accum(logits, dz.into_dyn());
                }
            }
        }
    }
}
