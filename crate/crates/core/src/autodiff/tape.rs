use super::bundle::{GradientBundle, ParamSizes};
use super::kernels;
use crate::error::{JawsError, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Theta,
    Phi,
    S1,
}

/// `rows × cols` buffer layout: channels × grid points, `1 × 1` for scalars.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn vector(n: usize) -> Self {
        Self { rows: 1, cols: n }
    }

    pub fn scalar() -> Self {
        Self { rows: 1, cols: 1 }
    }

    pub fn len(self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(self) -> bool {
        self.len() == 1
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param { group: ParamGroup, offset: usize },
    Detach,
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        kernel: usize,
    },
    Silu(NodeId),
    SiluGrad(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Exp(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Sum(NodeId),
    Mean(NodeId),
    /// Vector times a scalar node.
    MulScalar { x: NodeId, s: NodeId },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Shape,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Differentiable computation record over the fixed primitive set the surrogate uses.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it. Forward
/// tangents ([`Tape::jvp`]) are recorded as ordinary nodes, which makes any scalar built
/// from them differentiable by the same reverse sweep (reverse-over-forward).
#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    sizes: ParamSizes,
}

/// Per-node adjoints from one reverse sweep.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Adjoint of `id`, or `None` when no path reaches it.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new(sizes: ParamSizes) -> Self {
        Self {
            nodes: Vec::new(),
            sizes,
        }
    }

    pub fn sizes(&self) -> ParamSizes {
        self.sizes
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total number of stored primal values across all nodes.
    pub fn buffer_len(&self) -> usize {
        self.nodes.iter().map(|n| n.value.len()).sum()
    }

    /// Stored values excluding parameter leaves: the activation memory a reverse sweep needs.
    pub fn activation_len(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Param { .. }))
            .map(|n| n.value.len())
            .sum()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert!(self.shape(id).is_scalar());
        self.nodes[id.0].value[0]
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, shape: Shape, value: Vec<f64>, requires_grad: bool) -> NodeId {
        debug_assert_eq!(shape.len(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> Shape {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "operand shapes differ: {sa:?} vs {sb:?}");
        sa
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, values: Vec<f64>, shape: Shape) -> NodeId {
        assert_eq!(values.len(), shape.len());
        self.push(Op::Leaf, shape, values, false)
    }

    /// Leaf whose adjoint is tracked (for gradients with respect to inputs).
    pub fn variable(&mut self, values: Vec<f64>, shape: Shape) -> NodeId {
        assert_eq!(values.len(), shape.len());
        self.push(Op::Leaf, shape, values, true)
    }

    /// Registers a slice of a parameter group; its adjoint lands in the [`GradientBundle`].
    pub fn param(
        &mut self,
        group: ParamGroup,
        offset: usize,
        values: &[f64],
        shape: Shape,
    ) -> Result<NodeId> {
        let limit = match group {
            ParamGroup::Theta => self.sizes.theta,
            ParamGroup::Phi => self.sizes.phi,
            ParamGroup::S1 => 1,
        };
        if values.len() != shape.len() || offset + values.len() > limit {
            return Err(JawsError::Contract(format!(
                "parameter slice {group:?}[{offset}..{}] outside layout of length {limit}",
                offset + values.len()
            )));
        }
        Ok(self.push(Op::Param { group, offset }, shape, values.to_vec(), true))
    }

    /// Same primal value, no reverse or tangent path back to `x`.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        if matches!(self.nodes[x.0].op, Op::Detach) {
            return x;
        }
        let node = &self.nodes[x.0];
        let (shape, value) = (node.shape, node.value.clone());
        self.push(Op::Detach, shape, value, false)
    }

    /// Periodic convolution of `x: [cin, n]` with `w: [cout, cin·kernel]` plus optional bias `[cout]`.
    pub fn conv(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, kernel: usize) -> NodeId {
        let sx = self.shape(x);
        let sw = self.shape(w);
        assert_eq!(sw.cols, sx.rows * kernel, "conv weight/input channel mismatch");
        if let Some(b) = b {
            assert_eq!(self.shape(b).len(), sw.rows, "conv bias length mismatch");
        }
        let value = kernels::conv_forward(
            self.value(x),
            sx.rows,
            sx.cols,
            self.value(w),
            sw.rows,
            kernel,
            b.map(|b| self.value(b)),
        );
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        self.push(
            Op::Conv { x, w, b, kernel },
            Shape::new(sw.rows, sx.cols),
            value,
            rg,
        )
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let shape = self.shape(x);
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(op, shape, value, rg)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let shape = self.same_shape(a, b);
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        self.push(op, shape, value, rg)
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Silu(x), kernels::silu)
    }

    pub fn silu_grad(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::SiluGrad(x), kernels::silu_d1)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = vec![self.value(x).iter().sum()];
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), Shape::scalar(), value, rg)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let value = vec![v.iter().sum::<f64>() / v.len() as f64];
        let rg = self.rg(&[x]);
        self.push(Op::Mean(x), Shape::scalar(), value, rg)
    }

    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> NodeId {
        assert!(self.shape(s).is_scalar(), "mul_scalar needs a scalar node");
        let c = self.scalar(s);
        let shape = self.shape(x);
        let value = self.value(x).iter().map(|v| v * c).collect();
        let rg = self.rg(&[x, s]);
        self.push(Op::MulScalar { x, s }, shape, value, rg)
    }

    /// Exact reverse-mode gradient of scalar `loss` with respect to every registered parameter.
    pub fn backward(&self, loss: NodeId) -> Result<GradientBundle> {
        let adj = self.adjoints(loss)?;
        let mut bundle = GradientBundle::zeros(self.sizes);
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            let Op::Param { group, offset } = node.op else {
                continue;
            };
            let Some(g) = adj.grads[i].as_deref() else {
                continue;
            };
            match group {
                ParamGroup::Theta => add_into(&mut bundle.d_theta[offset..offset + g.len()], g),
                ParamGroup::Phi => add_into(&mut bundle.d_phi[offset..offset + g.len()], g),
                ParamGroup::S1 => bundle.d_s1 += g[0],
            }
        }
        Ok(bundle)
    }

    /// Gradient of a scalar assembled from recorded tangents; identical to [`Tape::backward`]
    /// because tangents live on the tape.
    pub fn grad_of_tangent_scalar(&self, scalar: NodeId) -> Result<GradientBundle> {
        self.backward(scalar)
    }

    pub fn adjoints(&self, loss: NodeId) -> Result<Adjoints> {
        if loss.0 >= self.nodes.len() {
            return Err(JawsError::Contract(format!("node {} not on tape", loss.0)));
        }
        if !self.shape(loss).is_scalar() {
            return Err(JawsError::Contract(format!(
                "backward needs a scalar node, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Adjoints { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => add_into(g, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Vec<f64>>],
        id: NodeId,
        f: impl Fn(usize) -> f64,
    ) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let len = self.nodes[id.0].value.len();
        match &mut grads[id.0] {
            Some(g) => g.iter_mut().enumerate().for_each(|(j, v)| *v += f(j)),
            slot @ None => *slot = Some((0..len).map(f).collect()),
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match node.op {
            Op::Leaf | Op::Param { .. } | Op::Detach => {}
            Op::Conv { x, w, b, kernel } => {
                let sx = self.shape(x);
                let cout = node.shape.rows;
                if self.requires_grad(x) {
                    let gx = kernels::conv_input_adjoint(
                        g,
                        cout,
                        sx.cols,
                        self.value(w),
                        sx.rows,
                        kernel,
                    );
                    self.accumulate(grads, x, gx);
                }
                if self.requires_grad(w) {
                    let gw = kernels::conv_weight_grad(
                        g,
                        cout,
                        sx.cols,
                        self.value(x),
                        sx.rows,
                        kernel,
                    );
                    self.accumulate(grads, w, gw);
                }
                if let Some(b) = b {
                    self.accumulate(grads, b, kernels::conv_bias_grad(g, cout, sx.cols));
                }
            }
            Op::Silu(x) => {
                let xv = self.value(x);
                self.accumulate_with(grads, x, |j| g[j] * kernels::silu_d1(xv[j]));
            }
            Op::SiluGrad(x) => {
                let xv = self.value(x);
                self.accumulate_with(grads, x, |j| g[j] * kernels::silu_d2(xv[j]));
            }
            Op::Add(a, b) => {
                self.accumulate_with(grads, a, |j| g[j]);
                self.accumulate_with(grads, b, |j| g[j]);
            }
            Op::Sub(a, b) => {
                self.accumulate_with(grads, a, |j| g[j]);
                self.accumulate_with(grads, b, |j| -g[j]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                self.accumulate_with(grads, a, |j| g[j] * bv[j]);
                self.accumulate_with(grads, b, |j| g[j] * av[j]);
            }
            Op::Scale(x, c) => self.accumulate_with(grads, x, |j| c * g[j]),
            Op::Square(x) => {
                let xv = self.value(x);
                self.accumulate_with(grads, x, |j| 2.0 * xv[j] * g[j]);
            }
            Op::Exp(x) => {
                let zv = &node.value;
                self.accumulate_with(grads, x, |j| g[j] * zv[j]);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(x);
                self.accumulate_with(grads, x, |j| {
                    if xv[j] >= lo && xv[j] <= hi {
                        g[j]
                    } else {
                        0.0
                    }
                });
            }
            Op::Sum(x) => self.accumulate_with(grads, x, |_| g[0]),
            Op::Mean(x) => {
                let scale = g[0] / self.value(x).len() as f64;
                self.accumulate_with(grads, x, |_| scale);
            }
            Op::MulScalar { x, s } => {
                let c = self.scalar(s);
                self.accumulate_with(grads, x, |j| g[j] * c);
                if self.requires_grad(s) {
                    let d = kernels::dot(g, self.value(x));
                    self.accumulate(grads, s, vec![d]);
                }
            }
        }
    }

    /// Records the tangent `J·v` of `output` along direction `v` placed on `input`.
    ///
    /// Every tangent is a tape node, so scalars built from the result are differentiable
    /// with respect to parameters.
    pub fn jvp(&mut self, input: NodeId, output: NodeId, v: &[f64]) -> Result<NodeId> {
        self.check_jvp(input, output, v)?;
        let shape = self.shape(input);
        let seed = self.input(v.to_vec(), shape);
        let mut tan: Vec<Option<NodeId>> = vec![None; output.0 + 1];
        tan[input.0] = Some(seed);
        for i in input.0 + 1..=output.0 {
            tan[i] = self.tangent_node(i, &tan)?;
        }
        Ok(match tan[output.0] {
            Some(t) => t,
            None => {
                let s = self.shape(output);
                self.input(vec![0.0; s.len()], s)
            }
        })
    }

    fn tangent_node(&mut self, i: usize, tan: &[Option<NodeId>]) -> Result<Option<NodeId>> {
        let op = self.nodes[i].op.clone();
        let t = |id: NodeId| tan[id.0];
        let out = match op {
            Op::Leaf | Op::Param { .. } | Op::Detach => None,
            Op::Conv { x, w, b, kernel } => {
                if b.and_then(t).is_some() {
                    return Err(JawsError::Unsupported("tangent through conv bias".into()));
                }
                let from_x = t(x).map(|tx| self.conv(tx, w, None, kernel));
                let from_w = t(w).map(|tw| self.conv(x, tw, None, kernel));
                self.add_opt(from_x, from_w)
            }
            Op::Silu(x) => match t(x) {
                Some(tx) => {
                    let d = self.silu_grad(x);
                    Some(self.mul(d, tx))
                }
                None => None,
            },
            Op::SiluGrad(x) => {
                if t(x).is_some() {
                    return Err(JawsError::Unsupported(
                        "nested tangent through activation derivative".into(),
                    ));
                }
                None
            }
            Op::Add(a, b) => self.add_opt(t(a), t(b)),
            Op::Sub(a, b) => {
                let nb = t(b).map(|tb| self.scale(tb, -1.0));
                self.add_opt(t(a), nb)
            }
            Op::Mul(a, b) => {
                let pa = t(a).map(|ta| self.mul(ta, b));
                let pb = t(b).map(|tb| self.mul(a, tb));
                self.add_opt(pa, pb)
            }
            Op::Scale(x, c) => t(x).map(|tx| self.scale(tx, c)),
            Op::Square(x) => t(x).map(|tx| {
                let p = self.mul(x, tx);
                self.scale(p, 2.0)
            }),
            Op::Exp(x) => t(x).map(|tx| self.mul(NodeId(i), tx)),
            Op::Clamp { x, lo, hi } => t(x).map(|tx| {
                let mask: Vec<f64> = self
                    .value(x)
                    .iter()
                    .map(|&v| if v >= lo && v <= hi { 1.0 } else { 0.0 })
                    .collect();
                let shape = self.shape(x);
                let m = self.input(mask, shape);
                self.mul(m, tx)
            }),
            Op::Sum(x) => t(x).map(|tx| self.sum(tx)),
            Op::Mean(x) => t(x).map(|tx| self.mean(tx)),
            Op::MulScalar { x, s } => {
                let px = t(x).map(|tx| self.mul_scalar(tx, s));
                let ps = t(s).map(|ts| self.mul_scalar(x, ts));
                self.add_opt(px, ps)
            }
        };
        Ok(out)
    }

    fn add_opt(&mut self, a: Option<NodeId>, b: Option<NodeId>) -> Option<NodeId> {
        match (a, b) {
            (Some(a), Some(b)) => Some(self.add(a, b)),
            (a, None) => a,
            (None, b) => b,
        }
    }

    /// Value of `J·v` without recording anything (evaluation-only path).
    pub fn jvp_values(&self, input: NodeId, output: NodeId, v: &[f64]) -> Result<Vec<f64>> {
        self.check_jvp(input, output, v)?;
        let mut tan: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        tan[input.0] = Some(v.to_vec());
        for i in input.0 + 1..=output.0 {
            tan[i] = self.tangent_value(i, &tan)?;
        }
        Ok(tan[output.0]
            .take()
            .unwrap_or_else(|| vec![0.0; self.shape(output).len()]))
    }

    fn tangent_value(&self, i: usize, tan: &[Option<Vec<f64>>]) -> Result<Option<Vec<f64>>> {
        let node = &self.nodes[i];
        let t = |id: NodeId| tan[id.0].as_deref();
        let zip = |a: &[f64], b: &[f64], f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
        };
        let sum_opt = |a: Option<Vec<f64>>, b: Option<Vec<f64>>| match (a, b) {
            (Some(mut a), Some(b)) => {
                add_into(&mut a, &b);
                Some(a)
            }
            (a, None) => a,
            (None, b) => b,
        };
        let out = match node.op {
            Op::Leaf | Op::Param { .. } | Op::Detach => None,
            Op::Conv { x, w, b, kernel } => {
                if b.and_then(t).is_some() {
                    return Err(JawsError::Unsupported("tangent through conv bias".into()));
                }
                let sx = self.shape(x);
                let cout = node.shape.rows;
                let fx = t(x).map(|tx| {
                    kernels::conv_forward(tx, sx.rows, sx.cols, self.value(w), cout, kernel, None)
                });
                let fw = t(w).map(|tw| {
                    kernels::conv_forward(self.value(x), sx.rows, sx.cols, tw, cout, kernel, None)
                });
                sum_opt(fx, fw)
            }
            Op::Silu(x) => t(x).map(|tx| {
                zip(self.value(x), tx, &|xv, tv| kernels::silu_d1(xv) * tv)
            }),
            Op::SiluGrad(x) => {
                if t(x).is_some() {
                    return Err(JawsError::Unsupported(
                        "nested tangent through activation derivative".into(),
                    ));
                }
                None
            }
            Op::Add(a, b) => sum_opt(t(a).map(<[f64]>::to_vec), t(b).map(<[f64]>::to_vec)),
            Op::Sub(a, b) => sum_opt(
                t(a).map(<[f64]>::to_vec),
                t(b).map(|tb| tb.iter().map(|v| -v).collect()),
            ),
            Op::Mul(a, b) => sum_opt(
                t(a).map(|ta| zip(ta, self.value(b), &|p, q| p * q)),
                t(b).map(|tb| zip(self.value(a), tb, &|p, q| p * q)),
            ),
            Op::Scale(x, c) => t(x).map(|tx| tx.iter().map(|v| c * v).collect()),
            Op::Square(x) => t(x).map(|tx| zip(self.value(x), tx, &|p, q| 2.0 * p * q)),
            Op::Exp(x) => t(x).map(|tx| zip(&node.value, tx, &|p, q| p * q)),
            Op::Clamp { x, lo, hi } => t(x).map(|tx| {
                zip(self.value(x), tx, &|p, q| if p >= lo && p <= hi { q } else { 0.0 })
            }),
            Op::Sum(x) => t(x).map(|tx| vec![tx.iter().sum()]),
            Op::Mean(x) => t(x).map(|tx| vec![tx.iter().sum::<f64>() / tx.len() as f64]),
            Op::MulScalar { x, s } => {
                let c = self.scalar(s);
                sum_opt(
                    t(x).map(|tx| tx.iter().map(|v| v * c).collect()),
                    t(s).map(|ts| self.value(x).iter().map(|v| v * ts[0]).collect()),
                )
            }
        };
        Ok(out)
    }

    fn check_jvp(&self, input: NodeId, output: NodeId, v: &[f64]) -> Result<()> {
        if input.0 >= self.nodes.len() || output.0 >= self.nodes.len() || output < input {
            return Err(JawsError::Contract(
                "jvp needs input and output on the tape with input preceding output".into(),
            ));
        }
        let expected = self.shape(input).len();
        if v.len() != expected {
            return Err(JawsError::ShapeMismatch {
                expected,
                got: v.len(),
            });
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
