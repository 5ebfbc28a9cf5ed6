use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::{Result, Tensor, TensorError};

/// Identity of a trainable parameter inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Gelu,
    Tanh,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Identity, Activation::Gelu, Activation::Tanh];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            // tanh approximation of GELU
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// `(apply(x), derivative(x))`, sharing the transcendental evaluation.
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (x, 1.0),
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                (0.5 * x * (1.0 + t), d)
            }
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Identity => "identity",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(Activation::Identity),
            "gelu" => Ok(Activation::Gelu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// A differentiable primitive defined outside this module.
///
/// `backward` returns one entry per input; `None` means "no gradient flows
/// into this input".
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &Tensor,
    ) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    /// Input and the activation's derivative at each input value.
    Act(Var, Vec<f64>),
    Gather(Var, Arc<[usize]>),
    Reshape(Var),
    Custom(Arc<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Gradients for parameters `0..n`, missing entries as `None`.
    pub fn take_ordered(mut self, n: usize) -> Vec<Option<Tensor>> {
        (0..n).map(|i| self.map.remove(&ParamId(i))).collect()
    }
}

/// Define-by-run computation record.
///
/// `backward` may run once per graph; a second call is an error
/// ([`TensorError::GraphConsumed`]). Gradient buffers are fresh for every
/// backward pass, so nothing accumulates across graphs.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var], name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name.into() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: Some(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), &[a, b], "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect());
        self.push(t, Op::Scale(a, c), &[a], "scale")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// `[m, k] x [k, n] -> [m, n]` or `[m, k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        };
        if ta.rank() != 2 || !(tb.rank() == 1 || tb.rank() == 2) {
            return Err(mismatch());
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        if tb.shape()[0] != k {
            return Err(mismatch());
        }
        let n = if tb.rank() == 2 { tb.shape()[1] } else { 1 };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        let shape = if tb.rank() == 2 { vec![m, n] } else { vec![m] };
        self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), &[a, b], "matmul")
    }

    /// Pointwise dense map over the channel axis:
    /// `x: [B, Cin, ...]`, `w: [Cout, Cin]`, `b: [Cout]` gives `[B, Cout, ...]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let mismatch = |rhs: &Tensor| TensorError::ShapeMismatch {
            op: "linear",
            lhs: tx.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        if tx.rank() < 2 || tw.rank() != 2 || tw.shape()[1] != tx.shape()[1] {
            return Err(mismatch(tw));
        }
        let (batch, cin) = (tx.shape()[0], tx.shape()[1]);
        let cout = tw.shape()[0];
        let p: usize = tx.shape()[2..].iter().product();
        let mut out = vec![0.0; batch * cout * p];
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [cout] {
                return Err(mismatch(tb));
            }
            for bi in 0..batch {
                for (o, &bias) in tb.data().iter().enumerate() {
                    let start = (bi * cout + o) * p;
                    out[start..start + p].fill(bias);
                }
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        for bi in 0..batch {
            gemm(
                cout,
                cin,
                p,
                tw.data(),
                false,
                &tx.data()[bi * cin * p..(bi + 1) * cin * p],
                false,
                beta,
                &mut out[bi * cout * p..(bi + 1) * cout * p],
            );
        }
        let mut shape = tx.shape().to_vec();
        shape[1] = cout;
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(Tensor::from_parts(shape, out), Op::Linear { x, w, b }, &parents, "linear")
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        if act == Activation::Identity {
            return Ok(a);
        }
        let ta = self.value(a);
        let (values, slopes): (Vec<f64>, Vec<f64>) = ta.data().iter().map(|&x| act.apply_with_derivative(x)).unzip();
        let t = Tensor::from_parts(ta.shape().to_vec(), values);
        self.push(t, Op::Act(a, slopes), &[a], "activation")
    }

    /// `out.flat[j] = a.flat[index[j]]`, reshaped to `shape`.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>, shape: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        if shape.iter().product::<usize>() != index.len() {
            return Err(TensorError::Invalid(format!(
                "gather index length {} does not fill shape {shape:?}",
                index.len()
            )));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= ta.len()) {
            return Err(TensorError::Invalid(format!(
                "gather index {bad} out of bounds for {} elements",
                ta.len()
            )));
        }
        let data = index.iter().map(|&i| ta.data()[i]).collect();
        self.push(Tensor::from_parts(shape, data), Op::Gather(a, index), &[a], "gather")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        self.push(t, Op::Reshape(a), &[a], "reshape")
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let t = {
            let ins: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
            op.forward(&ins)?
        };
        let name = op.name().to_string();
        self.push(t, Op::Custom(op, inputs.to_vec()), inputs, &name)
    }

    /// Reverse accumulation from a scalar `loss`.
    ///
    /// Every parameter registered in the graph receives an entry; parameters
    /// with no path to `loss` get a zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Some(id) = node.param {
                let t = Tensor::from_parts(node.value.shape().to_vec(), g);
                match out.map.get_mut(&id) {
                    Some(acc) => acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                    None => {
                        out.map.insert(id, t);
                    }
                }
                continue;
            }
            self.propagate(i, g, &mut grads)?;
        }

        for node in &self.nodes {
            if let Some(id) = node.param {
                out.map
                    .entry(id)
                    .or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(out)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: Vec<f64>, grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.rg(*a) && self.rg(*b) {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                } else if self.rg(*a) {
                    accumulate(&mut grads[a.0], g);
                } else {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.iter().map(|x| -x).collect());
                }
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.iter().zip(tb.data()).map(|(x, y)| x * y).collect());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.iter().zip(ta.data()).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(a, c) => accumulate(&mut grads[a.0], g.iter().map(|x| x * c).collect()),
            Op::Sum(a) => {
                let n = self.value(*a).len();
                accumulate(&mut grads[a.0], vec![g[0]; n]);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = if tb.rank() == 2 { tb.shape()[1] } else { 1 };
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, &g, false, tb.data(), true, 0.0, &mut ga);
                    accumulate(&mut grads[a.0], ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, &g, false, 0.0, &mut gb);
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (batch, cin) = (tx.shape()[0], tx.shape()[1]);
                let cout = tw.shape()[0];
                let p: usize = tx.shape()[2..].iter().product();
                if self.rg(*x) {
                    let mut gx = vec![0.0; batch * cin * p];
                    for bi in 0..batch {
                        gemm(
                            cin,
                            cout,
                            p,
                            tw.data(),
                            true,
                            &g[bi * cout * p..(bi + 1) * cout * p],
                            false,
                            0.0,
                            &mut gx[bi * cin * p..(bi + 1) * cin * p],
                        );
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; cout * cin];
                    for bi in 0..batch {
                        gemm(
                            cout,
                            p,
                            cin,
                            &g[bi * cout * p..(bi + 1) * cout * p],
                            false,
                            &tx.data()[bi * cin * p..(bi + 1) * cin * p],
                            true,
                            1.0,
                            &mut gw,
                        );
                    }
                    accumulate(&mut grads[w.0], gw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut gb = vec![0.0; cout];
                        for bi in 0..batch {
                            for (o, acc) in gb.iter_mut().enumerate() {
                                let start = (bi * cout + o) * p;
                                *acc += g[start..start + p].iter().sum::<f64>();
                            }
                        }
                        accumulate(&mut grads[b.0], gb);
                    }
                }
            }
            Op::Act(a, slopes) => {
                let ga = g.iter().zip(slopes).map(|(gi, d)| gi * d).collect();
                accumulate(&mut grads[a.0], ga);
            }
            Op::Gather(a, index) => {
                let mut ga = vec![0.0; self.value(*a).len()];
                for (gi, &src) in g.iter().zip(index.iter()) {
                    ga[src] += gi;
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::Reshape(a) => accumulate(&mut grads[a.0], g),
            Op::Custom(op, inputs) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gout = Tensor::from_parts(node.value.shape().to_vec(), g);
                let gin = op.backward(&ins, &node.value, &gout)?;
                if gin.len() != inputs.len() {
                    return Err(TensorError::Invalid(format!(
                        "{} returned {} gradients for {} inputs",
                        op.name(),
                        gin.len(),
                        inputs.len()
                    )));
                }
                for (v, gi) in inputs.iter().zip(gin) {
                    if let (true, Some(gi)) = (self.rg(*v), gi) {
                        same_shape("custom backward", self.value(*v), &gi)?;
                        accumulate(&mut grads[v.0], gi.into_data());
                    }
                }
            }
        }
        Ok(())
    }
}
