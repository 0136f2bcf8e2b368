//! Computation graph with reverse-mode gradients and forward-mode tangents.
//!
//! Every node may carry up to `directions` tangents. A tangent is itself a
//! node of the same graph, built from primitive ops that do not carry tangents
//! of their own. A derivative of an output with respect to an input
//! coordinate is therefore an ordinary node, and a single reverse pass over a
//! loss built from such nodes yields exact mixed second derivatives.

use indexmap::IndexMap;

use super::array::{axis_split, gemm};
use super::{Array, Gradients, ParamSet};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Sin,
    Cos,
    Exp,
    Ln,
    Square,
    Abs,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Square => x * x,
            Unary::Abs => x.abs(),
        }
    }

    /// Derivative at input `x` with output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Softplus => sigmoid(x),
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Square => 2.0 * x,
            Unary::Abs => sign(x),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Square => "square",
            Unary::Abs => "abs",
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    MatMul(Var, Var),
    AddBias { x: Var, bias: Var, axis: usize },
    Conv2d { input: Var, kernel: Var },
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize, len: usize },
    GatherRows { x: Var, index: Vec<usize> },
    SumAxis { x: Var, axis: usize },
    Unary(Var, Unary),
    Sum(Var),
    Mean(Var),
    MinConst(Var, f64),
    MaxConst(Var, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Conv2d { .. } => "conv2d",
            Op::Reshape(..) => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::GatherRows { .. } => "gather_rows",
            Op::SumAxis { .. } => "sum_axis",
            Op::Unary(_, u) => u.name(),
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MinConst(..) => "min_const",
            Op::MaxConst(..) => "max_const",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::AddBias { x, bias, .. } => vec![*x, *bias],
            Op::Conv2d { input, kernel } => vec![*input, *kernel],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Reshape(a)
            | Op::Unary(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MinConst(a, _)
            | Op::MaxConst(a, _) => vec![*a],
            Op::Slice { x, .. } | Op::GatherRows { x, .. } | Op::SumAxis { x, .. } => vec![*x],
        }
    }
}

struct Node {
    op: Op,
    value: Array,
    tangents: Vec<Option<Var>>,
}

/// A single-threaded computation graph.
pub struct Graph {
    nodes: Vec<Node>,
    directions: usize,
    bound: IndexMap<String, Var>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Graph {
    /// A graph whose nodes carry `directions` forward-mode tangents.
    pub fn new(directions: usize) -> Self {
        Self {
            nodes: Vec::new(),
            directions,
            bound: IndexMap::new(),
        }
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Tangent node of `v` along `direction`, if any.
    pub fn tangent_opt(&self, v: Var, direction: usize) -> Option<Var> {
        self.nodes[v.0].tangents.get(direction).copied().flatten()
    }

    /// Tangent node of `v` along `direction`; a zero constant when `v` does
    /// not depend on the seeded input.
    pub fn tangent(&mut self, v: Var, direction: usize) -> Var {
        match self.tangent_opt(v, direction) {
            Some(t) => t,
            None => {
                let z = Array::zeros(self.shape(v));
                self.constant(z)
            }
        }
    }

    pub fn constant(&mut self, value: Array) -> Var {
        self.push_leaf(Op::Leaf, value, Vec::new())
    }

    /// An input leaf with explicit tangent seeds, one per direction.
    pub fn input(&mut self, value: Array, seeds: Vec<Option<Array>>) -> Result<Var> {
        if seeds.len() > self.directions {
            return Err(Error::InvalidArgument(format!(
                "{} tangent seeds for a graph with {} directions",
                seeds.len(),
                self.directions
            )));
        }
        let mut tangents = Vec::with_capacity(seeds.len());
        for seed in seeds {
            match seed {
                Some(s) => {
                    if s.shape() != value.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "input",
                            lhs: value.shape().to_vec(),
                            rhs: s.shape().to_vec(),
                        });
                    }
                    tangents.push(Some(self.constant(s)));
                }
                None => tangents.push(None),
            }
        }
        Ok(self.push_leaf(Op::Leaf, value, tangents))
    }

    /// Binds a trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = params.get(name)?.clone();
        let v = self.push_leaf(Op::Param(self.bound.len()), value, Vec::new());
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    fn push_leaf(&mut self, op: Op, value: Array, mut tangents: Vec<Option<Var>>) -> Var {
        tangents.resize(self.directions, None);
        self.nodes.push(Node {
            op,
            value,
            tangents,
        });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` and appends it without tangents.
    fn push(&mut self, op: Op) -> Result<Var> {
        let value = self.evaluate(&op)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        Ok(self.push_leaf(op, value, Vec::new()))
    }

    fn set_tangent(&mut self, v: Var, direction: usize, t: Option<Var>) {
        self.nodes[v.0].tangents[direction] = t;
    }

    fn has_tangents(&self, vars: &[Var]) -> bool {
        vars.iter()
            .any(|v| self.nodes[v.0].tangents.iter().any(Option::is_some))
    }

    // ---------------------------------------------------------------------
    // Forward evaluation
    // ---------------------------------------------------------------------

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn evaluate(&self, op: &Op) -> Result<Array> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let out = match op {
            Op::Leaf | Op::Param(_) => unreachable!("leaves are pushed directly"),
            Op::Add(a, b) => {
                self.same_shape("add", *a, *b)?;
                val(a).zip_map(val(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                self.same_shape("sub", *a, *b)?;
                val(a).zip_map(val(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                self.same_shape("mul", *a, *b)?;
                val(a).zip_map(val(b), |x, y| x * y)
            }
            Op::Div(a, b) => {
                self.same_shape("div", *a, *b)?;
                val(a).zip_map(val(b), |x, y| x / y)
            }
            Op::Scale(a, c) => val(a).map(|x| x * c),
            Op::AddScalar(a, c) => val(a).map(|x| x + c),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(a), val(b));
                if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0]
                {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        lhs: va.shape().to_vec(),
                        rhs: vb.shape().to_vec(),
                    });
                }
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let mut out = vec![0.0; m * n];
                gemm(m, k, n, va.data(), (k as isize, 1), vb.data(), (n as isize, 1), &mut out);
                Array::new(&[m, n], out)?
            }
            Op::AddBias { x, bias, axis } => {
                let (vx, vb) = (val(x), val(bias));
                if *axis >= vx.shape().len() || vb.len() != vx.shape()[*axis] {
                    return Err(Error::ShapeMismatch {
                        op: "add_bias",
                        lhs: vx.shape().to_vec(),
                        rhs: vb.shape().to_vec(),
                    });
                }
                let (outer, n, inner) = axis_split(vx.shape(), *axis);
                let mut out = vx.clone();
                let data = out.data_mut();
                for o in 0..outer {
                    for j in 0..n {
                        let b = vb.data()[j];
                        let base = (o * n + j) * inner;
                        for e in &mut data[base..base + inner] {
                            *e += b;
                        }
                    }
                }
                out
            }
            Op::Conv2d { input, kernel } => conv2d_forward(val(input), val(kernel))?,
            Op::Reshape(_) => unreachable!("reshape is pushed with its target shape"),
            Op::Concat { inputs, axis } => {
                let first = val(&inputs[0]).shape().to_vec();
                if *axis >= first.len() {
                    return Err(Error::InvalidArgument(format!(
                        "concat axis {axis} out of range for rank {}",
                        first.len()
                    )));
                }
                let mut total = 0;
                for v in inputs {
                    let s = val(v).shape();
                    let compatible = s.len() == first.len()
                        && s.iter()
                            .zip(&first)
                            .enumerate()
                            .all(|(d, (x, y))| d == *axis || x == y);
                    if !compatible {
                        return Err(Error::ShapeMismatch {
                            op: "concat",
                            lhs: first.clone(),
                            rhs: s.to_vec(),
                        });
                    }
                    total += s[*axis];
                }
                let mut shape = first.clone();
                shape[*axis] = total;
                let (outer, _, inner) = axis_split(&shape, *axis);
                let mut out = Vec::with_capacity(shape.iter().product());
                for o in 0..outer {
                    for v in inputs {
                        let a = val(v);
                        let n = a.shape()[*axis];
                        out.extend_from_slice(&a.data()[o * n * inner..(o + 1) * n * inner]);
                    }
                }
                Array::new(&shape, out)?
            }
            Op::Slice {
                x,
                axis,
                start,
                len,
            } => {
                let a = val(x);
                if *axis >= a.shape().len() || start + len > a.shape()[*axis] {
                    return Err(Error::InvalidArgument(format!(
                        "slice {start}..{} out of range for shape {:?}",
                        start + len,
                        a.shape()
                    )));
                }
                let (outer, n, inner) = axis_split(a.shape(), *axis);
                let mut shape = a.shape().to_vec();
                shape[*axis] = *len;
                let mut out = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    out.extend_from_slice(&a.data()[base..base + len * inner]);
                }
                Array::new(&shape, out)?
            }
            Op::GatherRows { x, index } => {
                let a = val(x);
                if a.shape().len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "gather_rows expects a matrix, got {:?}",
                        a.shape()
                    )));
                }
                let (m, n) = (a.shape()[0], a.shape()[1]);
                let mut out = Vec::with_capacity(index.len() * n);
                for &i in index {
                    if i >= m {
                        return Err(Error::InvalidArgument(format!(
                            "row index {i} out of range for {m} rows"
                        )));
                    }
                    out.extend_from_slice(&a.data()[i * n..(i + 1) * n]);
                }
                Array::new(&[index.len(), n], out)?
            }
            Op::SumAxis { x, axis } => {
                let a = val(x);
                if *axis >= a.shape().len() {
                    return Err(Error::InvalidArgument(format!(
                        "sum axis {axis} out of range for {:?}",
                        a.shape()
                    )));
                }
                let (outer, n, inner) = axis_split(a.shape(), *axis);
                let mut shape = a.shape().to_vec();
                shape[*axis] = 1;
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += a.data()[base + i];
                        }
                    }
                }
                Array::new(&shape, out)?
            }
            Op::Unary(a, u) => val(a).map(|x| u.apply(x)),
            Op::Sum(a) => Array::scalar(val(a).data().iter().sum()),
            Op::Mean(a) => {
                let v = val(a);
                if v.is_empty() {
                    return Err(Error::InvalidArgument("mean of an empty array".into()));
                }
                Array::scalar(v.data().iter().sum::<f64>() / v.len() as f64)
            }
            Op::MinConst(a, c) => val(a).map(|x| x.min(*c)),
            Op::MaxConst(a, c) => val(a).map(|x| x.max(*c)),
        };
        Ok(out)
    }

    // ---------------------------------------------------------------------
    // Public primitive ops (value + tangents)
    // ---------------------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.push(Op::Add(a, b))?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(a, d), self.tangent_opt(b, d)) {
                (None, None) => None,
                (Some(ta), None) => Some(ta),
                (None, Some(tb)) => Some(tb),
                (Some(ta), Some(tb)) => Some(self.push(Op::Add(ta, tb))?),
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.push(Op::Sub(a, b))?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(a, d), self.tangent_opt(b, d)) {
                (None, None) => None,
                (Some(ta), None) => Some(ta),
                (None, Some(tb)) => Some(self.push(Op::Scale(tb, -1.0))?),
                (Some(ta), Some(tb)) => Some(self.push(Op::Sub(ta, tb))?),
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.push(Op::Mul(a, b))?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(a, d), self.tangent_opt(b, d)) {
                (None, None) => None,
                (Some(ta), None) => Some(self.push(Op::Mul(ta, b))?),
                (None, Some(tb)) => Some(self.push(Op::Mul(a, tb))?),
                (Some(ta), Some(tb)) => {
                    let x = self.push(Op::Mul(ta, b))?;
                    let y = self.push(Op::Mul(a, tb))?;
                    Some(self.push(Op::Add(x, y))?)
                }
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.push(Op::Div(a, b))?;
        for d in 0..self.directions {
            // d(a/b) = (da - y db) / b
            let t = match (self.tangent_opt(a, d), self.tangent_opt(b, d)) {
                (None, None) => None,
                (Some(ta), None) => Some(self.push(Op::Div(ta, b))?),
                (ta, Some(tb)) => {
                    let ytb = self.push(Op::Mul(out, tb))?;
                    let num = match ta {
                        Some(ta) => self.push(Op::Sub(ta, ytb))?,
                        None => self.push(Op::Scale(ytb, -1.0))?,
                    };
                    Some(self.push(Op::Div(num, b))?)
                }
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.push(Op::Scale(a, c))?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push(Op::Scale(ta, c))?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.push(Op::AddScalar(a, c))?;
        for d in 0..self.directions {
            let t = self.tangent_opt(a, d);
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.push(Op::MatMul(a, b))?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(a, d), self.tangent_opt(b, d)) {
                (None, None) => None,
                (Some(ta), None) => Some(self.push(Op::MatMul(ta, b))?),
                (None, Some(tb)) => Some(self.push(Op::MatMul(a, tb))?),
                (Some(ta), Some(tb)) => {
                    let x = self.push(Op::MatMul(ta, b))?;
                    let y = self.push(Op::MatMul(a, tb))?;
                    Some(self.push(Op::Add(x, y))?)
                }
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    /// Adds the 1-D `bias` along `axis` of `x`, broadcasting over all other axes.
    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Result<Var> {
        let out = self.push(Op::AddBias { x, bias, axis })?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(x, d), self.tangent_opt(bias, d)) {
                (None, None) => None,
                (Some(tx), None) => Some(tx),
                (tx, Some(tb)) => {
                    let base = match tx {
                        Some(tx) => tx,
                        None => {
                            let z = Array::zeros(self.shape(x));
                            self.constant(z)
                        }
                    };
                    Some(self.push(Op::AddBias {
                        x: base,
                        bias: tb,
                        axis,
                    })?)
                }
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    /// Valid-padding 2-D convolution of `input: [N, Cin, H, W]` with
    /// `kernel: [Cout, Cin, KH, KW]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let out = self.push(Op::Conv2d { input, kernel })?;
        for d in 0..self.directions {
            let t = match (self.tangent_opt(input, d), self.tangent_opt(kernel, d)) {
                (None, None) => None,
                (Some(ti), None) => Some(self.push(Op::Conv2d { input: ti, kernel })?),
                (None, Some(tk)) => Some(self.push(Op::Conv2d { input, kernel: tk })?),
                (Some(ti), Some(tk)) => {
                    let x = self.push(Op::Conv2d { input: ti, kernel })?;
                    let y = self.push(Op::Conv2d { input, kernel: tk })?;
                    Some(self.push(Op::Add(x, y))?)
                }
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    fn push_reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push_leaf(Op::Reshape(a), value, Vec::new()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.push_reshape(a, shape)?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push_reshape(ta, shape)?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    /// Collapses all but the leading axis.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let rows = shape.first().copied().unwrap_or(1);
        let cols = shape.iter().skip(1).product();
        self.reshape(a, &[rows, cols])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("concat of zero inputs".into()));
        }
        let out = self.push(Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        })?;
        for d in 0..self.directions {
            if inputs.iter().all(|v| self.tangent_opt(*v, d).is_none()) {
                continue;
            }
            let parts: Vec<Var> = inputs.iter().map(|v| self.tangent(*v, d)).collect();
            let t = self.push(Op::Concat {
                inputs: parts,
                axis,
            })?;
            self.set_tangent(out, d, Some(t));
        }
        Ok(out)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = self.push(Op::Slice {
            x,
            axis,
            start,
            len,
        })?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(x, d) {
                Some(tx) => Some(self.push(Op::Slice {
                    x: tx,
                    axis,
                    start,
                    len,
                })?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let out = self.push(Op::GatherRows {
            x,
            index: index.to_vec(),
        })?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(x, d) {
                Some(tx) => Some(self.push(Op::GatherRows {
                    x: tx,
                    index: index.to_vec(),
                })?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    /// Sums along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = self.push(Op::SumAxis { x, axis })?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(x, d) {
                Some(tx) => Some(self.push(Op::SumAxis { x: tx, axis })?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    fn unary(&mut self, a: Var, u: Unary) -> Result<Var> {
        let out = self.push(Op::Unary(a, u))?;
        if !self.has_tangents(&[a]) {
            return Ok(out);
        }
        if u == Unary::Ln {
            for d in 0..self.directions {
                let t = match self.tangent_opt(a, d) {
                    Some(ta) => Some(self.push(Op::Div(ta, a))?),
                    None => None,
                };
                self.set_tangent(out, d, t);
            }
            return Ok(out);
        }
        let deriv = match u {
            Unary::Tanh => {
                let s = self.push(Op::Unary(out, Unary::Square))?;
                let n = self.push(Op::Scale(s, -1.0))?;
                self.push(Op::AddScalar(n, 1.0))?
            }
            Unary::Sigmoid => {
                let n = self.push(Op::Scale(out, -1.0))?;
                let one_minus = self.push(Op::AddScalar(n, 1.0))?;
                self.push(Op::Mul(out, one_minus))?
            }
            Unary::Softplus => self.push(Op::Unary(a, Unary::Sigmoid))?,
            Unary::Sin => self.push(Op::Unary(a, Unary::Cos))?,
            Unary::Cos => {
                let s = self.push(Op::Unary(a, Unary::Sin))?;
                self.push(Op::Scale(s, -1.0))?
            }
            Unary::Exp => out,
            Unary::Square => self.push(Op::Scale(a, 2.0))?,
            Unary::Abs => {
                let s = self.value(a).map(sign);
                self.constant(s)
            }
            Unary::Ln => unreachable!(),
        };
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push(Op::Mul(ta, deriv))?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Softplus)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Cos)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Square)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Abs)
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = self.push(Op::Sum(a))?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push(Op::Sum(ta))?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let out = self.push(Op::Mean(a))?;
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push(Op::Mean(ta))?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(out)
    }

    fn clamp_tangents(&mut self, a: Var, out: Var, keep: impl Fn(f64) -> bool) -> Result<()> {
        if !self.has_tangents(&[a]) {
            return Ok(());
        }
        let mask = self.value(a).map(|x| if keep(x) { 1.0 } else { 0.0 });
        let mask = self.constant(mask);
        for d in 0..self.directions {
            let t = match self.tangent_opt(a, d) {
                Some(ta) => Some(self.push(Op::Mul(ta, mask))?),
                None => None,
            };
            self.set_tangent(out, d, t);
        }
        Ok(())
    }

    /// Elementwise `min(a, c)`.
    pub fn min_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.push(Op::MinConst(a, c))?;
        self.clamp_tangents(a, out, |x| x <= c)?;
        Ok(out)
    }

    /// Elementwise `max(a, c)`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.push(Op::MaxConst(a, c))?;
        self.clamp_tangents(a, out, |x| x >= c)?;
        Ok(out)
    }

    // ---------------------------------------------------------------------
    // Reverse pass
    // ---------------------------------------------------------------------

    /// Gradient of the scalar `loss` with respect to every entry of `params`.
    /// Entries never bound into this graph, or not reachable from `loss`,
    /// receive zeros.
    pub fn backward(&self, loss: Var, params: &ParamSet) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Array>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Array::full(lv.shape(), 1.0));
        let mut grads = params.zeros_like();
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            for inp in node.op.inputs() {
                if inp.0 >= id {
                    return Err(Error::Cycle(id));
                }
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(i) => {
                    let (name, _) = self.bound.get_index(*i).expect("bound parameter");
                    if let Ok(slot) = grads.get_mut(name) {
                        slot.add_assign(&g);
                    }
                }
                op => self.vjp(op, id, &g, &mut adj)?,
            }
        }
        Ok(grads)
    }

    fn vjp(&self, op: &Op, id: usize, g: &Array, adj: &mut [Option<Array>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &self.nodes[id].value;
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                accumulate(adj, *a, g.zip_map(val(*b), |x, y| x * y));
                accumulate(adj, *b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let vb = val(*b);
                accumulate(adj, *a, g.zip_map(vb, |x, y| x / y));
                let gy = g.zip_map(y, |x, y| x * y);
                accumulate(adj, *b, gy.zip_map(vb, |x, y| -x / y));
            }
            Op::Scale(a, c) => accumulate(adj, *a, g.map(|x| x * c)),
            Op::AddScalar(a, _) => accumulate(adj, *a, g.clone()),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                // dA = G · Bᵀ, dB = Aᵀ · G
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), (n as isize, 1), vb.data(), (1, n as isize), &mut da);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, va.data(), (1, k as isize), g.data(), (n as isize, 1), &mut db);
                accumulate(adj, *a, Array::new(&[m, k], da)?);
                accumulate(adj, *b, Array::new(&[k, n], db)?);
            }
            Op::AddBias { x, bias, axis } => {
                accumulate(adj, *x, g.clone());
                let (outer, n, inner) = axis_split(g.shape(), *axis);
                let mut db = vec![0.0; n];
                for o in 0..outer {
                    for (j, slot) in db.iter_mut().enumerate() {
                        let base = (o * n + j) * inner;
                        *slot += g.data()[base..base + inner].iter().sum::<f64>();
                    }
                }
                accumulate(adj, *bias, Array::new(val(*bias).shape(), db)?);
            }
            Op::Conv2d { input, kernel } => {
                let (di, dk) = conv2d_backward(val(*input), val(*kernel), g);
                accumulate(adj, *input, di);
                accumulate(adj, *kernel, dk);
            }
            Op::Reshape(a) => accumulate(adj, *a, g.reshaped(val(*a).shape())?),
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let shape = val(*v).shape();
                    let n = shape[*axis];
                    let mut part = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        part.extend_from_slice(&g.data()[base..base + n * inner]);
                    }
                    accumulate(adj, *v, Array::new(shape, part)?);
                    offset += n;
                }
            }
            Op::Slice {
                x,
                axis,
                start,
                len,
            } => {
                let shape = val(*x).shape();
                let (outer, n, inner) = axis_split(shape, *axis);
                let mut dx = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    let src = o * len * inner;
                    let dst = (o * n + start) * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                accumulate(adj, *x, Array::new(shape, dx)?);
            }
            Op::GatherRows { x, index } => {
                let shape = val(*x).shape();
                let n = shape[1];
                let mut dx = vec![0.0; shape[0] * n];
                for (r, &i) in index.iter().enumerate() {
                    for j in 0..n {
                        dx[i * n + j] += g.data()[r * n + j];
                    }
                }
                accumulate(adj, *x, Array::new(shape, dx)?);
            }
            Op::SumAxis { x, axis } => {
                let shape = val(*x).shape();
                let (outer, n, inner) = axis_split(shape, *axis);
                let mut dx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        dx[base..base + inner]
                            .copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                    }
                }
                accumulate(adj, *x, Array::new(shape, dx)?);
            }
            Op::Unary(a, u) => {
                let va = val(*a);
                let mut dx = g.clone();
                for ((d, &x), &yv) in dx.data_mut().iter_mut().zip(va.data()).zip(y.data()) {
                    *d *= u.derivative(x, yv);
                }
                accumulate(adj, *a, dx);
            }
            Op::Sum(a) => accumulate(adj, *a, Array::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let va = val(*a);
                accumulate(adj, *a, Array::full(va.shape(), g.item() / va.len() as f64));
            }
            Op::MinConst(a, c) => {
                let dx = g.zip_map(val(*a), |gv, x| if x <= *c { gv } else { 0.0 });
                accumulate(adj, *a, dx);
            }
            Op::MaxConst(a, c) => {
                let dx = g.zip_map(val(*a), |gv, x| if x >= *c { gv } else { 0.0 });
                accumulate(adj, *a, dx);
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Array>], v: Var, g: Array) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn conv_dims(input: &Array, kernel: &Array) -> Result<[usize; 8]> {
    let (si, sk) = (input.shape(), kernel.shape());
    if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] || sk[2] > si[2] || sk[3] > si[3] {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: si.to_vec(),
            rhs: sk.to_vec(),
        });
    }
    Ok([si[0], si[1], si[2], si[3], sk[0], sk[2], sk[3], 0])
}

fn conv2d_forward(input: &Array, kernel: &Array) -> Result<Array> {
    let [n, cin, h, w, cout, kh, kw, _] = conv_dims(input, kernel)?;
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let (x, k) = (input.data(), kernel.data());
    let mut out = vec![0.0; n * cout * ho * wo];
    for b in 0..n {
        for co in 0..cout {
            let obase = (b * cout + co) * ho * wo;
            for ci in 0..cin {
                let ibase = (b * cin + ci) * h * w;
                let kbase = (co * cin + ci) * kh * kw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let kv = k[kbase + ki * kw + kj];
                        for i in 0..ho {
                            let row = ibase + (i + ki) * w + kj;
                            let orow = obase + i * wo;
                            for j in 0..wo {
                                out[orow + j] += kv * x[row + j];
                            }
                        }
                    }
                }
            }
        }
    }
    Array::new(&[n, cout, ho, wo], out)
}

fn conv2d_backward(input: &Array, kernel: &Array, g: &Array) -> (Array, Array) {
    let (si, sk) = (input.shape(), kernel.shape());
    let (n, cin, h, w) = (si[0], si[1], si[2], si[3]);
    let (cout, kh, kw) = (sk[0], sk[2], sk[3]);
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let (x, k, gd) = (input.data(), kernel.data(), g.data());
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; k.len()];
    for b in 0..n {
        for co in 0..cout {
            let obase = (b * cout + co) * ho * wo;
            for ci in 0..cin {
                let ibase = (b * cin + ci) * h * w;
                let kbase = (co * cin + ci) * kh * kw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let kv = k[kbase + ki * kw + kj];
                        let mut acc = 0.0;
                        for i in 0..ho {
                            let row = ibase + (i + ki) * w + kj;
                            let orow = obase + i * wo;
                            for j in 0..wo {
                                let gv = gd[orow + j];
                                acc += gv * x[row + j];
                                dx[row + j] += gv * kv;
                            }
                        }
                        dk[kbase + ki * kw + kj] += acc;
                    }
                }
            }
        }
    }
    (
        Array::new(si, dx).expect("input shape"),
        Array::new(sk, dk).expect("kernel shape"),
    )
}

/// Derivative of the closure outputs with respect to one component of the
/// coordinate input `coords: [M, 2]` (column 0 = x, column 1 = t).
///
/// The returned nodes stay attached to `graph`, so a loss built from them can
/// be differentiated with respect to the weights used inside `closure`.
pub fn coordinate_derivative<F>(
    graph: &mut Graph,
    coords: &Array,
    direction: usize,
    closure: F,
) -> Result<Vec<Var>>
where
    F: FnOnce(&mut Graph, Var) -> Result<Vec<Var>>,
{
    if graph.directions() == 0 {
        return Err(Error::InvalidArgument(
            "coordinate derivatives need a graph with at least one tangent direction".into(),
        ));
    }
    let shape = coords.shape();
    if shape.len() != 2 || direction >= shape[1] {
        return Err(Error::InvalidArgument(format!(
            "direction {direction} invalid for coordinates of shape {shape:?}"
        )));
    }
    let cols = shape[1];
    let seed = Array::new(
        shape,
        (0..coords.len())
            .map(|i| if i % cols == direction { 1.0 } else { 0.0 })
            .collect(),
    )?;
    let y = graph.input(coords.clone(), vec![Some(seed)])?;
    let outputs = closure(graph, y)?;
    Ok(outputs.into_iter().map(|o| graph.tangent(o, 0)).collect())
}
