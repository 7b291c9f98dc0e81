//! Reverse-mode gradient tape.
//!
//! Values are pushed in execution order; `backward` walks the nodes in exact
//! reverse order and accumulates adjoints into each node's inputs. Layers
//! register themselves as single nodes through [`Backward`], so the tape
//! stays coarse-grained (one node per layer, not per scalar).

use std::fmt;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Local derivative of one recorded operation.
pub trait Backward: Send {
    fn name(&self) -> &'static str;

    /// Given the adjoint of this node's output, return one adjoint per input,
    /// in input order, each shaped like its input.
    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], output: &Tensor) -> Result<Vec<Tensor>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    op: Option<Box<dyn Backward>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(
                self.nodes
                    .iter()
                    .map(|n| n.op.as_ref().map_or("leaf", |op| op.name())),
            )
            .finish()
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

    /// Names of the recorded operations in execution order (`"leaf"` for inputs).
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .map(|n| n.op.as_ref().map_or("leaf", |op| op.name()))
            .collect()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Record an operation whose forward value has already been computed.
    pub fn push(&mut self, value: Tensor, inputs: &[Var], op: Box<dyn Backward>) -> Var {
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(Node {
            value,
            inputs: inputs.to_vec(),
            op: Some(op),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, &[a, b], Box::new(AddOp)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, &[a, b], Box::new(SubOp)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, &[a, b], Box::new(MulOp)))
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let v = self.value(m).matvec(self.value(x))?;
        Ok(self.push(v, &[m, x], Box::new(MatVecOp)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, &[a], Box::new(SumOp))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0].value;
        if !root.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::full(root.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = &node.op else { continue };
            let Some(grad_out) = adj[idx].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let grads = op.backward(&grad_out, &inputs, &node.value)?;
            if grads.len() != node.inputs.len() {
                return Err(Error::contract(format!(
                    "{} returned {} gradients for {} inputs",
                    op.name(),
                    grads.len(),
                    node.inputs.len()
                )));
            }
            for (input, g) in node.inputs.iter().zip(grads) {
                match &mut adj[input.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
            adj[idx] = Some(grad_out);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { adj, shapes })
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adj: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; zeros if the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        self.adj[var.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        self.adj[var.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

struct AddOp;
struct SubOp;
struct MulOp;
struct MatVecOp;
struct SumOp;

impl Backward for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![g.clone(), g.clone()])
    }
}

impl Backward for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![g.clone(), g.scale(-1.0)])
    }
}

impl Backward for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, g: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![g.mul(inputs[1])?, g.mul(inputs[0])?])
    }
}

impl Backward for MatVecOp {
    fn name(&self) -> &'static str {
        "matvec"
    }
    fn backward(&self, g: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let (m, x) = (inputs[0], inputs[1]);
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        let mut gm = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                gm[i * cols + j] = g.data()[i] * x.data()[j];
            }
        }
        let gx = m.transpose()?.matvec(g)?;
        Ok(vec![Tensor::matrix(rows, cols, gm)?, gx])
    }
}

impl Backward for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(&self, g: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![Tensor::full(inputs[0].shape(), g.data()[0])])
    }
}
