//! Reverse-mode differentiable tensors.
//!
//! Forward ops record a graph of reference-counted nodes; [`Tensor::backward`]
//! replays it in reverse creation order and accumulates gradients into every
//! reachable node that requires them. The engine is generic over [`Real`] so
//! the network runs in `f32` while gradient checks can be tightened in `f64`.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub mod gradcheck;
pub mod kernels;
mod ops;

pub use ops::{concat_cols, rel_table_index, relative_bias as ops_relative_bias};

/// Scalar field of the engine: `f32` for the network, `f64` for tightened
/// gradient checks.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + fmt::Debug + fmt::Display + 'static
{
    /// Converts an `f64` constant into the field.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

thread_local! {
    static NEXT_NODE_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_node_id() -> u64 {
    NEXT_NODE_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) struct Node<F: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<F>>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: bool,
    parents: Vec<Tensor<F>>,
    op: Option<ops::Op<F>>,
    op_name: &'static str,
}

/// Dense N-dimensional value with optional gradient accumulation.
#[derive(Clone)]
pub struct Tensor<F: Real = f32> {
    node: Rc<Node<F>>,
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("op", &self.node.op_name)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl<F: Real> Tensor<F> {
    fn from_node(node: Node<F>) -> Self {
        Tensor { node: Rc::new(node) }
    }

    /// Leaf tensor without gradient tracking.
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Self {
        Self::leaf(shape, data, false)
    }

    /// Leaf tensor, optionally tracked.
    pub fn leaf(shape: Vec<usize>, data: Vec<F>, requires_grad: bool) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch"
        );
        Self::from_node(Node {
            id: next_node_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents: Vec::new(),
            op: None,
            op_name: "leaf",
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::from_vec(shape, vec![F::zero(); n])
    }

    pub fn scalar(v: F) -> Self {
        Self::from_vec(vec![1], vec![v])
    }

    fn from_op(
        shape: Vec<usize>,
        data: Vec<F>,
        parents: Vec<Tensor<F>>,
        op: ops::Op<F>,
        op_name: &'static str,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        #[cfg(debug_assertions)]
        {
            let inputs_finite = parents
                .iter()
                .all(|p| p.node.data.borrow().iter().all(|v| v.is_finite()));
            if inputs_finite && !data.iter().all(|v| v.is_finite()) {
                panic!("op `{op_name}` produced non-finite output from finite inputs");
            }
        }
        Self::from_node(Node {
            id: next_node_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            op: Some(op),
            op_name,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.node.shape.len(), 2, "rows() on non-2D tensor");
        self.node.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.node.shape.len(), 2, "cols() on non-2D tensor");
        self.node.shape[1]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<F>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.node.data.borrow()[0]
    }

    /// Replaces the data of a leaf tensor in place (bitwise assignment).
    pub fn set_data(&self, data: Vec<F>) {
        assert_eq!(data.len(), self.numel(), "set_data length mismatch");
        *self.node.data.borrow_mut() = data;
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[F]) {
        if !self.node.requires_grad {
            return;
        }
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta.iter()) {
                    *gi = *gi + *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss. Every reachable tensor with
    /// `requires_grad` receives its accumulated gradient; everything else is
    /// left untouched.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.node.requires_grad {
            return Ok(());
        }
        let order = self.topo_order();
        self.accumulate_grad(&[F::one()]);
        for tensor in order.iter().rev() {
            let node = &tensor.node;
            let Some(op) = &node.op else { continue };
            let grad_out = match node.grad.borrow().clone() {
                Some(g) => g,
                None => continue,
            };
            ops::backward_op(op, node, &grad_out);
        }
        Ok(())
    }

    /// Parents-before-children ordering of the subgraph below `self`.
    fn topo_order(&self) -> Vec<Tensor<F>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // Iterative post-order DFS; recursion would overflow on deep graphs.
        enum Frame<F: Real> {
            Enter(Tensor<F>),
            Exit(Tensor<F>),
        }
        let mut stack = vec![Frame::Enter(self.clone())];
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Enter(t) => {
                    let key = Rc::as_ptr(&t.node) as usize;
                    if !visited.insert(key) {
                        continue;
                    }
                    stack.push(Frame::Exit(t.clone()));
                    for p in &t.node.parents {
                        if p.node.requires_grad {
                            stack.push(Frame::Enter(p.clone()));
                        }
                    }
                }
                Frame::Exit(t) => order.push(t),
            }
        }
        order
    }

    pub fn op_name(&self) -> &'static str {
        self.node.op_name
    }

    /// Walks the graph below `self` and returns the name of the earliest
    /// created op whose output is non-finite while all of its inputs are
    /// finite. Used to diagnose NaN losses.
    pub fn first_non_finite_op(&self) -> Option<String> {
        let mut all = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            let key = Rc::as_ptr(&t.node) as usize;
            if !visited.insert(key) {
                continue;
            }
            for p in &t.node.parents {
                stack.push(p.clone());
            }
            all.push(t);
        }
        all.sort_by_key(|t| t.node.id);
        for t in &all {
            let out_bad = t.node.data.borrow().iter().any(|v| !v.is_finite());
            if !out_bad {
                continue;
            }
            let parents_ok = t
                .node
                .parents
                .iter()
                .all(|p| p.node.data.borrow().iter().all(|v| v.is_finite()));
            if parents_ok {
                return Some(if t.node.op.is_some() {
                    t.node.op_name.to_string()
                } else {
                    "leaf".to_string()
                });
            }
        }
        None
    }
}

/// A named, learnable tensor with a freeze flag. Frozen parameters are
/// excluded from optimizer updates and must stay bitwise unchanged.
pub struct Parameter<F: Real = f32> {
    name: String,
    value: Tensor<F>,
    frozen: Cell<bool>,
}

impl<F: Real> Parameter<F> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<F>) -> Self {
        Parameter {
            name: name.into(),
            value: Tensor::leaf(shape, data, true),
            frozen: Cell::new(false),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor<F> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn frozen(&self) -> bool {
        self.frozen.get()
    }

    pub fn set_frozen(&self, frozen: bool) {
        self.frozen.set(frozen);
    }

    pub fn data_vec(&self) -> Vec<F> {
        self.value.to_vec()
    }

    pub fn set_data(&self, data: Vec<F>) {
        self.value.set_data(data);
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.value.grad()
    }

    pub fn zero_grad(&self) {
        self.value.zero_grad();
    }
}

impl<F: Real> fmt::Debug for Parameter<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parameter")
            .field("name", &self.name)
            .field("shape", &self.value.shape())
            .field("frozen", &self.frozen.get())
            .finish()
    }
}
