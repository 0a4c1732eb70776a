//! Reverse-mode automatic differentiation over dense `ndarray` buffers.
//!
//! A [`Tensor`] is an immutable node in a dynamically built graph. Every
//! operation records its parents and a closure mapping the output gradient to
//! parent gradients. [`Tensor::backward`] walks the graph in reverse
//! topological order and returns the gradients of all leaves that require
//! them.
//!
//! Nodes that do not depend on any gradient-requiring leaf are stored without
//! parents or closures, so constant subgraphs cost nothing at backward time.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

/// Element type of tensors: implemented for `f32` (training) and `f64`
/// (gradient checks).
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + fmt::Debug
    + fmt::Display
    + Default
    + std::iter::Sum
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("float conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("float conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(0) };
}

fn next_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&ArrayD<T>) -> Vec<Option<ArrayD<T>>>>;

struct Node<T: Scalar> {
    id: usize,
    value: ArrayD<T>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// A node of the autodiff graph. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Tensor<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// A value that never receives a gradient.
    pub fn constant(value: ArrayD<T>) -> Self {
        Self::new_leaf(value, false)
    }

    /// A leaf whose gradient is reported by [`Tensor::backward`].
    pub fn leaf(value: ArrayD<T>) -> Self {
        Self::new_leaf(value, true)
    }

    fn new_leaf(value: ArrayD<T>, requires_grad: bool) -> Self {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        Tensor(Rc::new(Node {
            id: next_id(),
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        }))
    }

    pub fn scalar(v: T) -> Self {
        Self::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(ArrayD::zeros(IxDyn(shape)))
    }

    /// Builds an operation node. `backward` receives the output gradient and
    /// must return one entry per parent; entries for parents that do not
    /// require a gradient may be `None`.
    pub(crate) fn from_op(
        value: ArrayD<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&ArrayD<T>) -> Vec<Option<ArrayD<T>>> + 'static,
    ) -> Self {
        debug_assert!(value.is_standard_layout());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Self::constant(value);
        }
        Tensor(Rc::new(Node {
            id: next_id(),
            value,
            parents,
            backward: Some(Box::new(backward)),
            requires_grad: true,
        }))
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &ArrayD<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn ndim(&self) -> usize {
        self.0.value.ndim()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The same value cut off from the graph.
    pub fn detach(&self) -> Self {
        if !self.requires_grad() {
            return self.clone();
        }
        Self::constant(self.0.value.clone())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.0.value.len(), 1, "item() on tensor of shape {:?}", self.shape());
        *self.0.value.iter().next().expect("non-empty")
    }

    /// Flat, row-major view of the value.
    pub fn as_slice(&self) -> &[T] {
        self.0.value.as_slice().expect("tensors are kept in standard layout")
    }

    /// Runs reverse-mode differentiation from this tensor.
    ///
    /// The seed gradient is all ones, so for a scalar loss the result holds
    /// d(loss)/d(leaf) for every leaf reachable through gradient-requiring
    /// nodes.
    pub fn backward(&self) -> Gradients<T> {
        let mut grads: HashMap<usize, ArrayD<T>> = HashMap::new();
        if !self.requires_grad() {
            return Gradients { grads };
        }
        let order = self.topological_order();
        grads.insert(self.id(), ArrayD::from_elem(self.0.value.raw_dim(), T::one()));
        for node in order.iter().rev() {
            let Some(backward) = node.0.backward.as_ref() else {
                continue;
            };
            let Some(grad_out) = grads.remove(&node.id()) else {
                continue;
            };
            let parent_grads = backward(&grad_out);
            debug_assert_eq!(parent_grads.len(), node.0.parents.len());
            for (parent, grad) in node.0.parents.iter().zip(parent_grads) {
                let Some(grad) = grad else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(grad.shape(), parent.shape(), "gradient shape mismatch");
                match grads.get_mut(&parent.id()) {
                    Some(acc) => *acc += &grad,
                    None => {
                        grads.insert(parent.id(), grad);
                    }
                }
            }
        }
        Gradients { grads }
    }

    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // Iterative post-order DFS; graphs can be a few thousand nodes deep.
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for parent in &node.0.parents {
                if parent.requires_grad() && !visited.contains(&parent.id()) {
                    stack.push((parent.clone(), false));
                }
            }
        }
        order
    }
}

/// Gradients produced by [`Tensor::backward`], keyed by leaf identity.
#[derive(Debug, Default)]
pub struct Gradients<T: Scalar> {
    grads: HashMap<usize, ArrayD<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, tensor: &Tensor<T>) -> Option<&ArrayD<T>> {
        self.grads.get(&tensor.id())
    }

    pub fn take(&mut self, tensor: &Tensor<T>) -> Option<ArrayD<T>> {
        self.grads.remove(&tensor.id())
    }
}
