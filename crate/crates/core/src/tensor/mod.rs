//! Reverse-mode automatic differentiation over dense 4-D tensors.
//!
//! A [`Tensor`] is a shared handle to a node of a dynamically recorded
//! computation graph. Leaves created with [`Tensor::parameter`] keep their
//! gradient across graph rebuilds; every op returns a fresh node that remembers
//! its parents and a backward closure. [`backward`] walks the graph
//! from a scalar loss and accumulates gradients into the reachable leaves.
//!
//! Gradients accumulate additively; callers zero them with
//! [`Tensor::zero_grad`] between optimizer steps.

mod adam;
mod conv;
mod dump;
mod ops;
mod shuffle;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d, conv_output_dims};
pub use ops::{add, gelu, mse_loss, sigmoid, sum};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use thiserror::Error;

use crate::Scalar;

/// `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),
    #[error("parameter {index} has no gradient")]
    MissingGrad { index: usize },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

type BackwardFn<F> = Box<dyn Fn(&[F], &[Tensor<F>]) -> Vec<Option<Vec<F>>> + Send + Sync>;

struct Op<F: Scalar> {
    name: &'static str,
    parents: Vec<Tensor<F>>,
    backward: BackwardFn<F>,
}

struct Node<F: Scalar> {
    id: u64,
    shape: Shape,
    data: RwLock<Vec<F>>,
    grad: Mutex<Option<Vec<F>>>,
    requires_grad: bool,
    op: Option<Op<F>>,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Dense `(N, C, H, W)` array with an optional gradient.
pub struct Tensor<F: Scalar> {
    node: Arc<Node<F>>,
}

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Self {
            node: Arc::clone(&self.node),
        }
    }
}

impl<F: Scalar> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &self.node.op.as_ref().map(|o| o.name))
            .finish()
    }
}

impl<F: Scalar> Tensor<F> {
    fn from_parts(shape: Shape, data: Vec<F>, requires_grad: bool, op: Option<Op<F>>) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        Self {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                op,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: Shape, data: Vec<F>) -> Result<Self> {
        if data.len() != numel(&shape) {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {shape:?} needs {} values, got {}", numel(&shape), data.len()),
            });
        }
        Ok(Self::from_parts(shape, data, false, None))
    }

    /// Trainable leaf: gradients accumulate into it on [`backward`].
    pub fn parameter(shape: Shape, data: Vec<F>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(t.into_parameter())
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::from_parts(shape, vec![F::zero(); numel(&shape)], false, None)
    }

    pub fn full(shape: Shape, value: F) -> Self {
        Self::from_parts(shape, vec![value; numel(&shape)], false, None)
    }

    pub fn scalar(value: F) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    /// Copy of this tensor's values as a new leaf with `requires_grad = true`.
    pub fn into_parameter(self) -> Self {
        let data = self.to_vec();
        Self::from_parts(self.shape(), data, true, None)
    }

    /// Copy of the values with no graph history.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.shape(), self.to_vec(), false, None)
    }

    /// Records an op result. History is kept only when some parent needs grad.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Shape,
        data: Vec<F>,
        parents: Vec<Tensor<F>>,
        backward: BackwardFn<F>,
    ) -> Self {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let op = requires_grad.then(|| Op {
            name,
            parents,
            backward,
        });
        Self::from_parts(shape, data, requires_grad, op)
    }

    pub fn shape(&self) -> Shape {
        self.node.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.node.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.op.is_none()
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<F>> {
        self.node.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        self.data()[0]
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    /// Gradient, or zeros when this leaf took no part in any backward pass.
    pub fn grad_or_zeros(&self) -> Vec<F> {
        self.grad().unwrap_or_else(|| vec![F::zero(); self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    /// In-place update of a leaf's values (optimizer steps, test perturbations).
    pub fn update_data(&self, f: impl FnOnce(&mut [F])) {
        debug_assert!(self.is_leaf(), "only leaves are mutable");
        let mut guard = self.node.data.write().expect("tensor data lock poisoned");
        f(&mut guard);
    }

    /// Same values in another precision, as a constant.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        let data = self.data().iter().map(|v| G::lit(v.as_f64())).collect();
        Tensor::from_parts(self.shape(), data, false, None)
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        if numel(&shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", self.shape()),
            });
        }
        Ok(Self::from_op(
            "reshape",
            shape,
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    fn accumulate_grad(&self, g: &[F]) {
        let mut guard = self.node.grad.lock().expect("grad lock poisoned");
        match guard.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *guard = Some(g.to_vec()),
        }
    }
}

/// Back-propagates from a scalar `loss` into every reachable leaf that
/// requires grad.
pub fn backward<F: Scalar>(loss: &Tensor<F>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss(loss.shape()));
    }
    if !loss.requires_grad() {
        return Ok(());
    }

    // Iterative post-order DFS; reversed it is a valid topological order.
    let mut order: Vec<Tensor<F>> = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor<F>, bool)> = vec![(loss.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.node.id) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(op) = &t.node.op {
            for p in op.parents.iter().filter(|p| p.requires_grad()) {
                if !visited.contains(&p.node.id) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }

    let mut grads: HashMap<u64, Vec<F>> = HashMap::new();
    grads.insert(loss.node.id, vec![F::one()]);
    for t in order.iter().rev() {
        let Some(g) = grads.remove(&t.node.id) else {
            continue;
        };
        match &t.node.op {
            None => t.accumulate_grad(&g),
            Some(op) => {
                let parent_grads = (op.backward)(&g, &op.parents);
                debug_assert_eq!(parent_grads.len(), op.parents.len(), "{}", op.name);
                for (p, pg) in op.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !p.requires_grad() {
                        continue;
                    }
                    match grads.get_mut(&p.node.id) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                        None => {
                            grads.insert(p.node.id, pg);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones_and_accumulates() {
        let x = Tensor::<f64>::parameter([1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        backward(&sum(&x)).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 8]);
        backward(&sum(&x)).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 8]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::<f32>::parameter([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(backward(&x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::<f32>::new([1, 2, 3, 4], vec![0.0; 23]).is_err());
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        // loss = sum(x + x) -> grad 2
        let x = Tensor::<f64>::parameter([1, 1, 1, 3], vec![1.0, -1.0, 0.5]).unwrap();
        let y = add(&x, &x).unwrap();
        backward(&sum(&y)).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn constants_do_not_record_history() {
        let a = Tensor::<f32>::full([1, 1, 2, 2], 1.0);
        let b = add(&a, &a).unwrap();
        assert!(b.is_leaf());
        assert!(!b.requires_grad());
    }
}
