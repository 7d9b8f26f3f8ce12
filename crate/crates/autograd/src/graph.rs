use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::tensor::Tensor;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any backward information.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Maps the incoming output gradient to one optional gradient per parent.
/// Arguments are (output gradient, parents, output value).
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[Var], &Tensor) -> Vec<Option<Tensor>>>;

struct Op {
    name: &'static str,
    parents: Vec<Var>,
    backward: BackwardFn,
}

struct Node {
    id: usize,
    value: Tensor,
    requires_grad: bool,
    op: Option<Op>,
}

impl Drop for Node {
    // Long unrolled graphs would otherwise drop recursively, one stack frame
    // per op.
    fn drop(&mut self) {
        let mut stack: Vec<Var> = match self.op.take() {
            Some(op) => op.parents,
            None => return,
        };
        while let Some(var) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(var.0) {
                if let Some(op) = node.op.take() {
                    stack.extend(op.parents);
                }
            }
        }
    }
}

/// A tensor-valued node in the autodiff graph. Cloning is cheap.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("op", &self.0.op.as_ref().map(|o| o.name))
            .finish()
    }
}

impl Var {
    fn make(value: Tensor, requires_grad: bool, op: Option<Op>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            op,
        }))
    }

    /// A leaf that never receives gradient.
    pub fn constant(value: Tensor) -> Self {
        Self::make(value, false, None)
    }

    /// A leaf whose gradient is reported by [`Var::backward`].
    pub fn leaf(value: Tensor) -> Self {
        Self::make(value, true, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(Tensor::scalar(value))
    }

    /// Records an operation. When gradients are disabled or no parent needs
    /// one, the result is a plain constant and `backward` is dropped.
    pub fn from_op(
        value: Tensor,
        parents: Vec<Var>,
        name: &'static str,
        backward: impl Fn(&Tensor, &[Var], &Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Self {
        if !is_grad_enabled() || !parents.iter().any(Var::requires_grad) {
            return Self::constant(value);
        }
        Self::make(
            value,
            true,
            Some(Op {
                name,
                parents,
                backward: Box::new(backward),
            }),
        )
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.0.value.numel()
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|o| o.name)
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    /// Reverse-mode sweep seeded with ones of this var's shape.
    pub fn backward(&self) -> Gradients {
        let mut grads = Gradients::default();
        if !self.requires_grad() {
            return grads;
        }
        let order = self.topo_order();
        grads
            .map
            .insert(self.id(), Tensor::ones(self.shape()));
        for var in order.iter().rev() {
            let node = &var.0;
            let Some(op) = &node.op else { continue };
            let Some(g) = grads.map.remove(&node.id) else {
                continue;
            };
            let parent_grads = (op.backward)(&g, &op.parents, &node.value);
            debug_assert_eq!(parent_grads.len(), op.parents.len(), "{}", op.name);
            for (parent, pg) in op.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.shape(), parent.shape(), "grad shape from {}", op.name);
                match grads.map.get_mut(&parent.id()) {
                    Some(acc) => acc.add_assign(&pg),
                    None => {
                        grads.map.insert(parent.id(), pg);
                    }
                }
            }
        }
        grads
    }

    /// Post-order over the grad-requiring subgraph, parents before children.
    fn topo_order(&self) -> Vec<Var> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Var, bool)> = vec![(self.clone(), false)];
        while let Some((var, expanded)) = stack.pop() {
            if expanded {
                order.push(var);
                continue;
            }
            if !visited.insert(var.id()) {
                continue;
            }
            stack.push((var.clone(), true));
            if let Some(op) = &var.0.op {
                for p in op.parents.iter().rev() {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

/// Gradients from one backward sweep, keyed by leaf node.
#[derive(Default)]
pub struct Gradients {
    map: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.map.get(&var.id())
    }

    pub fn get_mut(&mut self, var: &Var) -> Option<&mut Tensor> {
        self.map.get_mut(&var.id())
    }

    pub fn insert(&mut self, var: &Var, grad: Tensor) {
        self.map.insert(var.id(), grad);
    }

    pub fn remove(&mut self, var: &Var) -> Option<Tensor> {
        self.map.remove(&var.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diamond_accumulates() {
        let x = Var::leaf(Tensor::scalar(3.0));
        let a = x.mul(&x);
        let b = x.scale(2.0);
        let y = a.add(&b);
        let g = y.backward();
        assert_eq!(g.get(&x).unwrap().item(), 8.0);
    }

    #[test]
    fn no_grad_records_nothing() {
        let x = Var::leaf(Tensor::scalar(3.0));
        let y = no_grad(|| x.mul(&x));
        assert!(!y.requires_grad());
        assert!(is_grad_enabled());
    }

    #[test]
    fn deep_chain_drops_without_overflow() {
        let x = Var::leaf(Tensor::scalar(1.0));
        let mut y = x.clone();
        for _ in 0..200_000 {
            y = y.add_scalar(0.0);
        }
        drop(y);
    }
}
