use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Var;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Initial value of a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Const(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { std: f64 },
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual conv/linear default.
    FanIn(usize),
}

/// A trainable tensor. Each value update swaps in a fresh leaf node, so a
/// [`crate::Gradients`] map must be read before the optimizer step that
/// consumes it.
#[derive(Clone)]
pub struct Param {
    leaf: Rc<RefCell<Var>>,
}

impl Param {
    fn new(value: Tensor) -> Self {
        Self {
            leaf: Rc::new(RefCell::new(Var::leaf(value))),
        }
    }

    /// The current leaf, for use in a forward pass.
    pub fn var(&self) -> Var {
        self.leaf.borrow().clone()
    }

    pub fn value(&self) -> Tensor {
        self.leaf.borrow().value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.leaf.borrow().shape().to_vec()
    }

    pub fn set(&self, value: Tensor) {
        assert_eq!(value.shape(), self.leaf.borrow().shape(), "param shape is fixed");
        *self.leaf.borrow_mut() = Var::leaf(value);
    }
}

/// Named parameters in deterministic (lexicographic) order plus the seeded
/// generator that initialises them.
pub struct ParamStore {
    params: RefCell<BTreeMap<String, Param>>,
    rng: RefCell<ChaCha8Rng>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: RefCell::new(BTreeMap::new()),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn root(&self) -> ParamPath<'_> {
        ParamPath {
            store: self,
            prefix: String::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<Param> {
        self.params.borrow().get(name).cloned()
    }

    pub fn len(&self) -> usize {
        self.params.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.borrow().is_empty()
    }

    /// Snapshot of `(name, param)` pairs in name order.
    pub fn entries(&self) -> Vec<(String, Param)> {
        self.params
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.params
            .borrow()
            .values()
            .map(|p| p.shape().iter().product::<usize>())
            .sum()
    }

    pub fn values(&self) -> BTreeMap<String, Tensor> {
        self.params
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.value()))
            .collect()
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&self) {
        for p in self.params.borrow().values() {
            p.set(Tensor::zeros(&p.shape()));
        }
    }

    /// Overwrites parameters by name. Every stored parameter must be present
    /// in `values` with the same shape; extra entries are rejected as well.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        let params = self.params.borrow();
        let mut problems = Vec::new();
        for (name, p) in params.iter() {
            match values.get(name) {
                None => problems.push(format!("missing `{name}`")),
                Some(t) if t.shape() != p.shape().as_slice() => problems.push(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    p.shape()
                )),
                Some(_) => {}
            }
        }
        for name in values.keys() {
            if !params.contains_key(name) {
                problems.push(format!("unexpected `{name}`"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Msg(format!(
                "parameter load failed: {}",
                problems.join("; ")
            )));
        }
        for (name, p) in params.iter() {
            p.set(values[name].clone());
        }
        Ok(())
    }

    fn create(&self, name: String, shape: &[usize], init: Init) -> Param {
        let value = {
            let mut rng = self.rng.borrow_mut();
            match init {
                Init::Zeros => Tensor::zeros(shape),
                Init::Const(v) => Tensor::full(shape, v),
                Init::Uniform { lo, hi } => Tensor::uniform(shape, lo, hi, &mut *rng),
                Init::Normal { std } => Tensor::randn(shape, std, &mut *rng),
                Init::FanIn(fan_in) => {
                    let b = 1.0 / (fan_in.max(1) as f64).sqrt();
                    Tensor::uniform(shape, -b, b, &mut *rng)
                }
            }
        };
        let param = Param::new(value);
        let prev = self.params.borrow_mut().insert(name.clone(), param.clone());
        assert!(prev.is_none(), "parameter `{name}` registered twice");
        param
    }
}

/// Hierarchical naming cursor into a [`ParamStore`], joined with dots.
#[derive(Clone)]
pub struct ParamPath<'a> {
    store: &'a ParamStore,
    prefix: String,
}

impl<'a> ParamPath<'a> {
    pub fn pp(&self, segment: impl Display) -> ParamPath<'a> {
        let prefix = if self.prefix.is_empty() {
            segment.to_string()
        } else {
            format!("{}.{segment}", self.prefix)
        };
        ParamPath {
            store: self.store,
            prefix,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param(&self, name: &str, shape: &[usize], init: Init) -> Param {
        self.store.create(self.pp(name).prefix, shape, init)
    }
}
