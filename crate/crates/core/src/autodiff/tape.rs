use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::param::ParamId;
use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Receives the output gradient and which parents want a gradient back.
pub(crate) type BackwardFn<T> = Box<dyn FnOnce(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    tracked: bool,
    param: Option<ParamId>,
}

/// Single-owner record of a forward computation. Node ids are assigned in
/// creation order, which is a topological order of the graph.
#[derive(Default)]
pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a tape.
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real> Copy for Var<'_, T> {}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn tracked(&self) -> bool {
        self.tape.nodes.borrow()[self.id].tracked
    }
}

/// Gradients produced by [`Tape::backward`], keyed by leaf variable and by
/// parameter id.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    leaves: HashMap<usize, Tensor<T>>,
    params: HashMap<ParamId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(&v.id)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn leaf_node(&self, value: Tensor<T>, tracked: bool, param: Option<ParamId>) -> Result<Var<'_, T>> {
        self.check_open()?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "input" });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            tracked,
            param,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Untracked input: no gradient flows to it.
    pub fn constant(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        self.leaf_node(value, false, None)
    }

    /// Tracked input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        self.leaf_node(value, true, None)
    }

    /// Tracked parameter whose gradient is reported by [`Gradients::param`].
    pub fn param(&self, id: ParamId, value: &Tensor<T>) -> Result<Var<'_, T>> {
        self.leaf_node(value.clone(), true, Some(id))
    }

    fn check_open(&self) -> Result<()> {
        if self.consumed.get() {
            Err(Error::Tape(
                "tape already consumed by backward; record a new forward pass".into(),
            ))
        } else {
            Ok(())
        }
    }

    pub(crate) fn check_same(&self, vars: &[Var<'_, T>]) -> Result<()> {
        if vars.iter().all(|v| std::ptr::eq(v.tape, self)) {
            Ok(())
        } else {
            Err(Error::Tape("variables from different tapes".into()))
        }
    }

    /// Records an op result. The backward closure is dropped when no parent
    /// is tracked.
    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Tensor<T>,
        parents: &[Var<'_, T>],
        backward: impl FnOnce(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Result<Var<'_, T>> {
        self.check_open()?;
        self.check_same(parents)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        let mut nodes = self.nodes.borrow_mut();
        let tracked = parents.iter().any(|p| nodes[p.id].tracked);
        nodes.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if tracked { Some(Box::new(backward)) } else { None },
            tracked,
            param: None,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Reverse-mode sweep from a scalar loss. Consumes the tape: recorded
    /// values are freed and a second call is an error.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        self.check_open()?;
        self.check_same(&[loss])?;
        let mut nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        self.consumed.set(true);
        let seed_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: seed_shape,
                rhs: Vec::new(),
            });
        }
        let mut out = Gradients::default();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(&seed_shape, T::one()));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].tracked {
                continue;
            }
            if !g.all_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            let bw = nodes[id].backward.take();
            let parents = std::mem::take(&mut nodes[id].parents);
            if let Some(bw) = bw {
                let needs: Vec<bool> = parents.iter().map(|&p| nodes[p].tracked).collect();
                let pg = bw(&g, &needs);
                debug_assert_eq!(pg.len(), parents.len());
                for ((&p, pg), need) in parents.iter().zip(pg).zip(needs) {
                    if let (Some(pg), true) = (pg, need) {
                        match &mut grads[p] {
                            Some(acc) => acc.add_assign(&pg),
                            slot => *slot = Some(pg),
                        }
                    }
                }
            } else if parents.is_empty() {
                if let Some(pid) = nodes[id].param {
                    match out.params.get_mut(&pid) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            out.params.insert(pid, g.clone());
                        }
                    }
                }
                out.leaves.insert(id, g);
            }
        }
        Ok(out)
    }
}
