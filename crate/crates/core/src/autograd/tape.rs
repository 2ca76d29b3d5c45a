use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inputs handed to a backward rule: the forward input values, the forward
/// output, and which inputs actually need a gradient.
pub(crate) struct BackwardCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub needs: Vec<bool>,
}

pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>, &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    op: &'static str,
    value: Rc<Tensor>,
    requires_grad: bool,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// Records operations applied to [`Var`]s and replays them in reverse to
/// compute gradients. A tape is confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        write!(f, "Var#{}({}, {:?})", self.id, node.op, node.value.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A leaf that gradients flow into.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push("leaf", value, true, Vec::new(), None)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push("constant", value, false, Vec::new(), None)
    }

    pub fn var(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        if requires_grad {
            self.leaf(value)
        } else {
            self.constant(value)
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(
        &self,
        op: &'static str,
        value: Tensor,
        requires_grad: bool,
        inputs: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Rc::new(value),
            requires_grad,
            inputs,
            backward,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records the application of `op`. The backward rule is dropped when no
    /// input requires a gradient.
    pub(crate) fn record<'t>(
        &'t self,
        op: &'static str,
        inputs: &[Var<'t>],
        value: Tensor,
        backward: BackwardFn,
    ) -> Var<'t> {
        for v in inputs {
            assert!(
                std::ptr::eq(v.tape, self),
                "op `{op}` mixes variables from different tapes"
            );
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        let ids = inputs.iter().map(|v| v.id).collect();
        if requires_grad {
            self.push(op, value, true, ids, Some(backward))
        } else {
            self.push(op, value, false, ids, None)
        }
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!(
                    "loss must be a scalar, got shape {:?}",
                    root.value.shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect(),
                output: node.value.as_ref(),
                needs: node.inputs.iter().map(|&i| nodes[i].requires_grad).collect(),
            };
            let input_grads = backward(&ctx, &grad_out);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (&input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !nodes[input].requires_grad {
                    continue;
                }
                debug_assert_eq!(
                    g.shape(),
                    nodes[input].value.shape(),
                    "gradient shape from op {}",
                    node.op
                );
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf. `None` when the leaf does
    /// not require gradients or is unreachable from the loss.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}
