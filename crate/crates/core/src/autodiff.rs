//! Reverse-mode differentiation over a recorded tape of layer primitives.
//!
//! A [`Tape`] records every forward operation together with what its
//! backward pass needs. [`Tape::backward`] walks the record in reverse and
//! returns a [`Gradients`] table; parameter gradients are folded into a
//! [`ParamStore`] with [`ParamStore::accumulate`], which adds onto whatever
//! is already in each tensor's grad slot.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::ops::conv::{self, ConvGeometry, Padding};
use crate::ops::dense::{self, AffineGeometry};
use crate::ops::pool::{self, PoolGeometry, PoolParams};
use crate::tensor::{dims2, Element, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Named trainable tensors. Insertion order is the canonical parameter order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T = f32> {
    params: Vec<Param<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            tensor,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Adds every parameter gradient in `grads` onto the matching grad slot.
    pub fn accumulate(&mut self, grads: &Gradients<T>) -> Result<()> {
        for &(id, var) in &grads.params {
            if let Some(g) = grads.get(var) {
                self.params[id.0].tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }
}

enum Op<T> {
    Constant,
    Input,
    Param(ParamId),
    Conv2d { input: Var, kernels: Var, bias: Var, geom: ConvGeometry },
    MaxPool { input: Var, geom: PoolGeometry, argmax: Vec<usize> },
    Relu { input: Var },
    Affine { input: Var, weight: Var, bias: Var, geom: AffineGeometry },
    SoftmaxXent { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Reshape { input: Var },
    Add { lhs: Var, rhs: Var },
    Mul { lhs: Var, rhs: Var },
    Sum { input: Var },
}

struct Node<'a, T: Clone> {
    shape: Vec<usize>,
    value: Cow<'a, [T]>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of a forward computation. Leaf values are borrowed, not copied.
pub struct Tape<'a, T: Element = f32> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Element> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Element> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [T]>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'a, T> {
        &self.nodes[v.0]
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).needs_grad)
    }

    /// A value that takes part in the computation but receives no gradient.
    pub fn constant(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), Cow::Borrowed(t.data()), Op::Constant, false)
    }

    pub fn constant_owned(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, Cow::Owned(t.into_data()), Op::Constant, false)
    }

    /// A differentiable leaf; its gradient is available from [`Gradients::get`].
    pub fn input(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), Cow::Borrowed(t.data()), Op::Input, true)
    }

    /// A leaf bound to a stored parameter.
    pub fn param(&mut self, store: &'a ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(t.shape().to_vec(), Cow::Borrowed(t.data()), Op::Param(id), true)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("tape shapes are consistent")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, pad: Padding) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(kernels), pad)?;
        if self.shape(bias) != [geom.out_maps] {
            return Err(Error::dim("conv bias", geom.out_maps, self.value(bias).len()));
        }
        let out = conv::forward(&geom, self.value(input), self.value(kernels), self.value(bias));
        let needs = self.grad_flag(&[input, kernels, bias]);
        Ok(self.push(
            geom.output_shape().to_vec(),
            Cow::Owned(out),
            Op::Conv2d { input, kernels, bias, geom },
            needs,
        ))
    }

    pub fn maxpool2d(&mut self, input: Var, pool: PoolParams) -> Result<Var> {
        let geom = PoolGeometry::new(self.shape(input), pool)?;
        let (out, argmax) = pool::forward(&geom, self.value(input));
        let needs = self.grad_flag(&[input]);
        Ok(self.push(
            geom.output_shape().to_vec(),
            Cow::Owned(out),
            Op::MaxPool { input, geom, argmax },
            needs,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = dense::relu_forward(self.value(input));
        let shape = self.shape(input).to_vec();
        let needs = self.grad_flag(&[input]);
        self.push(shape, Cow::Owned(out), Op::Relu { input }, needs)
    }

    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let geom = AffineGeometry::new(self.shape(input), self.shape(weight), self.shape(bias))?;
        let out = dense::affine_forward(&geom, self.value(input), self.value(weight), self.value(bias));
        let needs = self.grad_flag(&[input, weight, bias]);
        Ok(self.push(
            vec![geom.rows, geom.outputs],
            Cow::Owned(out),
            Op::Affine { input, weight, bias, geom },
            needs,
        ))
    }

    /// Mean cross-entropy of the row softmax of `logits` (`N×K`) against
    /// class indices. Returns a scalar loss node.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (_, classes) = dims2(self.shape(logits), "logits")?;
        let (loss, probs) = dense::softmax_xent_forward(self.value(logits), classes, targets)?;
        let needs = self.grad_flag(&[logits]);
        Ok(self.push(
            vec![1],
            Cow::Owned(vec![loss]),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Softmax probabilities computed by a [`Tape::softmax_xent`] node.
    pub fn probs(&self, loss: Var) -> Option<&[T]> {
        match &self.node(loss).op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        let have = self.value(input).len();
        if numel != have {
            return Err(Error::dim("reshape element count", have, numel));
        }
        let value = match &self.node(input).value {
            Cow::Borrowed(s) => Cow::Borrowed(*s),
            Cow::Owned(v) => Cow::Owned(v.clone()),
        };
        let needs = self.grad_flag(&[input]);
        Ok(self.push(shape.to_vec(), value, Op::Reshape { input }, needs))
    }

    /// Collapses everything after the leading axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        let rows = shape[0];
        let cols = shape[1..].iter().product();
        self.reshape(input, &[rows, cols])
    }

    fn same_shape(&self, lhs: Var, rhs: Var) -> Result<()> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::dim("elementwise operand length", self.value(lhs).len(), self.value(rhs).len()));
        }
        Ok(())
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.same_shape(lhs, rhs)?;
        let out = self.value(lhs).iter().zip(self.value(rhs)).map(|(&a, &b)| a + b).collect();
        let shape = self.shape(lhs).to_vec();
        let needs = self.grad_flag(&[lhs, rhs]);
        Ok(self.push(shape, Cow::Owned(out), Op::Add { lhs, rhs }, needs))
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.same_shape(lhs, rhs)?;
        let out = self.value(lhs).iter().zip(self.value(rhs)).map(|(&a, &b)| a * b).collect();
        let shape = self.shape(lhs).to_vec();
        let needs = self.grad_flag(&[lhs, rhs]);
        Ok(self.push(shape, Cow::Owned(out), Op::Mul { lhs, rhs }, needs))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).iter().copied().sum();
        let needs = self.grad_flag(&[input]);
        self.push(vec![1], Cow::Owned(vec![total]), Op::Sum { input }, needs)
    }

    /// Propagates `d root / d node` to every node that can reach `root`.
    ///
    /// `root` must hold exactly one element. Calling this twice and folding
    /// both results into a store doubles the stored gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be a scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::ONE]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant | Op::Input | Op::Param(_) => {}
                Op::Conv2d { input, kernels, bias, geom } => {
                    let want_input = self.node(*input).needs_grad;
                    let g = conv::backward(geom, self.value(*input), self.value(*kernels), &dy, want_input);
                    if let Some(dx) = g.input {
                        add_into(&mut grads[input.0], dx);
                    }
                    add_into(&mut grads[kernels.0], g.kernels);
                    add_into(&mut grads[bias.0], g.bias);
                }
                Op::MaxPool { input, geom, argmax } => {
                    add_into(&mut grads[input.0], pool::backward(geom, argmax, &dy));
                }
                Op::Relu { input } => {
                    add_into(&mut grads[input.0], dense::relu_backward(self.value(*input), &dy));
                }
                Op::Affine { input, weight, bias, geom } => {
                    let want_input = self.node(*input).needs_grad;
                    let g = dense::affine_backward(geom, self.value(*input), self.value(*weight), &dy, want_input);
                    if let Some(dx) = g.input {
                        add_into(&mut grads[input.0], dx);
                    }
                    add_into(&mut grads[weight.0], g.weight);
                    add_into(&mut grads[bias.0], g.bias);
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    let classes = self.shape(*logits)[1];
                    add_into(
                        &mut grads[logits.0],
                        dense::softmax_xent_backward(probs, classes, targets, dy[0]),
                    );
                }
                Op::Reshape { input } => add_into(&mut grads[input.0], dy.clone()),
                Op::Add { lhs, rhs } => {
                    add_into(&mut grads[lhs.0], dy.clone());
                    add_into(&mut grads[rhs.0], dy.clone());
                }
                Op::Mul { lhs, rhs } => {
                    let dl = dy.iter().zip(self.value(*rhs)).map(|(&d, &r)| d * r).collect();
                    let dr = dy.iter().zip(self.value(*lhs)).map(|(&d, &l)| d * l).collect();
                    add_into(&mut grads[lhs.0], dl);
                    add_into(&mut grads[rhs.0], dr);
                }
                Op::Sum { input } => {
                    let n = self.value(*input).len();
                    add_into(&mut grads[input.0], vec![dy[0]; n]);
                }
            }
            // leaves keep their gradient for the caller
            if matches!(node.op, Op::Input | Op::Param(_)) {
                grads[idx] = Some(dy);
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, Var(i))),
                _ => None,
            })
            .collect();
        let leaves = self
            .nodes
            .iter()
            .map(|n| matches!(n.op, Op::Input | Op::Param(_)))
            .collect::<Vec<_>>();
        for (g, is_leaf) in grads.iter_mut().zip(leaves) {
            if !is_leaf {
                *g = None;
            }
        }
        Ok(Gradients { grads, params })
    }
}

fn add_into<T: Element>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
        None => *slot = Some(g),
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T> Gradients<T> {
    /// Gradient of an input or parameter leaf; `None` if the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::<f64>::scalar(3.0);
        let mut tape = Tape::new();
        let v = tape.input(&x);
        let sq = tape.mul(v, v).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.get(v).unwrap(), &[6.0]);
    }

    #[test]
    fn shared_use_sums_paths() {
        // f(w) = w*x + w*y  =>  df/dw = x + y
        let w = Tensor::<f64>::scalar(2.0);
        let x = Tensor::<f64>::scalar(3.0);
        let y = Tensor::<f64>::scalar(5.0);
        let mut tape = Tape::new();
        let (wv, xv, yv) = (tape.input(&w), tape.constant(&x), tape.constant(&y));
        let a = tape.mul(wv, xv).unwrap();
        let b = tape.mul(wv, yv).unwrap();
        let f = tape.add(a, b).unwrap();
        assert_eq!(tape.backward(f).unwrap().get(wv).unwrap(), &[8.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let id = store.insert("w", Tensor::scalar(3.0));
        let grads = {
            let mut tape = Tape::new();
            let w = tape.param(&store, id);
            let f = tape.mul(w, w).unwrap();
            (tape.backward(f).unwrap(), tape.backward(f).unwrap())
        };
        store.accumulate(&grads.0).unwrap();
        assert_eq!(store.get(id).grad().unwrap(), &[6.0]);
        store.accumulate(&grads.1).unwrap();
        assert_eq!(store.get(id).grad().unwrap(), &[12.0]);
        store.zero_grad();
        assert_eq!(store.get(id).grad().unwrap(), &[0.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let x = Tensor::<f64>::zeros([2]);
        let mut tape = Tape::new();
        let v = tape.input(&x);
        assert!(matches!(tape.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let x = Tensor::<f64>::filled([2], 1.5);
        let c = Tensor::<f64>::filled([2], 2.0);
        let mut tape = Tape::new();
        let (xv, cv) = (tape.input(&x), tape.constant(&c));
        let p = tape.mul(xv, cv).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(xv).unwrap(), &[2.0, 2.0]);
        assert!(g.get(cv).is_none());
    }

    #[test]
    fn all_negative_relu_blocks_gradient() {
        let x = Tensor::<f64>::new([3], vec![-1.0, -2.0, -0.5]).unwrap();
        let mut tape = Tape::new();
        let v = tape.input(&x);
        let r = tape.relu(v);
        assert!(tape.value(r).iter().all(|&y| y == 0.0));
        let s = tape.sum(r);
        assert_eq!(tape.backward(s).unwrap().get(v).unwrap(), &[0.0, 0.0, 0.0]);

        let x = Tensor::<f64>::new([2], vec![1.0, 4.0]).unwrap();
        let mut tape = Tape::new();
        let v = tape.input(&x);
        let r = tape.relu(v);
        assert_eq!(tape.value(r), x.data());
        let s = tape.sum(r);
        assert_eq!(tape.backward(s).unwrap().get(v).unwrap(), &[1.0, 1.0]);
    }
}
