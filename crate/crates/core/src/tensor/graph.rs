use super::{Result, Scalar, Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

pub(crate) struct Value<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Value<S> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Backward rule of one recorded op. Receives the output gradient and
/// scatters contributions into the input nodes' gradient buffers.
pub(crate) type BackFn<S> = Box<dyn FnOnce(&[S], &mut BackCtx<S>) + Send>;

pub(crate) struct BackCtx<'a, S: Scalar> {
    pub vals: &'a [Value<S>],
    pub grads: &'a mut [Option<Vec<S>>],
    pub needs: &'a [bool],
}

impl<'a, S: Scalar> BackCtx<'a, S> {
    pub fn needs(&self, id: VarId) -> bool {
        self.needs[id.0]
    }


    /// Gradient buffer of `id`, allocated to zeros on first access.
    pub fn grad_mut(&mut self, id: VarId) -> &mut [S] {
        let len = self.vals[id.0].numel();
        self.grads[id.0].get_or_insert_with(|| vec![S::ZERO; len])
    }
}

/// Define-by-run compute graph. Rebuilt per forward pass; backward walks
/// nodes in exact reverse insertion order.
pub struct Graph<S: Scalar> {
    pub(crate) vals: Vec<Value<S>>,
    pub(crate) backs: Vec<Option<BackFn<S>>>,
    pub(crate) needs: Vec<bool>,
    params: Vec<(usize, String)>,
    grads: Vec<Option<Vec<S>>>,
    checked: bool,
    ran_backward: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    /// Graph with finiteness checking enabled: any NaN/Inf produced by a
    /// forward op or left behind by backward is a hard error.
    pub fn new() -> Self {
        Graph {
            vals: Vec::new(),
            backs: Vec::new(),
            needs: Vec::new(),
            params: Vec::new(),
            grads: Vec::new(),
            checked: true,
            ran_backward: false,
        }
    }

    pub fn unchecked() -> Self {
        let mut g = Self::new();
        g.checked = false;
        g
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        &self.vals[id.0].shape
    }

    pub fn data(&self, id: VarId) -> &[S] {
        &self.vals[id.0].data
    }

    /// Value of a scalar-shaped node.
    pub fn scalar(&self, id: VarId) -> S {
        debug_assert_eq!(self.vals[id.0].numel(), 1);
        self.vals[id.0].data[0]
    }

    pub(crate) fn push(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<S>,
        needs_grad: bool,
        back: Option<BackFn<S>>,
    ) -> Result<VarId> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if self.checked && !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        let id = self.vals.len();
        self.vals.push(Value { shape, data });
        self.backs.push(if needs_grad { back } else { None });
        self.needs.push(needs_grad);
        self.grads.push(None);
        Ok(VarId(id))
    }

    /// Leaf from a tensor; participates in backward iff `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor<S>) -> VarId {
        let id = self.vals.len();
        self.vals.push(Value {
            shape: t.shape.clone(),
            data: t.data.clone(),
        });
        self.backs.push(None);
        self.needs.push(t.requires_grad);
        self.grads.push(None);
        VarId(id)
    }

    /// Named parameter leaf; its gradient is retrievable after backward
    /// under `name`. Bind each parameter once per forward pass — reuse of
    /// the returned id accumulates gradients additively across all uses.
    pub fn param(&mut self, name: &str, t: &Tensor<S>) -> VarId {
        let id = self.leaf(t);
        self.needs[id.0] = true;
        self.params.push((id.0, name.to_string()));
        id
    }

    pub fn constant(&mut self, shape: &[usize], fill: S) -> VarId {
        let numel: usize = shape.iter().product();
        let id = self.vals.len();
        self.vals.push(Value {
            shape: shape.to_vec(),
            data: vec![fill; numel],
        });
        self.backs.push(None);
        self.needs.push(false);
        self.grads.push(None);
        VarId(id)
    }

    pub fn from_vec(&mut self, shape: &[usize], data: Vec<S>) -> Result<VarId> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        self.push("from_vec", shape.to_vec(), data, false, None)
    }

    /// Reverse pass from a scalar node. Gradients of parameter leaves stay
    /// in the graph for [`Graph::param_grads`] / [`Graph::grad`].
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        assert!(
            self.vals[loss.0].numel() == 1,
            "backward requires a scalar loss node"
        );
        assert!(!self.ran_backward, "backward may run once per graph");
        self.ran_backward = true;
        self.grads[loss.0] = Some(vec![S::ONE]);
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() {
                continue;
            }
            if let Some(back) = self.backs[i].take() {
                let g = self.grads[i].take().expect("grad present");
                let mut ctx = BackCtx {
                    vals: &self.vals,
                    grads: &mut self.grads,
                    needs: &self.needs,
                };
                back(&g, &mut ctx);
            }
        }
        if self.checked {
            for (i, g) in self.grads.iter().enumerate() {
                if let Some(g) = g {
                    if !g.iter().all(|v| v.is_finite()) {
                        let _ = i;
                        return Err(TensorError::NonFinite { op: "backward" });
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient of a leaf after backward, if any contribution reached it.
    pub fn grad(&self, id: VarId) -> Option<&[S]> {
        self.grads[id.0].as_deref()
    }

    /// Named parameter gradients in binding order. Parameters that received
    /// no gradient are omitted.
    pub fn param_grads(&mut self) -> Vec<(String, Vec<S>)> {
        let mut out = Vec::with_capacity(self.params.len());
        for (idx, name) in &self.params {
            if let Some(g) = self.grads[*idx].take() {
                out.push((name.clone(), g));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_gradients_sum() {
        // y = x*x + x*x: node x feeds two consumers, dy/dx = 4x.
        let mut g = Graph::<f64>::new();
        let x = Tensor::from_vec(vec![3.0f64]).requires_grad(true);
        let xv = g.param("x", &x);
        let a = g.mul(xv, xv).unwrap();
        let b = g.mul(xv, xv).unwrap();
        let y = g.add(a, b).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(xv).unwrap(), &[12.0]);
    }

    #[test]
    fn checked_mode_rejects_nonfinite() {
        let mut g = Graph::<f32>::new();
        let x = g.from_vec(&[1], vec![f32::MAX]).unwrap();
        let err = g.mul(x, x).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }
}
