use super::{Result, Scalar, TensorError};
use rand::Rng;

/// Dense n-dimensional array in row-major order with an optional gradient
/// buffer of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub grad: Option<Vec<S>>,
    pub requires_grad: bool,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::ZERO; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
            grad: None,
            requires_grad: false,
        }
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, the symmetric
    /// scheme used for every conv and linear weight in the model.
    pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| S::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: true,
        }
    }

    pub fn zeros_param(shape: &[usize]) -> Self {
        let mut t = Self::zeros(shape);
        t.requires_grad = true;
        t
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![S::ZERO; self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
            grad: None,
            requires_grad: self.requires_grad,
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        let err = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { len: 5, .. }));
    }

    #[test]
    fn grad_accumulates_additively() {
        let mut t = Tensor::<f32>::zeros(&[3]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad.as_deref(), Some(&[2.0, 3.0, 4.0][..]));
    }
}
