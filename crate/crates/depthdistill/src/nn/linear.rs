use super::{join, Module, ParamSet, VarKind};
use crate::error::Result;
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

/// Fully connected layer on `[n, in_dim]` row batches. Weight is stored
/// `[in_dim, out_dim]` so the forward pass is a single matmul.
pub struct Linear<T> {
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut Rng) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        let w = Tensor::randn([in_dim, out_dim], std, rng).requires_grad_(true);
        let b = bias.then(|| Tensor::zeros([out_dim]).requires_grad_(true));
        Linear { w, b, in_dim, out_dim }
    }

    /// All-zero weights; with zero bias the layer is the zero map.
    pub fn zeroed(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let w = Tensor::zeros([in_dim, out_dim]).requires_grad_(true);
        let b = bias.then(|| Tensor::zeros([out_dim]).requires_grad_(true));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = ops::matmul(tape, x, &self.w)?;
        match &self.b {
            Some(b) => {
                let br = ops::reshape(tape, b, [1, self.out_dim])?;
                ops::add(tape, &y, &br)
            }
            None => Ok(y),
        }
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        out.push(join(prefix, "w"), &self.w, VarKind::Param);
        if let Some(b) = &self.b {
            out.push(join(prefix, "b"), b, VarKind::Param);
        }
    }
}
