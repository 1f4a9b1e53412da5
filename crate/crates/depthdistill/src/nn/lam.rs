//! Loss attention module: cross-attention with the feature's spatial
//! mean as the query. Emits per-pixel importance scores that gate the
//! feature and later weight the distillation loss. Scores are softmax
//! over pixels rescaled by H*W, so a uniform map has mean 1.

use super::conv::Conv2d;
use super::{join, Linear, Module, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub struct LossAttention<T> {
    pub wq: Linear<T>,
    pub wk: Conv2d<T>,
    pub dim: usize,
}

impl<T: Scalar> LossAttention<T> {
    pub fn new(dim: usize, rng: &mut Rng) -> Self {
        LossAttention {
            wq: Linear::new(dim, dim, true, rng),
            wk: Conv2d::new(dim, dim, 1, 1, 0, true, rng),
            dim,
        }
    }

    /// `f` is `[N,C,H,W]`. Returns the gated feature `[N,C,H,W]` and
    /// the score map `[N,1,H,W]`.
    pub fn forward(&self, tape: &Tape<T>, f: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (n, c, h, w) = match f.dims() {
            &[n, c, h, w] if c == self.dim => (n, c, h, w),
            _ => {
                return Err(Error::shape(format!(
                    "loss attention expects [N,{},H,W], got {}",
                    self.dim,
                    f.shape()
                )))
            }
        };
        let pixels = h * w;
        let inv_sqrt = T::from_f64(1.0 / (c as f64).sqrt());

        let meanvec = ops::reshape(tape, &ops::avgpool_global(tape, f)?, [n, c])?;
        let q = self.wq.forward(tape, &meanvec)?; // [N, C]
        let keys = ops::reshape(tape, &self.wk.forward(tape, f)?, [n, c, pixels])?;

        let mut rows = Vec::with_capacity(n);
        for s in 0..n {
            let qs = ops::narrow(tape, &q, 0, s, 1)?; // [1, C]
            let ks = ops::reshape(tape, &ops::narrow(tape, &keys, 0, s, 1)?, [c, pixels])?;
            rows.push(ops::matmul(tape, &qs, &ks)?); // [1, P]
        }
        let refs: Vec<&Tensor<T>> = rows.iter().collect();
        let scores = ops::scale(tape, &ops::concat(tape, 0, &refs)?, inv_sqrt); // [N, P]
        let a = ops::softmax(tape, &scores, 1)?;
        let a = ops::scale(tape, &a, T::from_f64(pixels as f64)); // mean-1 rescale
        let a_map = ops::reshape(tape, &a, [n, 1, h, w])?;
        let gated = ops::mul(tape, f, &a_map)?;
        Ok((gated, a_map))
    }
}

impl<T: Scalar> Module<T> for LossAttention<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.wq.collect(&join(prefix, "wq"), out);
        self.wk.collect(&join(prefix, "wk"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::gradcheck;

    #[test]
    fn constant_input_gives_uniform_scores() {
        let mut rng = Rng::new(71);
        let lam = LossAttention::<f64>::new(3, &mut rng);
        let f = Tensor::full([2, 3, 4, 4], 0.7);
        let tape = Tape::inference();
        let (_, a) = lam.forward(&tape, &f).unwrap();
        // rescaled by H*W, a uniform map is exactly 1 everywhere
        for v in a.to_vec() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn scores_sum_to_pixel_count() {
        let mut rng = Rng::new(72);
        let lam = LossAttention::<f64>::new(4, &mut rng);
        let f = Tensor::randn([3, 4, 5, 5], 1.0, &mut rng);
        let tape = Tape::inference();
        let (_, a) = lam.forward(&tape, &f).unwrap();
        let d = a.to_vec();
        for s in 0..3 {
            let sum: f64 = d[s * 25..(s + 1) * 25].iter().sum();
            assert!((sum - 25.0).abs() < 1e-4, "{sum}");
        }
    }

    #[test]
    fn gated_output_is_elementwise_product() {
        let mut rng = Rng::new(73);
        let lam = LossAttention::<f64>::new(2, &mut rng);
        let f = Tensor::randn([1, 2, 3, 3], 1.0, &mut rng);
        let tape = Tape::inference();
        let (g, a) = lam.forward(&tape, &f).unwrap();
        let (fd, ad, gd) = (f.to_vec(), a.to_vec(), g.to_vec());
        for c in 0..2 {
            for p in 0..9 {
                let want = fd[c * 9 + p] * ad[p];
                assert!((gd[c * 9 + p] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradcheck_through_module() {
        let mut rng = Rng::new(74);
        let lam = LossAttention::<f64>::new(3, &mut rng);
        let f = Tensor::randn([2, 3, 3, 3], 0.9, &mut rng).requires_grad_(true);
        let mut ps = ParamSet::new();
        lam.collect("lam", &mut ps);
        let mut params = ps.trainable();
        params.push(("f".to_string(), f.clone()));
        let report = gradcheck(
            &params,
            |tape| {
                let (g, a) = lam.forward(tape, &f)?;
                let l1 = ops::sum_sq(tape, &g)?;
                let l2 = ops::sum_sq(tape, &a)?;
                ops::add(tape, &l1, &l2)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }
}
