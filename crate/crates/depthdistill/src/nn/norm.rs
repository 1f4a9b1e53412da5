use super::{join, Module, ParamSet, VarKind};
use crate::error::Result;
use crate::tensor::{ops, Scalar, Tape, Tensor};

/// Layer normalization over the last axis of `[n, dim]` token matrices.
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub dim: usize,
    pub eps: f64,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::ones([dim]).requires_grad_(true),
            beta: Tensor::zeros([dim]).requires_grad_(true),
            dim,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mu = ops::reduce_mean(tape, x, 1)?;
        let xc = ops::sub(tape, x, &mu)?;
        let var = ops::reduce_mean(tape, &ops::mul(tape, &xc, &xc)?, 1)?;
        let std = ops::sqrt(tape, &ops::add_scalar(tape, &var, T::from_f64(self.eps)))?;
        let xhat = ops::div(tape, &xc, &std)?;
        let g = ops::reshape(tape, &self.gamma, [1, self.dim])?;
        let b = ops::reshape(tape, &self.beta, [1, self.dim])?;
        ops::add(tape, &ops::mul(tape, &xhat, &g)?, &b)
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        out.push(join(prefix, "gamma"), &self.gamma, VarKind::Param);
        out.push(join(prefix, "beta"), &self.beta, VarKind::Param);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck::gradcheck, Rng};

    #[test]
    fn normalizes_rows_to_zero_mean_unit_var() {
        let mut rng = Rng::new(4);
        let ln = LayerNorm::<f64>::new(6);
        let x = Tensor::randn([3, 6], 2.5, &mut rng);
        let tape = Tape::inference();
        let y = ln.forward(&tape, &x).unwrap();
        let d = y.to_vec();
        for r in 0..3 {
            let row = &d[r * 6..(r + 1) * 6];
            let mean: f64 = row.iter().sum::<f64>() / 6.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn gradcheck_through_layernorm() {
        let mut rng = Rng::new(8);
        let ln = LayerNorm::<f64>::new(4);
        let x = Tensor::randn([2, 4], 1.0, &mut rng).requires_grad_(true);
        let params = vec![
            ("x".to_string(), x.clone()),
            ("gamma".to_string(), ln.gamma.clone()),
            ("beta".to_string(), ln.beta.clone()),
        ];
        let report = gradcheck(
            &params,
            |tape| {
                let y = ln.forward(tape, &x)?;
                ops::sum_sq(tape, &y)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }
}
