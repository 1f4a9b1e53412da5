//! Pre-norm transformer block on token matrices, used by the teacher
//! encoder stages and by the feature acclimation modules.

use super::{join, LayerNorm, Linear, Module, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub struct TransformerBlock<T> {
    pub dim: usize,
    pub heads: usize,
    pub wqkv: Linear<T>,
    pub wo: Linear<T>,
    pub mlp1: Linear<T>,
    pub mlp2: Linear<T>,
    pub ln1: LayerNorm<T>,
    pub ln2: LayerNorm<T>,
}

impl<T: Scalar> TransformerBlock<T> {
    pub fn new(dim: usize, heads: usize, mlp_ratio: usize, rng: &mut Rng) -> Self {
        assert!(dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        TransformerBlock {
            dim,
            heads,
            wqkv: Linear::new(dim, 3 * dim, true, rng),
            wo: Linear::new(dim, dim, true, rng),
            mlp1: Linear::new(dim, mlp_ratio * dim, true, rng),
            mlp2: Linear::new(mlp_ratio * dim, dim, true, rng),
            ln1: LayerNorm::new(dim),
            ln2: LayerNorm::new(dim),
        }
    }

    /// Tokens are `[n, dim]`. Returns the transformed tokens.
    pub fn forward(&self, tape: &Tape<T>, tokens: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, _) = self.forward_with_attention(tape, tokens)?;
        Ok(out)
    }

    /// Also returns each head's attention matrix `[n, n]`.
    pub fn forward_with_attention(
        &self,
        tape: &Tape<T>,
        tokens: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let d = self.dim;
        match tokens.dims() {
            &[_, td] if td == d => {}
            _ => {
                return Err(Error::shape(format!(
                    "transformer block expects [n x {d}] tokens, got {}",
                    tokens.shape()
                )))
            }
        }
        let hd = d / self.heads;
        let inv_sqrt = T::from_f64(1.0 / (hd as f64).sqrt());

        let a = self.ln1.forward(tape, tokens)?;
        let qkv = self.wqkv.forward(tape, &a)?;
        let q = ops::narrow(tape, &qkv, 1, 0, d)?;
        let k = ops::narrow(tape, &qkv, 1, d, d)?;
        let v = ops::narrow(tape, &qkv, 1, 2 * d, d)?;

        let mut head_outs = Vec::with_capacity(self.heads);
        let mut attns = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = ops::narrow(tape, &q, 1, h * hd, hd)?;
            let kh = ops::narrow(tape, &k, 1, h * hd, hd)?;
            let vh = ops::narrow(tape, &v, 1, h * hd, hd)?;
            let kt = ops::transpose2d(tape, &kh)?;
            let scores = ops::scale(tape, &ops::matmul(tape, &qh, &kt)?, inv_sqrt);
            let attn = ops::softmax(tape, &scores, 1)?;
            head_outs.push(ops::matmul(tape, &attn, &vh)?);
            attns.push(attn);
        }
        let refs: Vec<&Tensor<T>> = head_outs.iter().collect();
        let o = ops::concat(tape, 1, &refs)?;
        let x = ops::add(tape, tokens, &self.wo.forward(tape, &o)?)?;

        let m = self.ln2.forward(tape, &x)?;
        let m = ops::relu(tape, &self.mlp1.forward(tape, &m)?);
        let m = self.mlp2.forward(tape, &m)?;
        Ok((ops::add(tape, &x, &m)?, attns))
    }

    /// Multiply count for one forward over `n` tokens.
    pub fn macs(&self, n: usize) -> u64 {
        let d = self.dim as u64;
        let n = n as u64;
        let qkv = n * d * 3 * d;
        let attn = 2 * n * n * d;
        let out = n * d * d;
        let mlp = 2 * n * d * (self.mlp1.out_dim as u64);
        qkv + attn + out + mlp
    }
}

impl<T: Scalar> Module<T> for TransformerBlock<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.wqkv.collect(&join(prefix, "wqkv"), out);
        self.wo.collect(&join(prefix, "wo"), out);
        self.mlp1.collect(&join(prefix, "mlp1"), out);
        self.mlp2.collect(&join(prefix, "mlp2"), out);
        self.ln1.collect(&join(prefix, "ln1"), out);
        self.ln2.collect(&join(prefix, "ln2"), out);
    }
}

/// Flatten a single sample's `[1,C,H,W]` map into `[H*W, C]` tokens.
pub fn map_to_tokens<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = match x.dims() {
        &[1, c, h, w] => (c, h, w),
        _ => return Err(Error::shape(format!("map_to_tokens expects [1,C,H,W], got {}", x.shape()))),
    };
    let flat = ops::reshape(tape, x, [c, h * w])?;
    ops::transpose2d(tape, &flat)
}

/// Inverse of [`map_to_tokens`].
pub fn tokens_to_map<T: Scalar>(
    tape: &Tape<T>,
    tokens: &Tensor<T>,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let (n, c) = match tokens.dims() {
        &[n, c] => (n, c),
        _ => return Err(Error::shape(format!("tokens_to_map expects rank 2, got {}", tokens.shape()))),
    };
    if n != h * w {
        return Err(Error::shape(format!("{n} tokens cannot fill {h}x{w}")));
    }
    let t = ops::transpose2d(tape, tokens)?;
    ops::reshape(tape, &t, [1, c, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::gradcheck;

    #[test]
    fn zeroed_projections_make_identity() {
        let mut rng = Rng::new(61);
        let mut blk = TransformerBlock::<f64>::new(8, 4, 2, &mut rng);
        blk.wo = Linear::zeroed(8, 8, true);
        blk.mlp2 = Linear::zeroed(16, 8, true);
        let x = Tensor::randn([5, 8], 1.0, &mut rng);
        let tape = Tape::inference();
        let y = blk.forward(&tape, &x).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = Rng::new(62);
        let blk = TransformerBlock::<f64>::new(8, 2, 2, &mut rng);
        let x = Tensor::randn([6, 8], 1.0, &mut rng);
        let tape = Tape::inference();
        let (_, attns) = blk.forward_with_attention(&tape, &x).unwrap();
        assert_eq!(attns.len(), 2);
        for a in attns {
            let d = a.to_vec();
            for r in 0..6 {
                let s: f64 = d[r * 6..(r + 1) * 6].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_dim_mismatch() {
        let mut rng = Rng::new(63);
        let blk = TransformerBlock::<f64>::new(8, 2, 2, &mut rng);
        let x = Tensor::zeros([4, 6]);
        let tape = Tape::inference();
        assert!(blk.forward(&tape, &x).is_err());
    }

    #[test]
    fn gradcheck_full_block() {
        let mut rng = Rng::new(64);
        let blk = TransformerBlock::<f64>::new(4, 2, 2, &mut rng);
        let x = Tensor::randn([3, 4], 0.8, &mut rng).requires_grad_(true);
        let mut ps = ParamSet::new();
        blk.collect("blk", &mut ps);
        let mut params = ps.trainable();
        params.push(("x".to_string(), x.clone()));
        let report = gradcheck(
            &params,
            |tape| {
                let y = blk.forward(tape, &x)?;
                ops::sum_sq(tape, &y)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }

    #[test]
    fn token_roundtrip() {
        let mut rng = Rng::new(65);
        let x = Tensor::<f64>::randn([1, 3, 2, 4], 1.0, &mut rng);
        let tape = Tape::inference();
        let tok = map_to_tokens(&tape, &x).unwrap();
        assert_eq!(tok.dims(), &[8, 3]);
        let back = tokens_to_map(&tape, &tok, 2, 4).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }
}
