//! Local-global convolution: a standard 3x3 conv augmented with a
//! global branch that pools context over all pixels, attends over the
//! spatial dimension per head, and broadcasts a gated global vector
//! back onto the feature map. The branch's final BN scale starts near
//! zero so a wrapped pretrained backbone is initially unchanged.

use super::conv::{BatchNorm2d, Conv2d};
use super::{join, Linear, Module, ParamSet, VarKind};
use crate::error::{Error, Result};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub struct LocalGlobalConv<T> {
    /// The original local conv; weights reused verbatim when wrapping.
    pub local: Conv2d<T>,
    /// 1x1 Conv-ReLU transform, stride-matched to the local conv so the
    /// branch operates at the output resolution.
    pub transform: Conv2d<T>,
    /// Spatial attention logits, one map per head.
    pub attn: Conv2d<T>,
    /// Per-pixel gate probabilities for broadcasting the global vector.
    pub gate: Conv2d<T>,
    /// Projects the concatenated per-head aggregates to out channels.
    pub proj: Linear<T>,
    /// Final BN; gamma initialized small (e.g. 1e-3).
    pub bn: BatchNorm2d<T>,
    pub heads: usize,
    pub hidden: usize,
}

impl<T: Scalar> LocalGlobalConv<T> {
    /// Wrap an existing conv. The hidden width equals the local conv's
    /// output width; `heads` must divide it.
    pub fn wrap(local: Conv2d<T>, heads: usize, gamma_init: f64, rng: &mut Rng) -> Self {
        let hidden = local.out_ch;
        assert!(heads > 0 && hidden % heads == 0, "heads must divide hidden width");
        let transform = Conv2d::new(local.in_ch, hidden, 1, local.stride, 0, true, rng);
        let attn = Conv2d::new(2 * hidden, heads, 1, 1, 0, true, rng);
        let gate = Conv2d::new(2 * hidden, 1, 1, 1, 0, true, rng);
        let proj = Linear::new(2 * hidden, local.out_ch, true, rng);
        let bn = BatchNorm2d::with_gamma(local.out_ch, gamma_init);
        LocalGlobalConv { local, transform, attn, gate, proj, bn, heads, hidden }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let (out, _) = self.forward_with_attention(tape, x, training)?;
        Ok(out)
    }

    /// Forward returning the per-head spatial attention `[N, g, H'*W']`
    /// for inspection.
    pub fn forward_with_attention(
        &self,
        tape: &Tape<T>,
        x: &Tensor<T>,
        training: bool,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let local = self.local.forward(tape, x)?;
        let (n, co, oh, ow) = match local.dims() {
            &[n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::shape(format!("expected rank-4 local output, got {}", local.shape()))),
        };
        let pixels = oh * ow;

        let t = ops::relu(tape, &self.transform.forward(tape, x)?);
        let pooled = ops::avgpool_global(tape, &t)?;
        let pooled_map = ops::resize_nearest(tape, &pooled, oh, ow)?;
        let hidden = ops::concat(tape, 1, &[&t, &pooled_map])?; // [N, 2Ch, H', W']

        let logits = self.attn.forward(tape, &hidden)?; // [N, g, H', W']
        let logits = ops::reshape(tape, &logits, [n, self.heads, pixels])?;
        let attn = ops::softmax(tape, &logits, 2)?;

        // Aggregate attention-weighted features per head slice. Heads
        // split the spatially-varying transform half; the pooled half
        // is already a global aggregate and passes through unweighted.
        let t_flat = ops::reshape(tape, &t, [n, self.hidden, pixels])?;
        let slice_ch = self.hidden / self.heads;
        let mut head_vecs = Vec::with_capacity(self.heads + 1);
        for h in 0..self.heads {
            let hs = ops::narrow(tape, &t_flat, 1, h * slice_ch, slice_ch)?; // [N, sc, P]
            let a = ops::narrow(tape, &attn, 1, h, 1)?; // [N, 1, P]
            let weighted = ops::mul(tape, &hs, &a)?;
            let agg = ops::reduce_sum(tape, &weighted, 2)?; // [N, sc, 1]
            head_vecs.push(agg);
        }
        head_vecs.push(ops::reshape(tape, &pooled, [n, self.hidden, 1])?);
        let refs: Vec<&Tensor<T>> = head_vecs.iter().collect();
        let global = ops::concat(tape, 1, &refs)?; // [N, 2Ch, 1]
        let global = ops::reshape(tape, &global, [n, 2 * self.hidden])?;
        let gvec = self.proj.forward(tape, &global)?; // [N, Co]
        let gvec = ops::reshape(tape, &gvec, [n, co, 1, 1])?;

        let gate = ops::sigmoid(tape, &self.gate.forward(tape, &hidden)?); // [N,1,H',W']
        let branch = ops::mul(tape, &gate, &gvec)?; // broadcast both ways -> [N,Co,H',W']
        let branch = self.bn.forward(tape, &branch, training)?;

        Ok((ops::add(tape, &local, &branch)?, attn))
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.local.out_size(h, w);
        let pixels = (oh * ow) as u64;
        let local = self.local.macs(h, w);
        let transform = self.transform.macs(h, w);
        let attn = self.attn.macs(oh, ow);
        let gate = self.gate.macs(oh, ow);
        let aggregate = 2 * self.hidden as u64 * pixels;
        let proj = (2 * self.hidden * self.local.out_ch) as u64;
        let broadcast = self.local.out_ch as u64 * pixels;
        local + transform + attn + gate + aggregate + proj + broadcast
    }
}

impl<T: Scalar> Module<T> for LocalGlobalConv<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.local.collect(&join(prefix, "local"), out);
        let g = join(prefix, "global");
        self.transform.collect(&join(&g, "transform"), out);
        self.attn.collect(&join(&g, "attn"), out);
        self.gate.collect(&join(&g, "gate"), out);
        self.proj.collect(&join(&g, "proj"), out);
        self.bn.collect(&join(&g, "bn"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::gradcheck;
    use crate::tensor::Tape;

    fn make(in_ch: usize, out_ch: usize, stride: usize, gamma: f64, seed: u64) -> LocalGlobalConv<f64> {
        let mut rng = Rng::new(seed);
        let local = Conv2d::new(in_ch, out_ch, 3, stride, 1, false, &mut rng);
        LocalGlobalConv::wrap(local, 4, gamma, &mut rng)
    }

    #[test]
    fn zero_gamma_reproduces_local_conv_bitwise() {
        let mut rng = Rng::new(11);
        let lg = make(3, 4, 1, 0.0, 12);
        let x = Tensor::<f64>::randn([2, 3, 6, 6], 1.0, &mut rng);
        let tape = Tape::inference();
        let full = lg.forward(&tape, &x, true).unwrap();
        let local_only = lg.local.forward(&tape, &x).unwrap();
        let a: Vec<u64> = full.to_vec().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = local_only.to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn small_gamma_perturbs_under_one_percent_at_init() {
        let mut rng = Rng::new(21);
        let lg = make(3, 4, 1, 0.001, 22);
        let x = Tensor::<f64>::randn([2, 3, 8, 8], 1.0, &mut rng);
        let tape = Tape::inference();
        let full = lg.forward(&tape, &x, true).unwrap().to_vec();
        let local = lg.local.forward(&tape, &x).unwrap().to_vec();
        let max_local = local.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_diff = full
            .iter()
            .zip(&local)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_diff / (max_local + 1e-8) < 0.01, "diff {max_diff} vs {max_local}");
    }

    #[test]
    fn spatial_attention_sums_to_one_per_head() {
        let mut rng = Rng::new(31);
        let lg = make(2, 4, 2, 0.001, 32);
        let x = Tensor::<f64>::randn([3, 2, 8, 8], 1.0, &mut rng);
        let tape = Tape::inference();
        let (_, attn) = lg.forward_with_attention(&tape, &x, true).unwrap();
        let dims = attn.dims().to_vec();
        assert_eq!(dims[1], 4);
        let d = attn.to_vec();
        let pixels = dims[2];
        for row in 0..dims[0] * dims[1] {
            let s: f64 = d[row * pixels..(row + 1) * pixels].iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "head sum {s}");
        }
    }

    #[test]
    fn gradcheck_full_block() {
        let mut rng = Rng::new(41);
        let lg = make(2, 4, 1, 0.5, 42);
        let x = Tensor::<f64>::randn([1, 2, 4, 4], 0.7, &mut rng).requires_grad_(true);
        let mut ps = ParamSet::new();
        lg.collect("lg", &mut ps);
        let mut params = ps.trainable();
        params.push(("x".to_string(), x.clone()));
        let report = gradcheck(
            &params,
            |tape| {
                let y = lg.forward(tape, &x, true)?;
                ops::sum_sq(tape, &y)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }

    #[test]
    fn stride_two_output_matches_local_shape() {
        let mut rng = Rng::new(51);
        let lg = make(3, 8, 2, 0.001, 52);
        let x = Tensor::<f64>::randn([1, 3, 8, 8], 1.0, &mut rng);
        let tape = Tape::inference();
        let y = lg.forward(&tape, &x, true).unwrap();
        assert_eq!(y.dims(), &[1, 8, 4, 4]);
    }
}
