//! Pyramid encoders. Both families satisfy the same contract: four
//! stage outputs at strides 4/8/16/32 relative to the input.

use super::Pyramid;
use crate::error::Result;
use crate::nn::attention::{map_to_tokens, tokens_to_map, TransformerBlock};
use crate::nn::{join, ConvBnRelu, Module, ParamSet};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub enum EncoderKind<T> {
    Cnn(CnnEncoder<T>),
    Transformer(TransformerEncoder<T>),
}

impl<T: Scalar> EncoderKind<T> {
    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Pyramid<T>> {
        match self {
            EncoderKind::Cnn(e) => e.forward(tape, x, training),
            EncoderKind::Transformer(e) => e.forward(tape, x, training),
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        match self {
            EncoderKind::Cnn(e) => e.macs(h, w),
            EncoderKind::Transformer(e) => e.macs(h, w),
        }
    }
}

impl<T: Scalar> Module<T> for EncoderKind<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        match self {
            EncoderKind::Cnn(e) => e.collect(prefix, out),
            EncoderKind::Transformer(e) => e.collect(prefix, out),
        }
    }
}

/// Four-stage CNN. Stage 1 is two stride-2 convs (stride 4 overall);
/// later stages are a stride-2 conv followed by a stride-1 conv.
pub struct CnnEncoder<T> {
    pub stages: [Vec<ConvBnRelu<T>>; 4],
    pub widths: [usize; 4],
}

impl<T: Scalar> CnnEncoder<T> {
    pub fn new(widths: [usize; 4], rng: &mut Rng) -> Self {
        let s1 = vec![
            ConvBnRelu::new(3, widths[0], 3, 2, 1, true, rng),
            ConvBnRelu::new(widths[0], widths[0], 3, 2, 1, true, rng),
        ];
        let mk = |i: usize, rng: &mut Rng| {
            vec![
                ConvBnRelu::new(widths[i - 1], widths[i], 3, 2, 1, true, rng),
                ConvBnRelu::new(widths[i], widths[i], 3, 1, 1, true, rng),
            ]
        };
        let s2 = mk(1, rng);
        let s3 = mk(2, rng);
        let s4 = mk(3, rng);
        CnnEncoder { stages: [s1, s2, s3, s4], widths }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Pyramid<T>> {
        let mut cur = x.clone();
        let mut outs = Vec::with_capacity(4);
        for stage in &self.stages {
            for block in stage {
                cur = block.forward(tape, &cur, training)?;
            }
            outs.push(cur.clone());
        }
        let [p1, p2, p3, p4]: [Tensor<T>; 4] = outs.try_into().map_err(|_| unreachable!())?;
        Ok(Pyramid([p1, p2, p3, p4]))
    }

    pub fn wrap_local_global(&mut self, heads: usize, gamma_init: f64, rng: &mut Rng) {
        for stage in &mut self.stages {
            for block in stage {
                block.wrap_local_global(heads, gamma_init, rng);
            }
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (mut ch, mut cw) = (h, w);
        let mut total = 0u64;
        for stage in &self.stages {
            for block in stage {
                total += block.conv.macs(ch, cw);
                let (oh, ow) = block.conv.local().out_size(ch, cw);
                ch = oh;
                cw = ow;
            }
        }
        total
    }
}

impl<T: Scalar> Module<T> for CnnEncoder<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        for (i, stage) in self.stages.iter().enumerate() {
            for (j, block) in stage.iter().enumerate() {
                block.collect(&join(prefix, &format!("stage{}.conv{}", i + 1, j + 1)), out);
            }
        }
    }
}

/// Patch-embed transformer encoder: a conv stem to stride 4, then per
/// stage a set of self-attention blocks over the flattened tokens, with
/// strided conv merges between stages.
pub struct TransformerEncoder<T> {
    pub stem: [ConvBnRelu<T>; 2],
    pub merges: [ConvBnRelu<T>; 3],
    pub blocks: [Vec<TransformerBlock<T>>; 4],
    pub widths: [usize; 4],
}

impl<T: Scalar> TransformerEncoder<T> {
    pub fn new(
        widths: [usize; 4],
        heads: usize,
        mlp_ratio: usize,
        blocks_per_stage: usize,
        rng: &mut Rng,
    ) -> Self {
        let stem = [
            ConvBnRelu::new(3, widths[0], 3, 2, 1, true, rng),
            ConvBnRelu::new(widths[0], widths[0], 3, 2, 1, false, rng),
        ];
        let merges = [
            ConvBnRelu::new(widths[0], widths[1], 3, 2, 1, false, rng),
            ConvBnRelu::new(widths[1], widths[2], 3, 2, 1, false, rng),
            ConvBnRelu::new(widths[2], widths[3], 3, 2, 1, false, rng),
        ];
        let mk = |dim: usize, rng: &mut Rng| {
            (0..blocks_per_stage)
                .map(|_| TransformerBlock::new(dim, heads, mlp_ratio, rng))
                .collect::<Vec<_>>()
        };
        let blocks = [mk(widths[0], rng), mk(widths[1], rng), mk(widths[2], rng), mk(widths[3], rng)];
        TransformerEncoder { stem, merges, blocks, widths }
    }

    fn run_blocks(
        &self,
        tape: &Tape<T>,
        stage: usize,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (n, _c, h, w) = match x.dims() {
            &[n, c, h, w] => (n, c, h, w),
            _ => unreachable!("stage inputs are rank 4"),
        };
        let mut per_sample = Vec::with_capacity(n);
        for s in 0..n {
            let xs = ops::narrow(tape, x, 0, s, 1)?;
            let mut tok = map_to_tokens(tape, &xs)?;
            for blk in &self.blocks[stage] {
                tok = blk.forward(tape, &tok)?;
            }
            per_sample.push(tokens_to_map(tape, &tok, h, w)?);
        }
        let refs: Vec<&Tensor<T>> = per_sample.iter().collect();
        ops::concat(tape, 0, &refs)
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Pyramid<T>> {
        let mut cur = self.stem[0].forward(tape, x, training)?;
        cur = self.stem[1].forward(tape, &cur, training)?;
        let p1 = self.run_blocks(tape, 0, &cur)?;
        let m2 = self.merges[0].forward(tape, &p1, training)?;
        let p2 = self.run_blocks(tape, 1, &m2)?;
        let m3 = self.merges[1].forward(tape, &p2, training)?;
        let p3 = self.run_blocks(tape, 2, &m3)?;
        let m4 = self.merges[2].forward(tape, &p3, training)?;
        let p4 = self.run_blocks(tape, 3, &m4)?;
        Ok(Pyramid([p1, p2, p3, p4]))
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = 0u64;
        let (mut ch, mut cw) = (h, w);
        total += self.stem[0].conv.macs(ch, cw);
        (ch, cw) = self.stem[0].conv.local().out_size(ch, cw);
        total += self.stem[1].conv.macs(ch, cw);
        (ch, cw) = self.stem[1].conv.local().out_size(ch, cw);
        for stage in 0..4 {
            for blk in &self.blocks[stage] {
                total += blk.macs(ch * cw);
            }
            if stage < 3 {
                total += self.merges[stage].conv.macs(ch, cw);
                (ch, cw) = self.merges[stage].conv.local().out_size(ch, cw);
            }
        }
        total
    }
}

impl<T: Scalar> Module<T> for TransformerEncoder<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.stem[0].collect(&join(prefix, "stem.conv1"), out);
        self.stem[1].collect(&join(prefix, "stem.conv2"), out);
        for (i, m) in self.merges.iter().enumerate() {
            m.collect(&join(prefix, &format!("merge{}", i + 2)), out);
        }
        for (i, stage) in self.blocks.iter().enumerate() {
            for (j, blk) in stage.iter().enumerate() {
                blk.collect(&join(prefix, &format!("stage{}.block{}", i + 1, j + 1)), out);
            }
        }
    }
}
