//! End-to-end depth networks: CNN student, CNN/transformer teacher,
//! the shared convolution+upsampling decoder, adaptive bin heads, and
//! the ghost-decoder acclimation wrapper around a frozen teacher.

pub mod acclimated;
pub mod decoder;
pub mod encoder;
pub mod heads;

pub use acclimated::{AcclimatedOutput, AcclimatedTeacher};
pub use decoder::Decoder;
pub use encoder::{CnnEncoder, EncoderKind, TransformerEncoder};
pub use heads::{BinHeads, BinPrediction};

use crate::error::{Error, Result};
use crate::nn::{join, Module, ParamSet};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};
use serde::{Deserialize, Serialize};

/// Which family the teacher encoder comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Cnn,
    Transformer,
}

/// Architecture hyperparameters; everything a checkpoint fingerprint
/// must pin down.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchConfig {
    pub student_widths: [usize; 4],
    pub teacher_widths: [usize; 4],
    pub teacher_kind: TeacherKind,
    pub bins: usize,
    pub decoder_channels: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub lg_heads: usize,
    pub lg_gamma_init: f64,
    pub fam_heads: usize,
    pub fam_mlp_ratio: usize,
    pub teacher_blocks_per_stage: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            student_widths: [16, 32, 64, 128],
            teacher_widths: [32, 64, 128, 256],
            teacher_kind: TeacherKind::Transformer,
            bins: 16,
            decoder_channels: 64,
            d_min: 0.25,
            d_max: 10.0,
            lg_heads: 4,
            lg_gamma_init: 1e-3,
            fam_heads: 4,
            fam_mlp_ratio: 2,
            teacher_blocks_per_stage: 2,
        }
    }
}

/// The last-four-stage encoder outputs at strides 4/8/16/32.
pub struct Pyramid<T>(pub [Tensor<T>; 4]);

impl<T: Scalar> Pyramid<T> {
    pub fn stages(&self) -> &[Tensor<T>; 4] {
        &self.0
    }

    pub fn detach(&self) -> Pyramid<T> {
        Pyramid([
            self.0[0].detach(),
            self.0[1].detach(),
            self.0[2].detach(),
            self.0[3].detach(),
        ])
    }
}

/// Full forward products of a depth model.
pub struct ModelOutput<T> {
    pub pyramid: Pyramid<T>,
    pub decoded: Tensor<T>,
    pub bins: BinPrediction<T>,
    /// Depth at input resolution, `[N,1,H,W]`, values in (d_min, d_max).
    pub depth: Tensor<T>,
}

/// Encoder + decoder + bin heads. The student instantiates a CNN
/// encoder; the teacher instantiates either family.
pub struct DepthModel<T> {
    pub encoder: EncoderKind<T>,
    pub decoder: Decoder<T>,
    pub heads: BinHeads<T>,
}

impl<T: Scalar> DepthModel<T> {
    /// Student: CNN encoder at the configured student widths. Parameter
    /// init consumes `rng` in construction order.
    pub fn student(cfg: &ArchConfig, rng: &mut Rng) -> Self {
        let encoder = EncoderKind::Cnn(CnnEncoder::new(cfg.student_widths, rng));
        let decoder = Decoder::new(cfg.student_widths, cfg.decoder_channels, rng);
        let heads = BinHeads::new(cfg.decoder_channels, cfg.bins, cfg.d_min, cfg.d_max, rng);
        DepthModel { encoder, decoder, heads }
    }

    pub fn teacher(cfg: &ArchConfig, rng: &mut Rng) -> Self {
        let encoder = match cfg.teacher_kind {
            TeacherKind::Cnn => EncoderKind::Cnn(CnnEncoder::new(cfg.teacher_widths, rng)),
            TeacherKind::Transformer => EncoderKind::Transformer(TransformerEncoder::new(
                cfg.teacher_widths,
                cfg.fam_heads,
                cfg.fam_mlp_ratio,
                cfg.teacher_blocks_per_stage,
                rng,
            )),
        };
        let decoder = Decoder::new(cfg.teacher_widths, cfg.decoder_channels, rng);
        let heads = BinHeads::new(cfg.decoder_channels, cfg.bins, cfg.d_min, cfg.d_max, rng);
        DepthModel { encoder, decoder, heads }
    }

    /// Wrap every 3x3 encoder conv with the local-global module,
    /// reusing existing weights as the local branches.
    pub fn wrap_local_global(&mut self, cfg: &ArchConfig, rng: &mut Rng) {
        if let EncoderKind::Cnn(enc) = &mut self.encoder {
            enc.wrap_local_global(cfg.lg_heads, cfg.lg_gamma_init, rng);
        }
    }

    pub fn encode(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Pyramid<T>> {
        let (h, w) = match x.dims() {
            &[_, 3, h, w] => (h, w),
            _ => {
                return Err(Error::shape(format!(
                    "encoder expects [N,3,H,W] images, got {}",
                    x.shape()
                )))
            }
        };
        if h % 32 != 0 || w % 32 != 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} not divisible by 32"
            )));
        }
        self.encoder.forward(tape, x, training)
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<ModelOutput<T>> {
        let (h, w) = (x.dims()[x.rank() - 2], x.dims()[x.rank() - 1]);
        let pyramid = self.encode(tape, x, training)?;
        let decoded = self.decoder.forward(tape, &pyramid, training)?;
        let bins = self.heads.forward(tape, &decoded)?;
        let quarter = heads::depth_from_bins(tape, &bins.probs, &bins.centers)?;
        let depth = ops::resize_nearest(tape, &quarter, h, w)?;
        Ok(ModelOutput { pyramid, decoded, bins, depth })
    }

    /// Per-sample multiply count at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.encoder.macs(h, w) + self.decoder.macs(h, w) + self.heads.macs(h / 4, w / 4)
    }
}

impl<T: Scalar> Module<T> for DepthModel<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.encoder.collect(&join(prefix, "enc"), out);
        self.decoder.collect(&join(prefix, "dec"), out);
        self.heads.collect(&join(prefix, "head"), out);
    }
}
