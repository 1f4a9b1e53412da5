use super::lgconv::LocalGlobalConv;
use super::{join, Module, ParamSet, VarKind};
use crate::error::Result;
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub struct Conv2d<T> {
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let w = Tensor::randn([out_ch, in_ch, kernel, kernel], std, rng).requires_grad_(true);
        let b = bias.then(|| Tensor::zeros([out_ch]).requires_grad_(true));
        Conv2d { w, b, in_ch, out_ch, kernel, stride, pad }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv2d(tape, x, &self.w, self.b.as_ref(), self.stride, self.pad)
    }

    /// Multiply count for one sample with the given input spatial size.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let oh = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        (self.out_ch * self.in_ch * self.kernel * self.kernel) as u64 * (oh * ow) as u64
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        out.push(join(prefix, "w"), &self.w, VarKind::Param);
        if let Some(b) = &self.b {
            out.push(join(prefix, "b"), b, VarKind::Param);
        }
    }
}

/// Batch normalization over `[N,C,H,W]`. Training mode normalizes with
/// batch statistics and updates the running buffers; eval mode uses the
/// running buffers only. Variance is biased in both paths.
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self::with_gamma(channels, 1.0)
    }

    pub fn with_gamma(channels: usize, gamma_init: f64) -> Self {
        BatchNorm2d {
            gamma: Tensor::full([channels], T::from_f64(gamma_init)).requires_grad_(true),
            beta: Tensor::zeros([channels]).requires_grad_(true),
            running_mean: Tensor::zeros([channels]),
            running_var: Tensor::ones([channels]),
            channels,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let c = self.channels;
        let g = ops::reshape(tape, &self.gamma, [1, c, 1, 1])?;
        let b = ops::reshape(tape, &self.beta, [1, c, 1, 1])?;
        if training {
            let mu = ops::mean_axes(tape, x, &[0, 2, 3])?;
            let xc = ops::sub(tape, x, &mu)?;
            let var = ops::mean_axes(tape, &ops::mul(tape, &xc, &xc)?, &[0, 2, 3])?;
            let std = ops::sqrt(tape, &ops::add_scalar(tape, &var, T::from_f64(self.eps)))?;
            let xhat = ops::div(tape, &xc, &std)?;

            // Running-stat update happens outside the tape.
            let m = T::from_f64(self.momentum);
            let one_m = T::from_f64(1.0 - self.momentum);
            {
                let mud = mu.data();
                let vard = var.data();
                let mut rm = self.running_mean.data_mut();
                let mut rv = self.running_var.data_mut();
                for i in 0..c {
                    rm[i] = rm[i] * one_m + mud[i] * m;
                    rv[i] = rv[i] * one_m + vard[i] * m;
                }
            }
            ops::add(tape, &ops::mul(tape, &xhat, &g)?, &b)
        } else {
            let rm = ops::reshape(tape, &self.running_mean, [1, c, 1, 1])?;
            let rv = ops::reshape(tape, &self.running_var, [1, c, 1, 1])?;
            let std = ops::sqrt(tape, &ops::add_scalar(tape, &rv, T::from_f64(self.eps)))?;
            let xhat = ops::div(tape, &ops::sub(tape, x, &rm)?, &std)?;
            ops::add(tape, &ops::mul(tape, &xhat, &g)?, &b)
        }
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        out.push(join(prefix, "gamma"), &self.gamma, VarKind::Param);
        out.push(join(prefix, "beta"), &self.beta, VarKind::Param);
        out.push(join(prefix, "running_mean"), &self.running_mean, VarKind::Buffer);
        out.push(join(prefix, "running_var"), &self.running_var, VarKind::Buffer);
    }
}

/// The 3x3 convolution slot inside a conv block: plain, or wrapped with
/// the local-global module.
pub enum ConvKind<T> {
    Plain(Conv2d<T>),
    LocalGlobal(LocalGlobalConv<T>),
}

impl<T: Scalar> ConvKind<T> {
    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        match self {
            ConvKind::Plain(c) => c.forward(tape, x),
            ConvKind::LocalGlobal(lg) => lg.forward(tape, x, training),
        }
    }

    pub fn local(&self) -> &Conv2d<T> {
        match self {
            ConvKind::Plain(c) => c,
            ConvKind::LocalGlobal(lg) => &lg.local,
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        match self {
            ConvKind::Plain(c) => c.macs(h, w),
            ConvKind::LocalGlobal(lg) => lg.macs(h, w),
        }
    }
}

impl<T: Scalar> Module<T> for ConvKind<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        match self {
            // A plain conv keeps the `local` leaf name so the wrapped
            // form is a strict superset of the plain names.
            ConvKind::Plain(c) => c.collect(&join(prefix, "local"), out),
            ConvKind::LocalGlobal(lg) => lg.collect(prefix, out),
        }
    }
}

/// Conv -> BN -> optional ReLU, the encoder/decoder workhorse.
pub struct ConvBnRelu<T> {
    pub conv: ConvKind<T>,
    pub bn: BatchNorm2d<T>,
    pub act: bool,
}

impl<T: Scalar> ConvBnRelu<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        act: bool,
        rng: &mut Rng,
    ) -> Self {
        ConvBnRelu {
            conv: ConvKind::Plain(Conv2d::new(in_ch, out_ch, kernel, stride, pad, false, rng)),
            bn: BatchNorm2d::new(out_ch),
            act,
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let y = self.conv.forward(tape, x, training)?;
        let y = self.bn.forward(tape, &y, training)?;
        Ok(if self.act { ops::relu(tape, &y) } else { y })
    }

    /// Replace a plain 3x3 conv with the local-global wrapper, reusing
    /// the existing conv weights verbatim as the local branch.
    pub fn wrap_local_global(&mut self, heads: usize, gamma_init: f64, rng: &mut Rng) {
        let placeholder = ConvKind::Plain(Conv2d {
            w: Tensor::zeros([1, 1, 1, 1]),
            b: None,
            in_ch: 1,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: 1,
        });
        let old = std::mem::replace(&mut self.conv, placeholder);
        self.conv = match old {
            ConvKind::Plain(c) if c.kernel == 3 => {
                ConvKind::LocalGlobal(LocalGlobalConv::wrap(c, heads, gamma_init, rng))
            }
            other => other,
        };
    }
}

impl<T: Scalar> Module<T> for ConvBnRelu<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        self.conv.collect(prefix, out);
        self.bn.collect(&join(prefix, "bn"), out);
    }
}
