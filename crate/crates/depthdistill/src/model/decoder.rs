//! Top-down decoder: starting from the stride-32 map, repeatedly
//! 1x1-reduce, upsample x2, concatenate the skip, and fuse with a 3x3
//! conv. Output sits at stride 4 with a fixed channel width.

use super::Pyramid;
use crate::error::Result;
use crate::nn::{join, Conv2d, ConvBnRelu, Module, ParamSet};
use crate::tensor::{ops, Rng, Scalar, Tape, Tensor};

pub struct Decoder<T> {
    pub reduce: [Conv2d<T>; 3],
    pub fuse: [ConvBnRelu<T>; 3],
    pub in_widths: [usize; 4],
    pub out_channels: usize,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(in_widths: [usize; 4], out_channels: usize, rng: &mut Rng) -> Self {
        let d = out_channels;
        let reduce = [
            Conv2d::new(in_widths[3], d, 1, 1, 0, true, rng),
            Conv2d::new(d, d, 1, 1, 0, true, rng),
            Conv2d::new(d, d, 1, 1, 0, true, rng),
        ];
        let fuse = [
            ConvBnRelu::new(d + in_widths[2], d, 3, 1, 1, true, rng),
            ConvBnRelu::new(d + in_widths[1], d, 3, 1, 1, true, rng),
            ConvBnRelu::new(d + in_widths[0], d, 3, 1, 1, true, rng),
        ];
        Decoder { reduce, fuse, in_widths, out_channels }
    }

    pub fn forward(&self, tape: &Tape<T>, p: &Pyramid<T>, training: bool) -> Result<Tensor<T>> {
        let mut x = p.stages()[3].clone();
        for (i, skip) in [2usize, 1, 0].into_iter().enumerate() {
            x = self.reduce[i].forward(tape, &x)?;
            x = ops::upsample_nearest(tape, &x, 2)?;
            x = ops::concat(tape, 1, &[&x, &p.stages()[skip]])?;
            x = self.fuse[i].forward(tape, &x, training)?;
        }
        Ok(x)
    }

    /// Multiply count for one sample given the model input size.
    pub fn macs(&self, input_h: usize, input_w: usize) -> u64 {
        let mut total = 0u64;
        // stride-32 feature upward
        for (i, stride) in [32usize, 16, 8].into_iter().enumerate() {
            let (h, w) = (input_h / stride, input_w / stride);
            total += self.reduce[i].macs(h, w);
            total += self.fuse[i].conv.macs(h * 2, w * 2);
        }
        total
    }
}

impl<T: Scalar> Module<T> for Decoder<T> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>) {
        for i in 0..3 {
            self.reduce[i].collect(&join(prefix, &format!("reduce{}", i + 1)), out);
            self.fuse[i].collect(&join(prefix, &format!("fuse{}", i + 1)), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::gradcheck;
    use crate::tensor::Tape;

    fn tiny_pyramid(rng: &mut Rng) -> Pyramid<f64> {
        Pyramid([
            Tensor::randn([1, 4, 8, 8], 0.5, rng),
            Tensor::randn([1, 6, 4, 4], 0.5, rng),
            Tensor::randn([1, 8, 2, 2], 0.5, rng),
            Tensor::randn([1, 10, 1, 1], 0.5, rng),
        ])
    }

    #[test]
    fn output_at_quarter_resolution() {
        let mut rng = Rng::new(81);
        let dec = Decoder::<f64>::new([4, 6, 8, 10], 5, &mut rng);
        let p = tiny_pyramid(&mut rng);
        let tape = Tape::inference();
        let y = dec.forward(&tape, &p, false).unwrap();
        assert_eq!(y.dims(), &[1, 5, 8, 8]);
    }

    #[test]
    fn stride4_skip_is_actually_used() {
        let mut rng = Rng::new(82);
        let dec = Decoder::<f64>::new([4, 6, 8, 10], 5, &mut rng);
        let p = tiny_pyramid(&mut rng);
        let tape = Tape::inference();
        let y1 = dec.forward(&tape, &p, false).unwrap();
        let zeroed = Pyramid([
            Tensor::zeros([1, 4, 8, 8]),
            p.stages()[1].clone(),
            p.stages()[2].clone(),
            p.stages()[3].clone(),
        ]);
        let y2 = dec.forward(&tape, &zeroed, false).unwrap();
        assert_ne!(y1.to_vec(), y2.to_vec());
    }

    #[test]
    fn gradcheck_through_decoder() {
        let mut rng = Rng::new(83);
        let dec = Decoder::<f64>::new([2, 3, 4, 5], 3, &mut rng);
        let p = Pyramid([
            Tensor::randn([1, 2, 4, 4], 0.5, &mut rng).requires_grad_(true),
            Tensor::randn([1, 3, 2, 2], 0.5, &mut rng).requires_grad_(true),
            Tensor::randn([1, 4, 1, 1], 0.5, &mut rng).requires_grad_(true),
            Tensor::randn([1, 5, 1, 1], 0.5, &mut rng).requires_grad_(true),
        ]);
        let mut ps = ParamSet::new();
        dec.collect("dec", &mut ps);
        let mut params = ps.trainable();
        for (i, s) in p.stages().iter().enumerate() {
            params.push((format!("p{i}"), s.clone()));
        }
        // stride-16 stage upsamples 1x1 -> 2x2 to meet the 2x2 skip
        let report = gradcheck(
            &params,
            |tape| {
                let y = dec.forward(tape, &p, true)?;
                let y = ops::add_scalar(tape, &y, 0.05);
                ops::sum_sq(tape, &y)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report}");
    }
}
