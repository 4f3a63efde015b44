//! Direct sliding-window convolution.
//!
//! Every output accumulates from 0 over `(channel, ky, kx)` in ascending
//! order, adding `w * 0` for padded taps, which is the same sequence of
//! floating-point operations the im2col + `(i, k, j)` GEMM performs.

use wshare::cluster::BatchNorm;
use wshare::engine::{leaky, Tensor};
use wshare::netdef::{Activation, LayerSpec};

pub fn direct_conv(layer: &LayerSpec, input: &Tensor, kernel: &[f32], biases: &[f32], bn: Option<&BatchNorm>) -> Tensor {
    let spec = layer.conv().expect("convolutional layer");
    let (k, s, pad) = (spec.kernel, spec.stride, spec.pad as isize);
    let inp = input.shape;
    let out = layer.out_shape;
    let mut data = Vec::with_capacity(out.h * out.w * out.c);
    for f in 0..spec.filters {
        for oy in 0..out.h {
            for ox in 0..out.w {
                let mut acc = 0.0f32;
                for c in 0..inp.c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let w = 1.0 * kernel[((f * inp.c + c) * k + ky) * k + kx];
                            let y = (oy * s + ky) as isize - pad;
                            let x = (ox * s + kx) as isize - pad;
                            let v = if y < 0 || x < 0 || y >= inp.h as isize || x >= inp.w as isize {
                                0.0
                            } else {
                                input.at(c, y as usize, x as usize)
                            };
                            acc += w * v;
                        }
                    }
                }
                let mut v = match bn {
                    Some(bn) => (acc - bn.mean[f]) / (bn.variance[f].sqrt() + 0.000001) * bn.scales[f] + biases[f],
                    None => acc + biases[f],
                };
                if spec.activation == Activation::Leaky {
                    v = leaky(v);
                }
                data.push(v);
            }
        }
    }
    Tensor { shape: out, data }
}
