//! Fetch-by-fetch simulation of the output-stationary dataflow.
//!
//! 3x3 kernels: a band of `k` input rows slides down the unpadded input one
//! row at a time. At each band position the whole filter bank is streamed in
//! and the band is swept left to right, fetching one `k x c` column slice
//! per column. Stride-2 sweeps also fetch the single left zero-pad column
//! that aligns even-sized downsampling windows. 1x1 kernels use one-row
//! bands. Every output element is written once and never read back.

use wshare::netdef::LayerSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Fetches {
    pub weights: u64,
    pub inputs: u64,
    pub outputs: u64,
}

pub fn simulate_conv(layer: &LayerSpec) -> Fetches {
    let spec = layer.conv().expect("convolutional layer");
    let (k, c, f) = (spec.kernel, layer.in_shape.c, spec.filters);
    let (ih, iw) = (layer.in_shape.h, layer.in_shape.w);
    let mut n = Fetches::default();
    let band_positions = ih + 1 - k;
    let sweep_columns = if spec.stride == 2 { iw + 1 } else { iw };
    for _band in 0..band_positions {
        for _f in 0..f {
            for _c in 0..c {
                for _tap in 0..k * k {
                    n.weights += 1;
                }
            }
        }
        for _col in 0..sweep_columns {
            for _row in 0..k {
                for _c in 0..c {
                    n.inputs += 1;
                }
            }
        }
    }
    let out = layer.out_shape;
    for _ in 0..out.h * out.w * out.c {
        n.outputs += 1;
    }
    n
}
