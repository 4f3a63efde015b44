//! Per-layer DRAM element-access and floating-point operation counts for an
//! output-stationary accelerator.
//!
//! Partial sums stay in the PE register files until final, so convolution
//! outputs are written exactly once and never read back. Weights are
//! re-streamed for every output row. Counts are in 32-bit elements; the
//! conversion to bus accesses lives in [`crate::energy`].

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::Serialize;
use thiserror::Error;

use crate::netdef::{Activation, LayerKind, LayerSpec, NetworkDef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("layer {layer}: no access model for {kernel}x{kernel} kernels with stride {stride}")]
    UnsupportedConv { layer: usize, kernel: usize, stride: usize },
    #[error("layer {layer} is not a convolution")]
    NotConvolution { layer: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AccessProfile {
    pub weight_reads: u64,
    pub input_reads: u64,
    pub output_reads: u64,
    pub output_writes: u64,
}

impl AccessProfile {
    pub fn total(&self) -> u64 {
        self.weight_reads + self.input_reads + self.output_reads + self.output_writes
    }

    pub fn reads(&self) -> u64 {
        self.weight_reads + self.input_reads + self.output_reads
    }

    /// Shares of (weights, inputs, outputs) in the total; outputs include
    /// both reads and writes.
    pub fn split(&self) -> AccessSplit {
        let t = self.total() as f64;
        if t == 0.0 {
            return AccessSplit::default();
        }
        AccessSplit {
            weights: self.weight_reads as f64 / t,
            inputs: self.input_reads as f64 / t,
            outputs: (self.output_reads + self.output_writes) as f64 / t,
        }
    }
}

impl Add for AccessProfile {
    type Output = AccessProfile;
    fn add(self, o: AccessProfile) -> AccessProfile {
        AccessProfile {
            weight_reads: self.weight_reads + o.weight_reads,
            input_reads: self.input_reads + o.input_reads,
            output_reads: self.output_reads + o.output_reads,
            output_writes: self.output_writes + o.output_writes,
        }
    }
}

impl AddAssign for AccessProfile {
    fn add_assign(&mut self, o: AccessProfile) {
        *self = *self + o;
    }
}

impl Sum for AccessProfile {
    fn sum<I: Iterator<Item = AccessProfile>>(iter: I) -> Self {
        iter.fold(AccessProfile::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AccessSplit {
    pub weights: f64,
    pub inputs: f64,
    pub outputs: f64,
}

/// Where shortcut operand reads are accounted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShortcutBucketing {
    /// Both operand maps are input reads.
    #[default]
    BothInputs,
    /// Previous layer's map is an input read; the earlier `from` map is an
    /// output read (a re-read of a produced feature map).
    SplitOperands,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficOptions {
    pub shortcut: ShortcutBucketing,
    /// Use `params * O_h` weight streaming for kernel/stride pairs outside the
    /// three modeled filter types instead of failing.
    pub generalized_fallback: bool,
}

/// Access counts of a convolution layer.
///
/// Modeled filter types: 3x3 stride 1, 3x3 stride 2 and 1x1 stride 1. Both
/// 3x3 variants stream the filter bank `I_h - 2` times.
pub fn conv_accesses(layer: &LayerSpec, opts: &TrafficOptions) -> Result<AccessProfile, TrafficError> {
    conv_accesses_at(usize::MAX, layer, opts)
}

fn conv_accesses_at(index: usize, layer: &LayerSpec, opts: &TrafficOptions) -> Result<AccessProfile, TrafficError> {
    let conv = layer.conv().ok_or(TrafficError::NotConvolution { layer: index })?;
    let (ih, iw, ic) = (layer.in_shape.h as u64, layer.in_shape.w as u64, layer.in_shape.c as u64);
    let (k, f) = (conv.kernel as u64, conv.filters as u64);
    let params = k * k * ic * f;
    let output_writes = layer.out_shape.elements();
    let (weight_reads, input_reads) = match (conv.kernel, conv.stride) {
        (3, 1) => (params * ih.saturating_sub(2), iw * k * ic * ih.saturating_sub(2)),
        (3, 2) => (params * ih.saturating_sub(2), (iw + 1) * k * ic * ih.saturating_sub(2)),
        (1, 1) => (params * ih, iw * k * ic * ih),
        _ if opts.generalized_fallback => {
            let oh = layer.out_shape.h as u64;
            (params * oh, iw * k * ic * oh)
        }
        (kernel, stride) => return Err(TrafficError::UnsupportedConv { layer: index, kernel, stride }),
    };
    Ok(AccessProfile { weight_reads, input_reads, output_reads: 0, output_writes })
}

/// Access counts of the non-convolution layer at `index`.
pub fn other_layer_accesses(net: &NetworkDef, index: usize, opts: &TrafficOptions) -> AccessProfile {
    let layer = &net.layers[index];
    let n_in = layer.in_shape.elements();
    match &layer.kind {
        LayerKind::Convolutional(_) => AccessProfile::default(),
        LayerKind::Shortcut { from } => {
            let n_from = net.layers[*from].out_shape.elements();
            let (input_reads, output_reads) = match opts.shortcut {
                ShortcutBucketing::BothInputs => (n_in + n_from, 0),
                ShortcutBucketing::SplitOperands => (n_in, n_from),
            };
            AccessProfile { weight_reads: 0, input_reads, output_reads, output_writes: n_in + n_from }
        }
        LayerKind::Route { sources } => {
            let n: u64 = sources.iter().map(|&s| net.layers[s].out_shape.elements()).sum();
            AccessProfile { output_reads: n, output_writes: n, ..Default::default() }
        }
        LayerKind::Upsample { .. } => AccessProfile { input_reads: n_in, output_writes: 4 * n_in, ..Default::default() },
        LayerKind::Yolo(_) => AccessProfile { input_reads: n_in, output_writes: n_in, ..Default::default() },
    }
}

pub fn layer_accesses(net: &NetworkDef, index: usize, opts: &TrafficOptions) -> Result<AccessProfile, TrafficError> {
    let layer = &net.layers[index];
    match layer.kind {
        LayerKind::Convolutional(_) => conv_accesses_at(index, layer, opts),
        _ => Ok(other_layer_accesses(net, index, opts)),
    }
}

/// Per-layer profiles and their element-wise sum.
pub fn aggregate(net: &NetworkDef, opts: &TrafficOptions) -> Result<(Vec<AccessProfile>, AccessProfile), TrafficError> {
    let per_layer = (0..net.layers.len())
        .map(|i| layer_accesses(net, i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let total = per_layer.iter().copied().sum();
    Ok((per_layer, total))
}

/// `O_w * O_h * W_w * W_h * W_c * W_f`; zero for non-convolution layers.
pub fn conv_macs(layer: &LayerSpec) -> u64 {
    match layer.conv() {
        Some(c) => {
            layer.out_shape.h as u64
                * layer.out_shape.w as u64
                * (c.kernel * c.kernel) as u64
                * layer.in_shape.c as u64
                * c.filters as u64
        }
        None => 0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpProfile {
    pub macs: u64,
    pub fp_add: u64,
    pub fp_sub: u64,
    pub fp_mul: u64,
    pub fp_div: u64,
    pub fp_exp: u64,
    pub fp_sqrt: u64,
}

impl OpProfile {
    pub fn non_mac(&self) -> u64 {
        self.fp_add + self.fp_sub + self.fp_mul + self.fp_div + self.fp_exp + self.fp_sqrt
    }

    /// Total FP operations, each MAC counted once.
    pub fn total(&self) -> u64 {
        self.macs + self.non_mac()
    }

    pub fn mac_share(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.macs as f64 / t as f64
        }
    }
}

impl Add for OpProfile {
    type Output = OpProfile;
    fn add(self, o: OpProfile) -> OpProfile {
        OpProfile {
            macs: self.macs + o.macs,
            fp_add: self.fp_add + o.fp_add,
            fp_sub: self.fp_sub + o.fp_sub,
            fp_mul: self.fp_mul + o.fp_mul,
            fp_div: self.fp_div + o.fp_div,
            fp_exp: self.fp_exp + o.fp_exp,
            fp_sqrt: self.fp_sqrt + o.fp_sqrt,
        }
    }
}

/// Analytical operation census of one layer.
///
/// Batch-norm is folded into the weights offline and costs nothing at run
/// time. Leaky activation is a compare (priced as a subtraction) and a
/// multiply per output. A YOLO head applies a logistic (exp, add, div) to
/// box centres, objectness and class scores, and an exp plus a multiply by
/// the anchor to the two box-size terms.
pub fn layer_ops(net: &NetworkDef, index: usize) -> OpProfile {
    let layer = &net.layers[index];
    let n_out = layer.out_shape.elements();
    match &layer.kind {
        LayerKind::Convolutional(c) => {
            let mut ops = OpProfile { macs: conv_macs(layer), ..Default::default() };
            if c.activation == Activation::Leaky {
                ops.fp_sub = n_out;
                ops.fp_mul = n_out;
            }
            ops
        }
        LayerKind::Shortcut { .. } => OpProfile { fp_add: n_out, ..Default::default() },
        LayerKind::Route { .. } | LayerKind::Upsample { .. } => OpProfile::default(),
        LayerKind::Yolo(y) => {
            let cells = (layer.in_shape.h * layer.in_shape.w) as u64;
            let anchors = y.mask.len() as u64;
            let logistic = cells * anchors * (3 + y.classes as u64);
            let sizes = cells * anchors * 2;
            OpProfile {
                fp_exp: logistic + sizes,
                fp_add: logistic,
                fp_div: logistic,
                fp_mul: sizes,
                ..Default::default()
            }
        }
    }
}

pub fn op_profile(net: &NetworkDef) -> OpProfile {
    (0..net.layers.len()).map(|i| layer_ops(net, i)).fold(OpProfile::default(), Add::add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdef::{parse_config, ConvSpec, TensorShape};

    fn conv_layer(h: usize, w: usize, c: usize, filters: usize, kernel: usize, stride: usize) -> LayerSpec {
        let pad = kernel / 2;
        let net = NetworkDef::from_kinds(
            TensorShape::new(h, w, c),
            vec![LayerKind::Convolutional(ConvSpec {
                filters,
                kernel,
                stride,
                pad,
                batch_normalize: false,
                activation: Activation::Linear,
            })],
        )
        .unwrap();
        net.layers[0].clone()
    }

    #[test]
    fn conv_formulas() {
        let opts = TrafficOptions::default();
        let l = conv_layer(8, 8, 3, 4, 3, 1);
        let p = conv_accesses(&l, &opts).unwrap();
        assert_eq!(p.weight_reads, 648);
        assert_eq!(p.output_writes, 256);
        assert_eq!(p.output_reads, 0);
        assert_eq!(p.input_reads, 8 * 3 * 3 * 6);

        let l = conv_layer(8, 8, 3, 4, 1, 1);
        assert_eq!(conv_accesses(&l, &opts).unwrap().weight_reads, 96);

        let l = conv_layer(8, 8, 3, 4, 3, 2);
        let p = conv_accesses(&l, &opts).unwrap();
        assert_eq!(p.weight_reads, 648);
        assert_eq!(p.input_reads, 9 * 3 * 3 * 6);
        assert_eq!(p.output_writes, 4 * 4 * 4);
    }

    #[test]
    fn unsupported_pair_is_named() {
        let l = conv_layer(8, 8, 3, 4, 5, 1);
        let err = conv_accesses(&l, &TrafficOptions::default()).unwrap_err();
        assert!(matches!(err, TrafficError::UnsupportedConv { kernel: 5, stride: 1, .. }));
        let opts = TrafficOptions { generalized_fallback: true, ..Default::default() };
        let p = conv_accesses(&l, &opts).unwrap();
        assert_eq!(p.weight_reads, 5 * 5 * 3 * 4 * 8);
    }

    #[test]
    fn macs() {
        assert_eq!(conv_macs(&conv_layer(8, 8, 3, 4, 3, 1)), 6912);
        assert_eq!(conv_macs(&conv_layer(19, 19, 1024, 255, 1, 1)), 94_264_320);
        assert_eq!(conv_macs(&conv_layer(1, 1, 1, 1, 1, 1)), 1);
    }

    #[test]
    fn other_layers() {
        let opts = TrafficOptions::default();
        let up = parse_config("[net]\nwidth=19\nheight=19\nchannels=256\n[upsample]\nstride=2\n").unwrap();
        let p = other_layer_accesses(&up, 0, &opts);
        assert_eq!((p.input_reads, p.output_writes), (92_416, 369_664));

        let route = parse_config(
            "[net]\nwidth=19\nheight=19\nchannels=512\n[convolutional]\nfilters=512\nsize=1\nactivation=linear\n[route]\nlayers=-1\n",
        )
        .unwrap();
        let p = other_layer_accesses(&route, 1, &opts);
        assert_eq!((p.reads(), p.output_writes), (184_832, 184_832));
        assert_eq!(p.output_reads, 184_832);

        let yolo = parse_config("[net]\nwidth=76\nheight=76\nchannels=255\n[yolo]\nmask=0,1,2\nclasses=80\nnum=9\n").unwrap();
        let p = other_layer_accesses(&yolo, 0, &opts);
        assert_eq!((p.reads(), p.output_writes), (1_472_880, 1_472_880));
    }

    #[test]
    fn shortcut_bucketing_and_ops() {
        let net = parse_config(
            "[net]\nwidth=4\nheight=4\nchannels=2\n\
             [convolutional]\nfilters=2\nsize=1\nactivation=linear\n\
             [convolutional]\nfilters=2\nsize=1\nactivation=linear\n\
             [shortcut]\nfrom=-2\n",
        )
        .unwrap();
        let both = other_layer_accesses(&net, 2, &TrafficOptions::default());
        assert_eq!((both.input_reads, both.output_reads, both.output_writes), (64, 0, 64));
        let split = other_layer_accesses(
            &net,
            2,
            &TrafficOptions { shortcut: ShortcutBucketing::SplitOperands, ..Default::default() },
        );
        assert_eq!((split.input_reads, split.output_reads, split.output_writes), (32, 32, 64));
        assert_eq!(layer_ops(&net, 2).fp_add, 32);
    }

    #[test]
    fn single_linear_conv_ops() {
        let net = parse_config("[net]\nwidth=2\nheight=2\nchannels=1\n[convolutional]\nfilters=1\nsize=1\nactivation=linear\n").unwrap();
        let ops = op_profile(&net);
        assert_eq!(ops, OpProfile { macs: 4, ..Default::default() });
    }

    #[test]
    fn aggregate_single_layer() {
        let net = parse_config("[net]\nwidth=8\nheight=8\nchannels=3\n[convolutional]\nfilters=4\nsize=3\nstride=1\npad=1\nactivation=leaky\n").unwrap();
        let (per, total) = aggregate(&net, &TrafficOptions::default()).unwrap();
        assert_eq!(per.len(), 1);
        assert_eq!(per[0], total);
    }
}
