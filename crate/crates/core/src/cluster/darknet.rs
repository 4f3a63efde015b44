//! Darknet `.weights` files.
//!
//! Header: `major`, `minor`, `revision` as `i32`, then `seen` as `u64` when
//! `major * 10 + minor >= 2` and `u32` otherwise. Each convolution layer then
//! stores `biases[f]`, optionally `scales[f]`, `mean[f]`, `variance[f]` when
//! batch-normalized, and finally `kernel[f * c * k * k]`, all `f32`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ClusterError, ClusteredModel, LayerWeights, Result};
use crate::netdef::NetworkDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DarknetHeader {
    pub major: i32,
    pub minor: i32,
    pub revision: i32,
    pub seen: u64,
}

impl DarknetHeader {
    fn wide_seen(&self) -> bool {
        self.major * 10 + self.minor >= 2
    }

    pub fn byte_len(&self) -> usize {
        if self.wide_seen() {
            20
        } else {
            16
        }
    }
}

impl Default for DarknetHeader {
    fn default() -> Self {
        DarknetHeader { major: 0, minor: 2, revision: 0, seen: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scales: Vec<f32>,
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// Network layer index.
    pub layer: usize,
    pub biases: Vec<f32>,
    pub batch_norm: Option<BatchNorm>,
    /// `[filter][channel][row][col]` order.
    pub kernel: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarknetWeights {
    pub header: DarknetHeader,
    /// One entry per convolution layer, in execution order.
    pub convs: Vec<ConvParams>,
}

fn f32s(bytes: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f32>> {
    let need = n * 4;
    let available = bytes.len() - *pos;
    if need > available {
        return Err(ClusterError::Truncated { offset: *pos, needed: need, available });
    }
    let out = bytes[*pos..*pos + need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *pos += need;
    Ok(out)
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let available = bytes.len() - *pos;
    if available < 4 {
        return Err(ClusterError::Truncated { offset: *pos, needed: 4, available });
    }
    let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
    *pos += 4;
    Ok(v)
}

/// Reads a weights file laid out for `net`. The file must end exactly after
/// the last convolution layer.
pub fn read_darknet_weights(bytes: &[u8], net: &NetworkDef) -> Result<DarknetWeights> {
    let mut pos = 0;
    let major = read_u32(bytes, &mut pos)? as i32;
    let minor = read_u32(bytes, &mut pos)? as i32;
    let revision = read_u32(bytes, &mut pos)? as i32;
    let mut header = DarknetHeader { major, minor, revision, seen: 0 };
    header.seen = if header.wide_seen() {
        let lo = read_u32(bytes, &mut pos)? as u64;
        let hi = read_u32(bytes, &mut pos)? as u64;
        lo | hi << 32
    } else {
        read_u32(bytes, &mut pos)? as u64
    };

    let convs = net
        .conv_layers()
        .map(|(idx, l, c)| {
            let f = c.filters;
            let biases = f32s(bytes, &mut pos, f)?;
            let batch_norm = if c.batch_normalize {
                Some(BatchNorm {
                    scales: f32s(bytes, &mut pos, f)?,
                    mean: f32s(bytes, &mut pos, f)?,
                    variance: f32s(bytes, &mut pos, f)?,
                })
            } else {
                None
            };
            let kernel = f32s(bytes, &mut pos, c.weight_count(l.in_shape.c))?;
            Ok(ConvParams { layer: idx, biases, batch_norm, kernel })
        })
        .collect::<Result<Vec<_>>>()?;
    if pos != bytes.len() {
        return Err(ClusterError::TrailingBytes { offset: pos, trailing: bytes.len() - pos });
    }
    Ok(DarknetWeights { header, convs })
}

pub fn write_darknet_weights(w: &DarknetWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(w.header.byte_len() + 4 * w.parameter_count());
    out.extend_from_slice(&w.header.major.to_le_bytes());
    out.extend_from_slice(&w.header.minor.to_le_bytes());
    out.extend_from_slice(&w.header.revision.to_le_bytes());
    if w.header.wide_seen() {
        out.extend_from_slice(&w.header.seen.to_le_bytes());
    } else {
        out.extend_from_slice(&(w.header.seen as u32).to_le_bytes());
    }
    let mut put = |v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    for c in &w.convs {
        put(&c.biases);
        if let Some(bn) = &c.batch_norm {
            put(&bn.scales);
            put(&bn.mean);
            put(&bn.variance);
        }
        put(&c.kernel);
    }
    out
}

impl DarknetWeights {
    pub fn parameter_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.biases.len() + c.batch_norm.as_ref().map_or(0, |b| 3 * b.scales.len()) + c.kernel.len())
            .sum()
    }

    /// Kernel weights of every convolution layer, for clustering.
    pub fn kernels(&self) -> Vec<LayerWeights<'_>> {
        self.convs.iter().map(|c| LayerWeights { layer: c.layer, weights: &c.kernel }).collect()
    }

    /// `(layer, kernel weight count)` in execution order.
    pub fn layout(&self) -> Vec<(usize, usize)> {
        self.convs.iter().map(|c| (c.layer, c.kernel.len())).collect()
    }

    /// Copy with every kernel replaced by its clustered reconstruction.
    pub fn with_clustered_kernels(&self, model: &ClusteredModel) -> Result<DarknetWeights> {
        let kernels = model.dequantize_layers(&self.layout())?;
        let convs = self
            .convs
            .iter()
            .zip(kernels)
            .map(|(c, kernel)| ConvParams { kernel, ..c.clone() })
            .collect();
        Ok(DarknetWeights { header: self.header, convs })
    }

    /// Deterministic stand-in weights: He-scaled Gaussian kernels, small
    /// biases and mildly perturbed batch-norm statistics.
    pub fn synthetic(net: &NetworkDef, seed: u64) -> DarknetWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0f32, 1.0).unwrap();
        let convs = net
            .conv_layers()
            .map(|(idx, l, c)| {
                let f = c.filters;
                let fan_in = (l.in_shape.c * c.kernel * c.kernel) as f32;
                let std = (2.0 / fan_in).sqrt();
                let kernel = (0..c.weight_count(l.in_shape.c)).map(|_| std * unit.sample(&mut rng)).collect();
                let biases = (0..f).map(|_| 0.01 * unit.sample(&mut rng)).collect();
                let batch_norm = c.batch_normalize.then(|| BatchNorm {
                    scales: (0..f).map(|_| 1.0 + 0.1 * unit.sample(&mut rng)).collect(),
                    mean: (0..f).map(|_| 0.05 * unit.sample(&mut rng)).collect(),
                    variance: (0..f).map(|_| 1.0 + 0.1 * unit.sample(&mut rng).abs()).collect(),
                });
                ConvParams { layer: idx, biases, batch_norm, kernel }
            })
            .collect();
        DarknetWeights { header: DarknetHeader::default(), convs }
    }
}
