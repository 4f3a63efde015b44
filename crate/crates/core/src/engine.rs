//! Reference inference engine.
//!
//! Deliberately naive: convolution is im2col followed by a GEMM whose loop
//! nest is fixed to `(i, k, j)` with `A_PART = alpha * A[i][k]` hoisted, and
//! no fused multiply-add. The clustered GEMM differs only in fetching
//! `A[i][k]` through `centroids[indexes[i * lda + k]]`, so both produce
//! bitwise-identical results on the same effective weights.

use thiserror::Error;

use crate::cluster::{ClusterError, ClusteredModel, DarknetWeights, IndexSource, PackedSlice};
use crate::netdef::{Activation, LayerKind, LayerSpec, NetworkDef, TensorShape};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} at position {position} exceeds table of {table} centroids")]
    IndexOutOfRange { position: usize, index: u32, table: usize },
    #[error("layer {layer}: expected shape {expected}, got {actual}")]
    ShapeMismatch { layer: usize, expected: TensorShape, actual: TensorShape },
    #[error("layer {layer}: no weights supplied")]
    MissingWeights { layer: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Row-major `f32` matrix with an explicit leading dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    ld: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, ld: cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_ld(rows, cols, cols, data)
    }

    /// `data.len()` must cover `rows` rows of stride `ld`.
    pub fn with_ld(rows: usize, cols: usize, ld: usize, data: Vec<f32>) -> Result<Self> {
        if ld < cols {
            return Err(EngineError::Dimension(format!("leading dimension {ld} < cols {cols}")));
        }
        let need = if rows == 0 { 0 } else { (rows - 1) * ld + cols };
        if data.len() < need {
            return Err(EngineError::Dimension(format!("storage of {} < required {need}", data.len())));
        }
        Ok(Matrix { rows, cols, ld, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ld(&self) -> usize {
        self.ld
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.ld + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.ld + j] = v;
    }
}

fn check_gemm(m: usize, k: usize, b: &Matrix, c: &Matrix) -> Result<()> {
    if b.rows != k || c.rows != m || c.cols != b.cols {
        return Err(EngineError::Dimension(format!(
            "A is {m}x{k}, B is {}x{}, C is {}x{}",
            b.rows, b.cols, c.rows, c.cols
        )));
    }
    Ok(())
}

/// `C += alpha * A * B` in `(i, k, j)` order.
pub fn gemm_nn(alpha: f32, a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<()> {
    check_gemm(a.rows, a.cols, b, c)?;
    let (n, lda, ldb, ldc) = (b.cols, a.ld, b.ld, c.ld);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let a_part = alpha * a.data[i * lda + k];
            for j in 0..n {
                c.data[i * ldc + j] += a_part * b.data[k * ldb + j];
            }
        }
    }
    Ok(())
}

/// Logical `m x k` matrix of centroid indices with leading dimension `lda`.
#[derive(Debug, Clone, Copy)]
pub struct IndexLayout {
    pub m: usize,
    pub k: usize,
    pub lda: usize,
}

/// [`gemm_nn`] with `A[i][k]` read as `centroids[indexes[i * lda + k]]`.
///
/// Every referenced index is checked against the table before any
/// arithmetic, so `C` is untouched on error.
pub fn gemm_nn_centroids<I: IndexSource + ?Sized>(
    alpha: f32,
    centroids: &[f32],
    indexes: &I,
    layout: IndexLayout,
    b: &Matrix,
    c: &mut Matrix,
) -> Result<()> {
    let IndexLayout { m, k, lda } = layout;
    check_gemm(m, k, b, c)?;
    if lda < k || (m > 0 && (m - 1) * lda + k > indexes.len()) {
        return Err(EngineError::Dimension(format!(
            "index stream of {} cannot hold {m}x{k} at lda {lda}",
            indexes.len()
        )));
    }
    for i in 0..m {
        for kk in 0..k {
            let p = i * lda + kk;
            let idx = indexes.index(p);
            if idx as usize >= centroids.len() {
                return Err(EngineError::IndexOutOfRange { position: p, index: idx, table: centroids.len() });
            }
        }
    }
    let (n, ldb, ldc) = (b.cols, b.ld, c.ld);
    for i in 0..m {
        for kk in 0..k {
            let a_part = alpha * centroids[indexes.index(i * lda + kk) as usize];
            for j in 0..n {
                c.data[i * ldc + j] += a_part * b.data[kk * ldb + j];
            }
        }
    }
    Ok(())
}

/// Feature map stored channel-major (`[c][h][w]`), as in Darknet.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: TensorShape,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: TensorShape) -> Self {
        Tensor { shape, data: vec![0.0; shape.elements() as usize] }
    }

    pub fn from_vec(shape: TensorShape, data: Vec<f32>) -> Result<Self> {
        if data.len() as u64 != shape.elements() {
            return Err(EngineError::Dimension(format!("{} values for shape {shape}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.h + y) * self.shape.w + x]
    }
}

/// Unrolls `input` into a `(c * k * k) x (oh * ow)` matrix; padded taps are 0.
pub fn im2col(input: &Tensor, kernel: usize, stride: usize, pad: usize, out: TensorShape) -> Matrix {
    let TensorShape { h, w, c } = input.shape;
    let cols = out.h * out.w;
    let mut m = Matrix::zeros(c * kernel * kernel, cols);
    for ch in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ch * kernel + ky) * kernel + kx;
                for oy in 0..out.h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    for ox in 0..out.w {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            m.data[row * cols + oy * out.w + ox] = input.at(ch, iy as usize, ix as usize);
                        }
                    }
                }
            }
        }
    }
    m
}

/// Kernel source for one convolution layer.
#[derive(Clone, Copy)]
pub enum Kernel<'a> {
    Dense(&'a [f32]),
    Clustered { centroids: &'a [f32], indices: &'a dyn IndexSource },
}

/// Per-filter epilogue parameters taken from the weights file.
#[derive(Debug, Clone, Copy)]
pub struct Epilogue<'a> {
    pub biases: &'a [f32],
    pub batch_norm: Option<&'a crate::cluster::BatchNorm>,
}

#[inline]
pub fn leaky(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        0.1 * x
    }
}

/// One convolution layer: im2col, GEMM, batch-norm or bias, activation.
pub fn conv_forward(layer: &LayerSpec, input: &Tensor, kernel: Kernel<'_>, epi: Epilogue<'_>) -> Result<Tensor> {
    let spec = layer
        .conv()
        .ok_or_else(|| EngineError::Dimension("conv_forward on a non-convolutional layer".into()))?;
    if input.shape != layer.in_shape {
        return Err(EngineError::ShapeMismatch { layer: 0, expected: layer.in_shape, actual: input.shape });
    }
    let out = layer.out_shape;
    let f = spec.filters;
    let kk = layer.in_shape.c * spec.kernel * spec.kernel;
    if epi.biases.len() != f {
        return Err(EngineError::Dimension(format!("{} biases for {f} filters", epi.biases.len())));
    }
    let cols = im2col(input, spec.kernel, spec.stride, spec.pad, out);
    let mut c = Matrix::zeros(f, out.h * out.w);
    match kernel {
        Kernel::Dense(w) => {
            if w.len() != f * kk {
                return Err(EngineError::Dimension(format!("{} kernel weights, expected {}", w.len(), f * kk)));
            }
            let a = Matrix::from_vec(f, kk, w.to_vec())?;
            gemm_nn(1.0, &a, &cols, &mut c)?;
        }
        Kernel::Clustered { centroids, indices } => {
            if indices.len() != f * kk {
                return Err(EngineError::Dimension(format!("{} indices, expected {}", indices.len(), f * kk)));
            }
            gemm_nn_centroids(1.0, centroids, indices, IndexLayout { m: f, k: kk, lda: kk }, &cols, &mut c)?;
        }
    }
    let spatial = out.h * out.w;
    let mut data = c.data;
    for (fi, row) in data.chunks_mut(spatial).enumerate() {
        match epi.batch_norm {
            Some(bn) => {
                let denom = bn.variance[fi].sqrt() + 0.000001;
                for x in row.iter_mut() {
                    *x = (*x - bn.mean[fi]) / denom * bn.scales[fi] + epi.biases[fi];
                }
            }
            None => row.iter_mut().for_each(|x| *x += epi.biases[fi]),
        }
        if spec.activation == Activation::Leaky {
            row.iter_mut().for_each(|x| *x = leaky(*x));
        }
    }
    Tensor::from_vec(out, data)
}

/// Source of convolution kernels for [`run_network`].
#[derive(Clone, Copy)]
pub enum Kernels<'a> {
    /// Kernels from the weights file itself.
    Dense,
    /// Kernels fetched through a clustered model's codebooks.
    Clustered(&'a ClusteredModel),
}

/// Runs every layer in order and returns each layer's output. YOLO layers
/// pass their input through unchanged.
pub fn run_network(net: &NetworkDef, weights: &DarknetWeights, kernels: Kernels<'_>, input: &Tensor) -> Result<Vec<Tensor>> {
    if input.shape != net.input {
        return Err(EngineError::ShapeMismatch { layer: 0, expected: net.input, actual: input.shape });
    }
    let layout = weights.layout();
    let mut outs: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    for (idx, layer) in net.layers.iter().enumerate() {
        let prev = if idx == 0 { input } else { &outs[idx - 1] };
        let out = match &layer.kind {
            LayerKind::Convolutional(_) => {
                let params = weights
                    .convs
                    .iter()
                    .find(|p| p.layer == idx)
                    .ok_or(EngineError::MissingWeights { layer: idx })?;
                let epi = Epilogue { biases: &params.biases, batch_norm: params.batch_norm.as_ref() };
                let res = match kernels {
                    Kernels::Dense => conv_forward(layer, prev, Kernel::Dense(&params.kernel), epi),
                    Kernels::Clustered(model) => {
                        let (table, view): (_, PackedSlice<'_>) = model.layer_view(&layout, idx)?;
                        conv_forward(layer, prev, Kernel::Clustered { centroids: table.centroids(), indices: &view }, epi)
                    }
                };
                res.map_err(|e| match e {
                    EngineError::ShapeMismatch { expected, actual, .. } => {
                        EngineError::ShapeMismatch { layer: idx, expected, actual }
                    }
                    e => e,
                })?
            }
            LayerKind::Shortcut { from } => {
                let other = &outs[*from];
                let data = prev.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
                Tensor { shape: prev.shape, data }
            }
            LayerKind::Route { sources } => {
                let data = sources.iter().flat_map(|&s| outs[s].data.iter().copied()).collect();
                Tensor { shape: layer.out_shape, data }
            }
            LayerKind::Upsample { factor } => {
                let s = *factor;
                let TensorShape { h, w, c } = layer.out_shape;
                let mut data = Vec::with_capacity(h * w * c);
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            data.push(prev.at(ch, y / s, x / s));
                        }
                    }
                }
                Tensor { shape: layer.out_shape, data }
            }
            LayerKind::Yolo(_) => prev.clone(),
        };
        if out.shape != layer.out_shape || out.data.len() as u64 != layer.out_shape.elements() {
            return Err(EngineError::ShapeMismatch { layer: idx, expected: layer.out_shape, actual: out.shape });
        }
        outs.push(out);
    }
    Ok(outs)
}

/// Outputs of the YOLO layers, or of the last layer when there are none.
pub fn head_outputs<'a>(net: &NetworkDef, outs: &'a [Tensor]) -> Vec<&'a Tensor> {
    let heads: Vec<&Tensor> = net
        .layers
        .iter()
        .zip(outs)
        .filter(|(l, _)| matches!(l.kind, LayerKind::Yolo(_)))
        .map(|(_, t)| t)
        .collect();
    if heads.is_empty() {
        outs.last().into_iter().collect()
    } else {
        heads
    }
}

/// Mean squared difference between two equally shaped output sets.
pub fn output_mse<'a>(a: impl IntoIterator<Item = &'a Tensor>, b: impl IntoIterator<Item = &'a Tensor>) -> f64 {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (x, y) in a.into_iter().zip(b) {
        for (p, q) in x.data.iter().zip(&y.data) {
            let d = *p as f64 - *q as f64;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
