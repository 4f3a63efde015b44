//! Post-training weight clustering: k-means codebooks, word-aligned index
//! streams, the `CWTS` container and Darknet `.weights` I/O.
//!
//! Only convolution kernels are clustered. Biases and batch-norm parameters
//! stay full precision in the source weights file.

mod container;
mod darknet;
mod kmeans;
mod packing;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use container::{read_clustered, write_clustered, CWTS_MAGIC, CWTS_VERSION, GLOBAL_LAYER_ID};
pub use darknet::{read_darknet_weights, write_darknet_weights, BatchNorm, ConvParams, DarknetHeader, DarknetWeights};
pub use kmeans::{kmeans_1d, Init, KMeansConfig, KMeansResult};
pub use packing::{pack_indices, unpack_indices, IndexSource, PackedIndices, PackedSlice};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cluster count must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("index width of {0} bits is not supported")]
    InvalidBits(u32),
    #[error("cannot cluster an empty value set")]
    EmptyInput,
    #[error("value at position {position} is not finite")]
    NonFinite { position: usize },
    #[error("no convolution weights to cluster")]
    NoLayers,
    #[error("index {index} at position {position} is out of range (limit {limit})")]
    IndexOutOfRange { position: usize, index: u32, limit: u32 },
    #[error("truncated input at byte offset {offset}: need {needed} more bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("bad magic {found:?} at byte offset 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid scope byte {value} at offset {offset}")]
    BadScope { offset: usize, value: u8 },
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    BadCrc { stored: u32, computed: u32 },
    #[error("nonzero padding bits in word at byte offset {offset}")]
    CorruptPadding { offset: usize },
    #[error("{trailing} unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, trailing: usize },
    #[error("layer {layer}: {msg}")]
    Layer { layer: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, ClusterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// One codebook shared by every layer.
    AllLayers,
    /// One codebook per convolution layer.
    PerLayer,
}

impl Scope {
    pub fn code(self) -> u8 {
        match self {
            Scope::AllLayers => 0,
            Scope::PerLayer => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Scope::AllLayers),
            1 => Some(Scope::PerLayer),
            _ => None,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::AllLayers => "all-layers",
            Scope::PerLayer => "per-layer",
        })
    }
}

impl std::str::FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all-layers" | "all_layers" | "global" => Ok(Scope::AllLayers),
            "per-layer" | "per_layer" | "local" => Ok(Scope::PerLayer),
            other => Err(format!("unknown scope `{other}` (expected all-layers or per-layer)")),
        }
    }
}

/// Codebook of 32-bit float centroids, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentroidTable(Vec<f32>);

impl CentroidTable {
    pub fn new(mut centroids: Vec<f32>) -> Self {
        centroids.sort_by(f32::total_cmp);
        CentroidTable(centroids)
    }

    /// Wraps centroids as stored, without reordering.
    pub fn from_stored(centroids: Vec<f32>) -> Self {
        CentroidTable(centroids)
    }

    pub fn centroids(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterConfig {
    pub scope: Scope,
    /// Index width; the codebook has at most `2^bits` entries.
    pub bits: u8,
    pub kmeans: KMeansConfig,
}

impl ClusterConfig {
    pub fn new(scope: Scope, bits: u8) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(ClusterError::InvalidBits(bits as u32));
        }
        Ok(ClusterConfig { scope, bits, kmeans: KMeansConfig::default() })
    }

    pub fn k(&self) -> usize {
        1 << self.bits
    }
}

/// One codebook and the indices it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    /// Network layer index, or `None` for the shared all-layers table.
    pub layer: Option<u32>,
    pub table: CentroidTable,
    pub indices: PackedIndices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredModel {
    pub scope: Scope,
    pub bits: u8,
    pub tables: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableStats {
    pub layer: Option<u32>,
    pub weights: usize,
    pub centroids: usize,
    pub sse: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub model: ClusteredModel,
    pub stats: Vec<TableStats>,
}

impl ClusterOutcome {
    pub fn total_sse(&self) -> f64 {
        self.stats.iter().map(|s| s.sse).sum()
    }
}

/// Convolution kernel weights of one layer, keyed by network layer index.
#[derive(Debug, Clone, Copy)]
pub struct LayerWeights<'a> {
    pub layer: usize,
    pub weights: &'a [f32],
}

fn fit(layer: Option<u32>, values: &[f32], cfg: &ClusterConfig) -> Result<(TableEntry, TableStats)> {
    let r = kmeans_1d(values, cfg.k(), &cfg.kmeans)?;
    let indices = pack_indices(&r.assignments, cfg.bits)?;
    let stats = TableStats {
        layer,
        weights: values.len(),
        centroids: r.table.len(),
        sse: r.sse,
        iterations: r.iterations,
    };
    Ok((TableEntry { layer, table: r.table, indices }, stats))
}

/// Clusters convolution kernels either with one shared codebook or one per
/// layer. Layers are concatenated in the given order for the shared case.
pub fn cluster_model(layers: &[LayerWeights<'_>], cfg: &ClusterConfig) -> Result<ClusterOutcome> {
    if layers.iter().all(|l| l.weights.is_empty()) {
        return Err(ClusterError::NoLayers);
    }
    let (tables, stats): (Vec<_>, Vec<_>) = match cfg.scope {
        Scope::AllLayers => {
            let all: Vec<f32> = layers.iter().flat_map(|l| l.weights.iter().copied()).collect();
            let (t, s) = fit(None, &all, cfg)?;
            (vec![t], vec![s])
        }
        Scope::PerLayer => {
            // Layers are independent; fit them on scoped threads.
            let results: Vec<Result<(TableEntry, TableStats)>> = std::thread::scope(|s| {
                let handles: Vec<_> = layers
                    .iter()
                    .filter(|l| !l.weights.is_empty())
                    .map(|l| s.spawn(move || fit(Some(l.layer as u32), l.weights, cfg)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("clustering thread panicked")).collect()
            });
            results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip()
        }
    };
    Ok(ClusterOutcome { model: ClusteredModel { scope: cfg.scope, bits: cfg.bits, tables }, stats })
}

/// `centroids[index]` for every index of the stream.
pub fn dequantize(table: &CentroidTable, indices: &impl IndexSource) -> Result<Vec<f32>> {
    let c = table.centroids();
    (0..indices.len())
        .map(|j| {
            let i = indices.index(j);
            c.get(i as usize)
                .copied()
                .ok_or(ClusterError::IndexOutOfRange { position: j, index: i, limit: c.len() as u32 })
        })
        .collect()
}

impl ClusteredModel {
    pub fn total_indices(&self) -> usize {
        self.tables.iter().map(|t| t.indices.len()).sum()
    }

    /// Codebook and index view of one layer. `layout` lists `(layer, weight
    /// count)` for every clustered layer in the order used at clustering time.
    pub fn layer_view(&self, layout: &[(usize, usize)], layer: usize) -> Result<(&CentroidTable, PackedSlice<'_>)> {
        let missing = || ClusterError::Layer { layer, msg: "layer is not part of the clustered model".into() };
        match self.scope {
            Scope::PerLayer => {
                let entry = self.tables.iter().find(|t| t.layer == Some(layer as u32)).ok_or_else(missing)?;
                Ok((&entry.table, PackedSlice::new(&entry.indices, 0, entry.indices.len())))
            }
            Scope::AllLayers => {
                let entry = self.tables.first().ok_or_else(missing)?;
                let mut offset = 0;
                for &(l, n) in layout {
                    if l == layer {
                        if offset + n > entry.indices.len() {
                            return Err(ClusterError::Layer { layer, msg: "index stream shorter than layout".into() });
                        }
                        return Ok((&entry.table, PackedSlice::new(&entry.indices, offset, n)));
                    }
                    offset += n;
                }
                Err(missing())
            }
        }
    }

    /// Dequantized kernels for every layer of `layout`.
    pub fn dequantize_layers(&self, layout: &[(usize, usize)]) -> Result<Vec<Vec<f32>>> {
        layout
            .iter()
            .map(|&(layer, n)| {
                let (table, view) = self.layer_view(layout, layer)?;
                if view.len() != n {
                    return Err(ClusterError::Layer {
                        layer,
                        msg: format!("expected {n} indices, model holds {}", view.len()),
                    });
                }
                dequantize(table, &view)
            })
            .collect()
    }
}
