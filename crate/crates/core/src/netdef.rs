//! Darknet-style network configuration parsing and shape inference.
//!
//! Only the layer kinds present in the YOLOv3 detection graph are modeled:
//! `convolutional`, `shortcut`, `route`, `upsample` and `yolo`. Training-only
//! keys are ignored; unknown sections are rejected.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetdefError {
    #[error("configuration has no [net] section")]
    NoNetSection,
    #[error("[net] section is missing `{0}`")]
    MissingInput(&'static str),
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: key/value pair outside of any section")]
    OrphanKey { line: usize },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("layer {layer}: `{key}` must be positive, got {value}")]
    NonPositive { layer: usize, key: &'static str, value: i64 },
    #[error("layer {layer}: source index {index} does not refer to an earlier layer")]
    IndexOutOfRange { layer: usize, index: i64 },
    #[error("layer {layer}: route accepts 1 or 2 sources, got {count}")]
    RouteArity { layer: usize, count: usize },
    #[error("layer {layer}: only factor-2 upsampling is modeled, got {factor}")]
    UnsupportedUpsample { layer: usize, factor: i64 },
    #[error("layer {layer}: unsupported activation `{name}`")]
    UnsupportedActivation { layer: usize, name: String },
    #[error("layer {layer}: computed output dimension is not positive")]
    NonPositiveDimension { layer: usize },
    #[error("layer {layer}: route sources have mismatched spatial size {a} vs {b}")]
    RouteShapeMismatch { layer: usize, a: TensorShape, b: TensorShape },
    #[error("layer {layer}: shortcut operands differ in shape {a} vs {b}")]
    ShortcutShapeMismatch { layer: usize, a: TensorShape, b: TensorShape },
    #[error("network has no layers")]
    Empty,
}

pub type Result<T> = std::result::Result<T, NetdefError>;

/// YOLOv3 at 608x608 with 80 classes, as distributed with Darknet.
pub const YOLOV3_608_CFG: &str = include_str!("../data/yolov3.cfg");

/// Feature-map shape: `h` rows, `w` columns, `c` channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TensorShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        TensorShape { h, w, c }
    }

    pub fn elements(&self) -> u64 {
        self.h as u64 * self.w as u64 * self.c as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Leaky,
}

impl Activation {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Activation::Linear),
            "leaky" => Some(Activation::Leaky),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Leaky => "leaky",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConvSpec {
    pub filters: usize,
    /// Square kernel side.
    pub kernel: usize,
    pub stride: usize,
    /// Rows/columns of zero padding on each side.
    pub pad: usize,
    pub batch_normalize: bool,
    pub activation: Activation,
}

impl ConvSpec {
    /// Number of kernel weights for `in_channels` input channels.
    pub fn weight_count(&self, in_channels: usize) -> usize {
        self.filters * in_channels * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YoloSpec {
    pub mask: Vec<usize>,
    pub anchors: Vec<u32>,
    pub classes: usize,
    pub num: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerKind {
    Convolutional(ConvSpec),
    /// Element-wise sum of the previous layer and layer `from`.
    Shortcut { from: usize },
    /// Forwards one layer or concatenates two along channels.
    Route { sources: Vec<usize> },
    Upsample { factor: usize },
    Yolo(YoloSpec),
}

impl LayerKind {
    pub fn section_name(&self) -> &'static str {
        match self {
            LayerKind::Convolutional(_) => "convolutional",
            LayerKind::Shortcut { .. } => "shortcut",
            LayerKind::Route { .. } => "route",
            LayerKind::Upsample { .. } => "upsample",
            LayerKind::Yolo(_) => "yolo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output of the preceding layer (or the network input for layer 0).
    pub in_shape: TensorShape,
    pub out_shape: TensorShape,
}

impl LayerSpec {
    pub fn conv(&self) -> Option<&ConvSpec> {
        match &self.kind {
            LayerKind::Convolutional(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkDef {
    pub input: TensorShape,
    pub layers: Vec<LayerSpec>,
}

/// Layer-kind census, mostly useful for sanity checks and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LayerCensus {
    pub convolutional: usize,
    pub shortcut: usize,
    pub route: usize,
    pub upsample: usize,
    pub yolo: usize,
}

impl LayerCensus {
    pub fn total(&self) -> usize {
        self.convolutional + self.shortcut + self.route + self.upsample + self.yolo
    }
}

impl NetworkDef {
    /// Builds a network from layer kinds, inferring every shape.
    pub fn from_kinds(input: TensorShape, kinds: Vec<LayerKind>) -> Result<Self> {
        let shapes = infer_layer_shapes(input, &kinds)?;
        let layers = kinds
            .into_iter()
            .zip(shapes)
            .map(|(kind, (in_shape, out_shape))| LayerSpec { kind, in_shape, out_shape })
            .collect();
        Ok(NetworkDef { input, layers })
    }

    pub fn census(&self) -> LayerCensus {
        let mut c = LayerCensus::default();
        for l in &self.layers {
            match l.kind {
                LayerKind::Convolutional(_) => c.convolutional += 1,
                LayerKind::Shortcut { .. } => c.shortcut += 1,
                LayerKind::Route { .. } => c.route += 1,
                LayerKind::Upsample { .. } => c.upsample += 1,
                LayerKind::Yolo(_) => c.yolo += 1,
            }
        }
        c
    }

    /// Indices of the convolutional layers, in execution order.
    pub fn conv_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec, &ConvSpec)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.conv().map(|c| (i, l, c)))
    }

    /// Total number of convolution kernel weights (biases and batch-norm excluded).
    pub fn kernel_weight_count(&self) -> u64 {
        self.conv_layers()
            .map(|(_, l, c)| c.weight_count(l.in_shape.c) as u64)
            .sum()
    }

    /// Serializes back to Darknet `.cfg` text. Relative indices are written as
    /// absolute ones and padding as an explicit `padding=` value.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "[net]\nwidth={}\nheight={}\nchannels={}\n",
            self.input.w, self.input.h, self.input.c
        );
        for l in &self.layers {
            let _ = writeln!(s, "[{}]", l.kind.section_name());
            match &l.kind {
                LayerKind::Convolutional(c) => {
                    if c.batch_normalize {
                        s.push_str("batch_normalize=1\n");
                    }
                    let _ = writeln!(
                        s,
                        "filters={}\nsize={}\nstride={}\npadding={}\nactivation={}",
                        c.filters,
                        c.kernel,
                        c.stride,
                        c.pad,
                        c.activation.as_str()
                    );
                }
                LayerKind::Shortcut { from } => {
                    let _ = writeln!(s, "from={from}\nactivation=linear");
                }
                LayerKind::Route { sources } => {
                    let list: Vec<String> = sources.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(s, "layers={}", list.join(","));
                }
                LayerKind::Upsample { factor } => {
                    let _ = writeln!(s, "stride={factor}");
                }
                LayerKind::Yolo(y) => {
                    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                    let anchors: Vec<usize> = y.anchors.iter().map(|&a| a as usize).collect();
                    let _ = writeln!(
                        s,
                        "mask={}\nanchors={}\nclasses={}\nnum={}",
                        join(&y.mask),
                        join(&anchors),
                        y.classes,
                        y.num
                    );
                }
            }
            s.push('\n');
        }
        s
    }
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        // Darknet takes the last occurrence of a repeated key.
        self.entries
            .iter()
            .rev()
            .find(|(_, k, _)| k == key)
            .map(|(line, _, v)| (*line, v.as_str()))
    }

    fn int(&self, key: &str) -> Result<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v.trim().parse::<i64>().map(Some).map_err(|_| {
                NetdefError::InvalidValue { line, key: key.to_string(), value: v.to_string() }
            }),
        }
    }

    fn int_or(&self, key: &str, default: i64) -> Result<i64> {
        Ok(self.int(key)?.unwrap_or(default))
    }

    fn int_list(&self, key: &str) -> Result<Option<Vec<i64>>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<i64>().map_err(|_| NetdefError::InvalidValue {
                        line,
                        key: key.to_string(),
                        value: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.trim_end_matches(']').trim().to_ascii_lowercase();
            sections.push(Section { name, line: line_no, entries: Vec::new() });
            continue;
        }
        let Some(current) = sections.last_mut() else {
            return Err(NetdefError::OrphanKey { line: line_no });
        };
        match line.split_once('=') {
            Some((k, v)) => current.entries.push((line_no, k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(NetdefError::InvalidValue {
                    line: line_no,
                    key: String::new(),
                    value: line.to_string(),
                })
            }
        }
    }
    Ok(sections)
}

fn positive(layer: usize, key: &'static str, v: i64) -> Result<usize> {
    if v <= 0 {
        Err(NetdefError::NonPositive { layer, key, value: v })
    } else {
        Ok(v as usize)
    }
}

/// Resolves a Darknet layer reference (negative = relative) against layer `index`.
fn resolve_index(layer: usize, v: i64) -> Result<usize> {
    let abs = if v < 0 { layer as i64 + v } else { v };
    if abs < 0 || abs >= layer as i64 {
        return Err(NetdefError::IndexOutOfRange { layer, index: v });
    }
    Ok(abs as usize)
}

fn parse_layer(index: usize, sec: &Section) -> Result<LayerKind> {
    match sec.name.as_str() {
        "convolutional" | "conv" => {
            let filters = positive(index, "filters", sec.int_or("filters", 1)?)?;
            let kernel = positive(index, "size", sec.int_or("size", 1)?)?;
            let stride = positive(index, "stride", sec.int_or("stride", 1)?)?;
            let pad_flag = sec.int_or("pad", 0)?;
            let mut pad = sec.int_or("padding", 0)?;
            if pad_flag != 0 {
                pad = (kernel / 2) as i64;
            }
            if pad < 0 {
                return Err(NetdefError::NonPositive { layer: index, key: "padding", value: pad });
            }
            // Absent key means linear; an explicit unsupported name is an error.
            let act_name = sec.get("activation").map(|(_, v)| v).unwrap_or("linear");
            let activation = Activation::parse(act_name).ok_or_else(|| {
                NetdefError::UnsupportedActivation { layer: index, name: act_name.to_string() }
            })?;
            Ok(LayerKind::Convolutional(ConvSpec {
                filters,
                kernel,
                stride,
                pad: pad as usize,
                batch_normalize: sec.int_or("batch_normalize", 0)? != 0,
                activation,
            }))
        }
        "shortcut" => {
            let from = sec
                .int("from")?
                .ok_or(NetdefError::IndexOutOfRange { layer: index, index: 0 })?;
            if let Some((_, act)) = sec.get("activation") {
                if act != "linear" {
                    return Err(NetdefError::UnsupportedActivation { layer: index, name: act.to_string() });
                }
            }
            Ok(LayerKind::Shortcut { from: resolve_index(index, from)? })
        }
        "route" => {
            let raw = sec.int_list("layers")?.unwrap_or_default();
            if raw.is_empty() || raw.len() > 2 {
                return Err(NetdefError::RouteArity { layer: index, count: raw.len() });
            }
            let sources = raw
                .into_iter()
                .map(|v| resolve_index(index, v))
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerKind::Route { sources })
        }
        "upsample" => {
            let factor = sec.int_or("stride", 2)?;
            if factor != 2 {
                return Err(NetdefError::UnsupportedUpsample { layer: index, factor });
            }
            Ok(LayerKind::Upsample { factor: 2 })
        }
        "yolo" => {
            let to_usize = |v: Vec<i64>| v.into_iter().map(|x| x.max(0) as usize).collect::<Vec<_>>();
            let anchors = sec
                .int_list("anchors")?
                .unwrap_or_default()
                .into_iter()
                .map(|x| x.max(0) as u32)
                .collect::<Vec<_>>();
            let num = sec.int_or("num", 1)?.max(1) as usize;
            let mask = sec
                .int_list("mask")?
                .map(to_usize)
                .unwrap_or_else(|| (0..num).collect());
            let classes = sec.int_or("classes", 20)?.max(0) as usize;
            Ok(LayerKind::Yolo(YoloSpec { mask, anchors, classes, num }))
        }
        other => Err(NetdefError::UnknownSection { line: sec.line, name: other.to_string() }),
    }
}

/// Parses Darknet configuration text and infers all layer shapes.
pub fn parse_config(text: &str) -> Result<NetworkDef> {
    let sections = split_sections(text)?;
    let mut iter = sections.iter();
    let net = iter.next().ok_or(NetdefError::NoNetSection)?;
    if net.name != "net" && net.name != "network" {
        return Err(NetdefError::NoNetSection);
    }
    let dim = |key: &'static str| -> Result<usize> {
        let v = net.int(key)?.ok_or(NetdefError::MissingInput(key))?;
        positive(0, key, v).map_err(|_| NetdefError::MissingInput(key))
    };
    let input = TensorShape::new(dim("height")?, dim("width")?, dim("channels")?);
    let kinds = iter
        .enumerate()
        .map(|(i, sec)| parse_layer(i, sec))
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(NetdefError::Empty);
    }
    NetworkDef::from_kinds(input, kinds)
}

/// Re-derives every layer shape from the input shape and layer parameters.
pub fn infer_shapes(net: &NetworkDef) -> Result<NetworkDef> {
    let kinds = net.layers.iter().map(|l| l.kind.clone()).collect();
    NetworkDef::from_kinds(net.input, kinds)
}

/// Output side length of a convolution: `(in - kernel + 2*pad) / stride + 1`.
pub fn conv_output_dim(input: usize, kernel: usize, pad: usize, stride: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn infer_layer_shapes(input: TensorShape, kinds: &[LayerKind]) -> Result<Vec<(TensorShape, TensorShape)>> {
    if kinds.is_empty() {
        return Err(NetdefError::Empty);
    }
    let mut outs: Vec<TensorShape> = Vec::with_capacity(kinds.len());
    let mut shapes = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        let in_shape = if i == 0 { input } else { outs[i - 1] };
        let source = |idx: usize| -> Result<TensorShape> {
            if idx >= i {
                return Err(NetdefError::IndexOutOfRange { layer: i, index: idx as i64 });
            }
            Ok(outs[idx])
        };
        let out = match kind {
            LayerKind::Convolutional(c) => {
                if c.kernel == 0 {
                    return Err(NetdefError::NonPositive { layer: i, key: "size", value: 0 });
                }
                if c.stride == 0 {
                    return Err(NetdefError::NonPositive { layer: i, key: "stride", value: 0 });
                }
                let h = conv_output_dim(in_shape.h, c.kernel, c.pad, c.stride);
                let w = conv_output_dim(in_shape.w, c.kernel, c.pad, c.stride);
                match (h, w) {
                    (Some(h), Some(w)) if h > 0 && w > 0 && c.filters > 0 => TensorShape::new(h, w, c.filters),
                    _ => return Err(NetdefError::NonPositiveDimension { layer: i }),
                }
            }
            LayerKind::Shortcut { from } => {
                let other = source(*from)?;
                if other != in_shape {
                    return Err(NetdefError::ShortcutShapeMismatch { layer: i, a: in_shape, b: other });
                }
                in_shape
            }
            LayerKind::Route { sources } => match sources.as_slice() {
                [a] => source(*a)?,
                [a, b] => {
                    let (sa, sb) = (source(*a)?, source(*b)?);
                    if sa.h != sb.h || sa.w != sb.w {
                        return Err(NetdefError::RouteShapeMismatch { layer: i, a: sa, b: sb });
                    }
                    TensorShape::new(sa.h, sa.w, sa.c + sb.c)
                }
                _ => return Err(NetdefError::RouteArity { layer: i, count: sources.len() }),
            },
            LayerKind::Upsample { factor } => {
                if *factor != 2 {
                    return Err(NetdefError::UnsupportedUpsample { layer: i, factor: *factor as i64 });
                }
                TensorShape::new(in_shape.h * 2, in_shape.w * 2, in_shape.c)
            }
            LayerKind::Yolo(_) => in_shape,
        };
        outs.push(out);
        shapes.push((in_shape, out));
    }
    Ok(shapes)
}
