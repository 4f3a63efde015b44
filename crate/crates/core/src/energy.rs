//! Energy, bandwidth and frame-rate model.
//!
//! DRAM energy is priced per 64-bit bus access using row-hit/row-miss
//! averaged energies; centroid tables are priced per 32-bit SRAM read; FP
//! arithmetic per operation. Every constant comes from an [`EnergyConfig`],
//! normally loaded from a flat `key = value` file.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::cluster::Scope;
use crate::netdef::NetworkDef;
use crate::traffic::{AccessProfile, OpProfile};

/// The shipped configuration: DRAM/SRAM constants and calibrated FP energies.
pub const DEFAULT_CONFIG: &str = include_str!("../data/default_energy.cfg");

const PJ_PER_MJ: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("row miss ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("unsupported weight width of {0} bits")]
    UnsupportedBits(u32),
    #[error("no SRAM read energy configured for {0}-bit centroid tables")]
    MissingSramEnergy(u32),
    #[error("DRAM share {0} is not achievable (must be in (0, 1))")]
    InfeasibleShare(f64),
    #[error("cannot calibrate FP energy without any MAC operations")]
    NoMacs,
    #[error("energy config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("energy config is missing `{0}`")]
    MissingKey(String),
    #[error("energy config value `{key}` must be positive, got {value}")]
    NonPositive { key: String, value: f64 },
}

pub type Result<T> = std::result::Result<T, EnergyError>;

/// Average energy of one access given the fraction of accesses that miss the
/// open row.
pub fn avg_dram_energy(hit_pj: f64, miss_pj: f64, miss_ratio: f64) -> Result<f64> {
    if !(miss_ratio > 0.0 && miss_ratio <= 1.0) {
        return Err(EnergyError::InvalidRatio(miss_ratio));
    }
    Ok(miss_ratio * miss_pj + (1.0 - miss_ratio) * hit_pj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DramEnergy {
    pub read_miss_pj: f64,
    pub read_hit_pj: f64,
    pub write_miss_pj: f64,
    pub write_hit_pj: f64,
    pub row_miss_ratio: f64,
}

impl DramEnergy {
    pub fn avg_read_pj(&self) -> Result<f64> {
        avg_dram_energy(self.read_hit_pj, self.read_miss_pj, self.row_miss_ratio)
    }

    pub fn avg_write_pj(&self) -> Result<f64> {
        avg_dram_energy(self.write_hit_pj, self.write_miss_pj, self.row_miss_ratio)
    }
}

/// Per-operation FP energies in pJ. Subtraction, division, exponential and
/// square root default to the multiply energy; a MAC defaults to add + mul.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpEnergy {
    pub add_pj: f64,
    pub mul_pj: f64,
    pub sub_pj: Option<f64>,
    pub div_pj: Option<f64>,
    pub exp_pj: Option<f64>,
    pub sqrt_pj: Option<f64>,
    pub mac_pj: Option<f64>,
}

impl FpEnergy {
    pub fn new(add_pj: f64, mul_pj: f64) -> Self {
        FpEnergy { add_pj, mul_pj, sub_pj: None, div_pj: None, exp_pj: None, sqrt_pj: None, mac_pj: None }
    }

    pub fn mac(&self) -> f64 {
        self.mac_pj.unwrap_or(self.add_pj + self.mul_pj)
    }

    /// Energy of an operation profile in pJ.
    pub fn price(&self, ops: &OpProfile) -> f64 {
        let m = self.mul_pj;
        ops.macs as f64 * self.mac()
            + ops.fp_add as f64 * self.add_pj
            + ops.fp_mul as f64 * m
            + ops.fp_sub as f64 * self.sub_pj.unwrap_or(m)
            + ops.fp_div as f64 * self.div_pj.unwrap_or(m)
            + ops.fp_exp as f64 * self.exp_pj.unwrap_or(m)
            + ops.fp_sqrt as f64 * self.sqrt_pj.unwrap_or(m)
    }

    fn scaled(&self, k: f64) -> FpEnergy {
        FpEnergy {
            add_pj: self.add_pj * k,
            mul_pj: self.mul_pj * k,
            sub_pj: self.sub_pj.map(|v| v * k),
            div_pj: self.div_pj.map(|v| v * k),
            exp_pj: self.exp_pj.map(|v| v * k),
            sqrt_pj: self.sqrt_pj.map(|v| v * k),
            mac_pj: self.mac_pj.map(|v| v * k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyConfig {
    pub dram: DramEnergy,
    pub bus_width_bits: u32,
    pub word_bits: u32,
    /// Centroid-table read energy per 32-bit read, keyed by index width.
    pub sram_read_pj: BTreeMap<u32, f64>,
    pub fp: FpEnergy,
    pub dram_peak_gbps: f64,
    pub target_fps: f64,
    /// DRAM share of total baseline energy that FP calibration aims for.
    pub calibration_dram_share: Option<f64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig::parse(DEFAULT_CONFIG).expect("shipped energy config parses")
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let (n, d) = (n.trim().parse::<f64>().ok()?, d.trim().parse::<f64>().ok()?);
        return if d == 0.0 { None } else { Some(n / d) };
    }
    s.parse::<f64>().ok()
}

impl EnergyConfig {
    /// Parses the flat `key = value` format. `#` starts a comment; values may
    /// be decimals or fractions such as `1/64`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, f64> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| EnergyError::Syntax { line: n + 1, msg: format!("expected key = value, got `{line}`") })?;
            let value = parse_number(v)
                .ok_or_else(|| EnergyError::Syntax { line: n + 1, msg: format!("`{}` is not a number", v.trim()) })?;
            kv.insert(k.trim().to_string(), value);
        }

        let req = |k: &str| -> Result<f64> {
            let v = *kv.get(k).ok_or_else(|| EnergyError::MissingKey(k.to_string()))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(EnergyError::NonPositive { key: k.to_string(), value: v });
            }
            Ok(v)
        };
        let opt = |k: &str| -> Result<Option<f64>> {
            match kv.get(k) {
                None => Ok(None),
                Some(_) => req(k).map(Some),
            }
        };

        let dram = DramEnergy {
            read_miss_pj: req("dram_read_miss_pj")?,
            read_hit_pj: req("dram_read_hit_pj")?,
            write_miss_pj: req("dram_write_miss_pj")?,
            write_hit_pj: req("dram_write_hit_pj")?,
            row_miss_ratio: req("row_miss_ratio")?,
        };
        if dram.row_miss_ratio > 1.0 {
            return Err(EnergyError::InvalidRatio(dram.row_miss_ratio));
        }

        let mut sram_read_pj = BTreeMap::new();
        for (k, &v) in &kv {
            if let Some(bits) = k.strip_prefix("sram_read_pj_") {
                let bits: u32 = bits
                    .parse()
                    .map_err(|_| EnergyError::Syntax { line: 0, msg: format!("bad SRAM key `{k}`") })?;
                if !(v > 0.0) {
                    return Err(EnergyError::NonPositive { key: k.clone(), value: v });
                }
                sram_read_pj.insert(bits, v);
            }
        }

        let fp = FpEnergy {
            add_pj: req("fp_add_pj")?,
            mul_pj: req("fp_mul_pj")?,
            sub_pj: opt("fp_sub_pj")?,
            div_pj: opt("fp_div_pj")?,
            exp_pj: opt("fp_exp_pj")?,
            sqrt_pj: opt("fp_sqrt_pj")?,
            mac_pj: opt("fp_mac_pj")?,
        };
        let share = opt("calibration_dram_share")?;
        if let Some(s) = share {
            if s >= 1.0 {
                return Err(EnergyError::InfeasibleShare(s));
            }
        }

        Ok(EnergyConfig {
            dram,
            bus_width_bits: opt("bus_width_bits")?.unwrap_or(64.0) as u32,
            word_bits: opt("word_bits")?.unwrap_or(32.0) as u32,
            sram_read_pj,
            fp,
            dram_peak_gbps: req("dram_peak_gbps")?,
            target_fps: req("target_fps")?,
            calibration_dram_share: share,
        })
    }

    /// Writes the configuration back in the same flat format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let d = &self.dram;
        let _ = writeln!(s, "# DRAM energy per {}-bit access (pJ)", self.bus_width_bits);
        let _ = writeln!(s, "dram_read_miss_pj = {}", d.read_miss_pj);
        let _ = writeln!(s, "dram_read_hit_pj = {}", d.read_hit_pj);
        let _ = writeln!(s, "dram_write_miss_pj = {}", d.write_miss_pj);
        let _ = writeln!(s, "dram_write_hit_pj = {}", d.write_hit_pj);
        let _ = writeln!(s, "row_miss_ratio = {}", d.row_miss_ratio);
        let _ = writeln!(s, "bus_width_bits = {}", self.bus_width_bits);
        let _ = writeln!(s, "word_bits = {}", self.word_bits);
        let _ = writeln!(s, "dram_peak_gbps = {}", self.dram_peak_gbps);
        let _ = writeln!(s, "target_fps = {}", self.target_fps);
        let _ = writeln!(s, "\n# centroid-table SRAM read energy per 32-bit read (pJ)");
        for (bits, v) in self.sram_read_pj.iter().rev() {
            let _ = writeln!(s, "sram_read_pj_{bits} = {v}");
        }
        let _ = writeln!(s, "\n# FP operation energy (pJ)");
        let f = &self.fp;
        let _ = writeln!(s, "fp_add_pj = {}", f.add_pj);
        let _ = writeln!(s, "fp_mul_pj = {}", f.mul_pj);
        for (k, v) in [
            ("fp_sub_pj", f.sub_pj),
            ("fp_div_pj", f.div_pj),
            ("fp_exp_pj", f.exp_pj),
            ("fp_sqrt_pj", f.sqrt_pj),
            ("fp_mac_pj", f.mac_pj),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        if let Some(share) = self.calibration_dram_share {
            let _ = writeln!(s, "calibration_dram_share = {share}");
        }
        s
    }

    pub fn bus(&self) -> BusGeometry {
        BusGeometry { bus_width_bits: self.bus_width_bits, word_bits: self.word_bits }
    }

    pub fn sram_read_energy(&self, bits: u32) -> Result<f64> {
        self.sram_read_pj.get(&bits).copied().ok_or(EnergyError::MissingSramEnergy(bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusGeometry {
    pub bus_width_bits: u32,
    pub word_bits: u32,
}

impl Default for BusGeometry {
    fn default() -> Self {
        BusGeometry { bus_width_bits: 64, word_bits: 32 }
    }
}

/// Bus accesses per category. Categories are never coalesced into a shared
/// access; each is rounded up on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DramAccesses {
    pub weight_reads: u64,
    pub input_reads: u64,
    pub output_reads: u64,
    pub table_reads: u64,
    pub writes: u64,
}

impl DramAccesses {
    pub fn reads(&self) -> u64 {
        self.weight_reads + self.input_reads + self.output_reads + self.table_reads
    }

    pub fn total(&self) -> u64 {
        self.reads() + self.writes
    }
}

fn supported_weight_bits(bits: u32) -> bool {
    matches!(bits, 5..=8 | 32)
}

impl BusGeometry {
    pub fn words_per_access(&self) -> u64 {
        (self.bus_width_bits / self.word_bits) as u64
    }

    /// Weights per bus access with word-aligned packing.
    pub fn weights_per_access(&self, weight_bits: u32) -> u64 {
        self.words_per_access() * (self.word_bits / weight_bits) as u64
    }

    pub fn accesses(&self, profile: &AccessProfile, weight_bits: u32) -> Result<DramAccesses> {
        if !supported_weight_bits(weight_bits) {
            return Err(EnergyError::UnsupportedBits(weight_bits));
        }
        let per = self.words_per_access();
        Ok(DramAccesses {
            weight_reads: profile.weight_reads.div_ceil(self.weights_per_access(weight_bits)),
            input_reads: profile.input_reads.div_ceil(per),
            output_reads: profile.output_reads.div_ceil(per),
            table_reads: 0,
            writes: profile.output_writes.div_ceil(per),
        })
    }
}

/// `(reads, writes)` in 64-bit accesses for 32-bit elements and
/// `weight_bits`-wide word-aligned weights.
pub fn dram_accesses_from_elements(profile: &AccessProfile, weight_bits: u32) -> Result<(u64, u64)> {
    let a = BusGeometry::default().accesses(profile, weight_bits)?;
    Ok((a.reads(), a.writes))
}

/// Centroid-table size in bytes: `2^bits` 32-bit entries.
pub fn sram_table_bytes(bits: u32) -> Result<u64> {
    if !(5..=8).contains(&bits) {
        return Err(EnergyError::UnsupportedBits(bits));
    }
    Ok((1u64 << bits) * 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Packing {
    /// No index crosses a 32-bit word boundary.
    WordAligned,
    /// Indices packed back to back, centroid table counted.
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeReduction {
    pub bits: u32,
    pub packing: Packing,
    pub original_bits: u64,
    pub stored_bits: u64,
    pub factor: f64,
}

/// Storage reduction of `n_weights` 32-bit weights clustered into `k`
/// centroids with `bits`-wide indices.
pub fn size_reduction_factor(bits: u32, packing: Packing, n_weights: u64, k: u64) -> Result<SizeReduction> {
    if bits == 0 || bits > 32 {
        return Err(EnergyError::UnsupportedBits(bits));
    }
    let original_bits = n_weights * 32;
    let (stored_bits, factor) = match packing {
        Packing::WordAligned => {
            let per_word = (32 / bits) as u64;
            (n_weights.div_ceil(per_word) * 32, per_word as f64)
        }
        Packing::Tight => {
            let stored = n_weights * bits as u64 + k * 32;
            let f = if stored == 0 { 0.0 } else { original_bits as f64 / stored as f64 };
            (stored, f)
        }
    };
    Ok(SizeReduction { bits, packing, original_bits, stored_bits, factor })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpCalibration {
    pub fp: FpEnergy,
    pub fp_mj: f64,
    pub dram_mj: f64,
    pub total_mj: f64,
    pub dram_share: f64,
}

/// Scales `seed` so that FP energy makes DRAM exactly `dram_share` of the
/// DRAM + FP total. The add:mul ratio of the seed is preserved.
pub fn calibrate_fp_energy(dram_share: f64, dram_mj: f64, ops: &OpProfile, seed: &FpEnergy) -> Result<FpCalibration> {
    if !(dram_share > 0.0 && dram_share < 1.0) {
        return Err(EnergyError::InfeasibleShare(dram_share));
    }
    if ops.macs == 0 {
        return Err(EnergyError::NoMacs);
    }
    let fp_mj = dram_mj * (1.0 - dram_share) / dram_share;
    let seed_mj = seed.price(ops) / PJ_PER_MJ;
    let fp = seed.scaled(fp_mj / seed_mj);
    Ok(FpCalibration { fp, fp_mj, dram_mj, total_mj: dram_mj + fp_mj, dram_share })
}

/// A clustering configuration as seen by the energy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Clustering {
    pub bits: u32,
    pub scope: Scope,
}

impl Clustering {
    pub fn label(&self) -> String {
        format!("Clustered {} bits ({})", self.bits, self.scope)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyFractions {
    pub dram: f64,
    pub sram: f64,
    pub fp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub configuration: String,
    pub bits: Option<u32>,
    pub scope: Option<Scope>,
    pub dram_accesses: DramAccesses,
    pub avg_read_pj: f64,
    pub avg_write_pj: f64,
    pub dram_mj: f64,
    pub sram_mj: f64,
    pub fp_mj: f64,
    pub total_mj: f64,
    pub fractions: EnergyFractions,
    pub sram_read_pj: Option<f64>,
    pub sram_table_bytes: Option<u64>,
    pub sram_tables: u64,
    pub bytes_per_frame: u64,
    pub bandwidth_gbps: f64,
    /// Frame rate sustainable at the baseline's bandwidth demand.
    pub max_fps: f64,
    /// Frame rate sustainable at the DRAM peak bandwidth.
    pub max_fps_at_peak: f64,
    /// (DRAM + SRAM) energy relative to the unclustered baseline.
    pub relative_memory: f64,
    pub relative_overall: f64,
}

impl EnergyReport {
    pub fn memory_mj(&self) -> f64 {
        self.dram_mj + self.sram_mj
    }
}

#[derive(Clone, Copy)]
struct Parts {
    acc: DramAccesses,
    dram_mj: f64,
    sram_mj: f64,
    fp_mj: f64,
    avg_read: f64,
    avg_write: f64,
    bytes: u64,
}

fn parts(net: &NetworkDef, profile: &AccessProfile, ops: &OpProfile, cfg: &EnergyConfig, clustering: Option<&Clustering>) -> Result<Parts> {
    let bus = cfg.bus();
    let avg_read = cfg.dram.avg_read_pj()?;
    let avg_write = cfg.dram.avg_write_pj()?;
    let weight_bits = clustering.map_or(cfg.word_bits, |c| c.bits);
    let mut acc = bus.accesses(profile, weight_bits)?;
    let mut sram_pj = 0.0;
    if let Some(c) = clustering {
        let read_pj = cfg.sram_read_energy(c.bits)?;
        let k = 1u64 << c.bits;
        let tables = table_count(net, c.scope);
        // Each table is loaded from DRAM once per frame and written into the
        // SRAM (priced at its read energy); every weight fetch is one table read.
        acc.table_reads = (k * tables).div_ceil(bus.words_per_access());
        sram_pj = (profile.weight_reads + k * tables) as f64 * read_pj;
        // Static SRAM energy is modeled as zero; it stays far below 0.1% of a frame.
    }
    let dram_pj = acc.reads() as f64 * avg_read + acc.writes as f64 * avg_write;
    Ok(Parts {
        acc,
        dram_mj: dram_pj / PJ_PER_MJ,
        sram_mj: sram_pj / PJ_PER_MJ,
        fp_mj: cfg.fp.price(ops) / PJ_PER_MJ,
        avg_read,
        avg_write,
        bytes: acc.total() * (bus.bus_width_bits / 8) as u64,
    })
}

/// Number of centroid tables a scope needs for `net`.
pub fn table_count(net: &NetworkDef, scope: Scope) -> u64 {
    match scope {
        Scope::AllLayers => 1,
        Scope::PerLayer => net.conv_layers().count() as u64,
    }
}

/// Per-frame energy, bandwidth and frame-rate report. With `clustering`,
/// relative figures compare against the same network unclustered.
pub fn frame_energy(
    net: &NetworkDef,
    profile: &AccessProfile,
    ops: &OpProfile,
    cfg: &EnergyConfig,
    clustering: Option<&Clustering>,
) -> Result<EnergyReport> {
    let p = parts(net, profile, ops, cfg, clustering)?;
    let base = match clustering {
        Some(_) => parts(net, profile, ops, cfg, None)?,
        None => p,
    };
    let total = p.dram_mj + p.sram_mj + p.fp_mj;
    let base_total = base.dram_mj + base.sram_mj + base.fp_mj;
    let fractions = if total > 0.0 {
        EnergyFractions { dram: p.dram_mj / total, sram: p.sram_mj / total, fp: p.fp_mj / total }
    } else {
        EnergyFractions::default()
    };
    let bytes = p.bytes as f64;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(EnergyReport {
        configuration: clustering.map_or_else(|| "Baseline".to_string(), Clustering::label),
        bits: clustering.map(|c| c.bits),
        scope: clustering.map(|c| c.scope),
        dram_accesses: p.acc,
        avg_read_pj: p.avg_read,
        avg_write_pj: p.avg_write,
        dram_mj: p.dram_mj,
        sram_mj: p.sram_mj,
        fp_mj: p.fp_mj,
        total_mj: total,
        fractions,
        sram_read_pj: clustering.and_then(|c| cfg.sram_read_pj.get(&c.bits).copied()),
        sram_table_bytes: clustering.and_then(|c| sram_table_bytes(c.bits).ok()),
        sram_tables: clustering.map_or(0, |c| table_count(net, c.scope)),
        bytes_per_frame: p.bytes,
        bandwidth_gbps: bytes * cfg.target_fps / 1e9,
        max_fps: cfg.target_fps * ratio(base.bytes as f64, bytes),
        max_fps_at_peak: ratio(cfg.dram_peak_gbps * 1e9, bytes),
        relative_memory: ratio(p.dram_mj + p.sram_mj, base.dram_mj + base.sram_mj),
        relative_overall: ratio(total, base_total),
    })
}
