//! `wshare analyze`: traffic, bandwidth, frame rate and energy per configuration.

use std::io::Write;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use wshare::energy::{
    calibrate_fp_energy, frame_energy, size_reduction_factor, Clustering, EnergyConfig, EnergyReport, FpCalibration,
    Packing, SizeReduction, DEFAULT_CONFIG,
};
use wshare::netdef::{parse_config, LayerCensus};
use wshare::traffic::{aggregate, layer_accesses, op_profile, AccessProfile, AccessSplit, OpProfile, ShortcutBucketing, TrafficOptions};

use crate::cli::{AnalyzeArgs, BucketingArg};
use crate::manifest::RunManifest;
use crate::output::{read_text, write_csv, write_json};

pub const SCHEMA: &str = "wshare.analyze.v1";

pub const CSV_HEADER: [&str; 5] = [
    "configuration",
    "bandwidth_gbps",
    "fps",
    "relative_memory_energy_pct",
    "relative_overall_energy_pct",
];

#[derive(Debug, Serialize)]
pub struct NetworkSummary {
    pub input: String,
    pub layers: usize,
    pub census: LayerCensus,
    pub kernel_weights: u64,
    pub macs: u64,
}

#[derive(Debug, Serialize)]
pub struct LayerTraffic {
    pub index: usize,
    pub kind: &'static str,
    pub output: String,
    #[serde(flatten)]
    pub accesses: AccessProfile,
}

#[derive(Debug, Serialize)]
pub struct TrafficSummary {
    pub shortcut_bucketing: ShortcutBucketing,
    pub totals: AccessProfile,
    pub total_elements: u64,
    pub split: AccessSplit,
    pub layers: Vec<LayerTraffic>,
}

#[derive(Debug, Serialize)]
pub struct Breakdown {
    pub dram_share: f64,
    pub sram_share: f64,
    pub fp_share: f64,
    pub mac_share_of_fp_ops: f64,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub schema: &'static str,
    pub manifest: RunManifest,
    pub network: NetworkSummary,
    pub traffic: TrafficSummary,
    pub ops: OpProfile,
    pub energy_config: EnergyConfig,
    pub calibration: Option<FpCalibration>,
    pub baseline_breakdown: Breakdown,
    pub size_factors: Vec<SizeReduction>,
    pub rows: Vec<EnergyReport>,
}

pub fn load_energy_config(manifest: &mut RunManifest, path: Option<&std::path::Path>) -> Result<EnergyConfig> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => DEFAULT_CONFIG.to_string(),
    };
    manifest.add_input("energy-config", path, text.as_bytes());
    EnergyConfig::parse(&text).with_context(|| format!("energy config {}", path.map_or("<builtin>".into(), |p| p.display().to_string())))
}

pub fn build_report(args: &AnalyzeArgs) -> Result<AnalyzeReport> {
    let mut manifest = RunManifest::new("analyze", serde_json::to_value(args)?, None);
    let cfg_text = read_text(&args.cfg)?;
    manifest.add_input("network", Some(&args.cfg), cfg_text.as_bytes());
    let net = parse_config(&cfg_text).with_context(|| format!("parsing {}", args.cfg.display()))?;
    let mut energy = load_energy_config(&mut manifest, args.energy.path.as_deref())?;

    let opts = TrafficOptions {
        shortcut: match args.shortcut_bucketing {
            BucketingArg::BothInputs => ShortcutBucketing::BothInputs,
            BucketingArg::SplitOperands => ShortcutBucketing::SplitOperands,
        },
        generalized_fallback: args.generalized_conv,
    };
    let (_, totals) = aggregate(&net, &opts)?;
    let layers = (0..net.layers.len())
        .map(|i| {
            Ok(LayerTraffic {
                index: i,
                kind: net.layers[i].kind.section_name(),
                output: net.layers[i].out_shape.to_string(),
                accesses: layer_accesses(&net, i, &opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ops = op_profile(&net);

    let calibration = if args.calibrate {
        let Some(share) = energy.calibration_dram_share else {
            bail!("--calibrate needs `calibration_dram_share` in the energy config");
        };
        let base = frame_energy(&net, &totals, &ops, &energy, None)?;
        let cal = calibrate_fp_energy(share, base.dram_mj, &ops, &energy.fp)?;
        energy.fp = cal.fp.clone();
        Some(cal)
    } else {
        None
    };

    let bits: Vec<u32> = if args.bits.is_empty() {
        energy.sram_read_pj.keys().rev().copied().collect()
    } else {
        args.bits.clone()
    };
    let mut rows = vec![frame_energy(&net, &totals, &ops, &energy, None)?];
    for &b in &bits {
        let c = Clustering { bits: b, scope: args.scope.into() };
        rows.push(frame_energy(&net, &totals, &ops, &energy, Some(&c))?);
    }
    let kernel_weights = net.kernel_weight_count();
    let size_factors = bits
        .iter()
        .map(|&b| size_reduction_factor(b, Packing::WordAligned, kernel_weights, 1 << b))
        .collect::<Result<Vec<_>, _>>()?;
    let base = &rows[0];
    Ok(AnalyzeReport {
        schema: SCHEMA,
        manifest,
        network: NetworkSummary {
            input: net.input.to_string(),
            layers: net.layers.len(),
            census: net.census(),
            kernel_weights,
            macs: ops.macs,
        },
        traffic: TrafficSummary {
            shortcut_bucketing: opts.shortcut,
            totals,
            total_elements: totals.total(),
            split: totals.split(),
            layers,
        },
        ops,
        baseline_breakdown: Breakdown {
            dram_share: base.fractions.dram,
            sram_share: base.fractions.sram,
            fp_share: base.fractions.fp,
            mac_share_of_fp_ops: ops.mac_share(),
        },
        energy_config: energy,
        calibration,
        size_factors,
        rows,
    })
}

pub fn csv_rows(report: &AnalyzeReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.configuration.clone(),
                format!("{:.3}", r.bandwidth_gbps),
                format!("{:.2}", r.max_fps),
                format!("{:.3}", 100.0 * r.relative_memory),
                format!("{:.3}", 100.0 * r.relative_overall),
            ]
        })
        .collect()
}

pub fn print_table(out: &mut dyn Write, report: &AnalyzeReport) -> Result<()> {
    let n = &report.network;
    writeln!(out, "network: {} layers, input {}, {} kernel weights, {} MACs", n.layers, n.input, n.kernel_weights, n.macs)?;
    let s = report.traffic.split;
    writeln!(
        out,
        "accesses: {} elements per frame; weights {:.1}%, inputs {:.1}%, outputs {:.1}%",
        report.traffic.total_elements,
        100.0 * s.weights,
        100.0 * s.inputs,
        100.0 * s.outputs
    )?;
    let b = &report.baseline_breakdown;
    writeln!(
        out,
        "baseline energy: DRAM {:.1}%, FP {:.1}% (MACs are {:.2}% of FP ops)",
        100.0 * b.dram_share,
        100.0 * b.fp_share,
        100.0 * b.mac_share_of_fp_ops
    )?;
    writeln!(out)?;
    writeln!(out, "{:<30} {:>16} {:>7} {:>15} {:>16}", "Configuration", "Bandwidth (GB/s)", "FPS", "Memory energy", "Overall energy")?;
    for r in &report.rows {
        writeln!(
            out,
            "{:<30} {:>16.1} {:>7.1} {:>14.1}% {:>15.1}%",
            r.configuration,
            r.bandwidth_gbps,
            r.max_fps,
            100.0 * r.relative_memory,
            100.0 * r.relative_overall
        )?;
    }
    if !report.size_factors.is_empty() {
        writeln!(out)?;
        let f: Vec<String> = report.size_factors.iter().map(|f| format!("{} bits {}x", f.bits, f.factor)).collect();
        writeln!(out, "size reduction (word-aligned): {}", f.join(", "))?;
    }
    Ok(())
}

pub fn run(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<bool> {
    let report = build_report(args)?;
    if let Some(p) = &args.json {
        write_json(p, &report)?;
    }
    if let Some(p) = &args.csv {
        write_csv(p, &CSV_HEADER, &csv_rows(&report))?;
    }
    print_table(out, &report)?;
    Ok(true)
}
