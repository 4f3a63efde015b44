//! `wshare cluster`: k-means clustering of convolution kernels into CWTS.

use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;
use wshare::cluster::{
    cluster_model, read_darknet_weights, write_clustered, ClusterConfig, Init, KMeansConfig, Scope, TableStats,
};
use wshare::energy::{size_reduction_factor, Packing, SizeReduction};
use wshare::netdef::parse_config;

use crate::cli::{ClusterArgs, InitArg};
use crate::manifest::{sha256_hex, RunManifest};
use crate::output::{read_file, read_text, write_json};

pub const SCHEMA: &str = "wshare.cluster.v1";

#[derive(Debug, Serialize)]
pub struct ClusterReport {
    pub schema: &'static str,
    pub manifest: RunManifest,
    pub scope: Scope,
    pub bits: u8,
    pub tables: Vec<TableStats>,
    pub total_weights: usize,
    pub total_sse: f64,
    pub mse: f64,
    pub lossless: bool,
    pub kernel_bytes: usize,
    pub container_bytes: usize,
    pub container_sha256: String,
    pub word_aligned: SizeReduction,
}

pub fn run(args: &ClusterArgs, out: &mut dyn Write) -> Result<bool> {
    let mut manifest = RunManifest::new("cluster", serde_json::to_value(args)?, Some(args.seed));
    let cfg_text = read_text(&args.cfg)?;
    manifest.add_input("network", Some(&args.cfg), cfg_text.as_bytes());
    let net = parse_config(&cfg_text).with_context(|| format!("parsing {}", args.cfg.display()))?;
    let bytes = read_file(&args.weights)?;
    manifest.add_input("weights", Some(&args.weights), &bytes);
    let weights = read_darknet_weights(&bytes, &net).with_context(|| format!("reading {}", args.weights.display()))?;

    let mut cfg = ClusterConfig::new(args.scope.into(), args.bits)?;
    cfg.kmeans = KMeansConfig {
        max_iters: args.max_iters as usize,
        tol: args.tol,
        seed: args.seed,
        init: match args.init {
            InitArg::Linspace => Init::Linspace,
            InitArg::KmeansPp => Init::KmeansPlusPlus,
        },
    };
    let outcome = cluster_model(&weights.kernels(), &cfg)?;
    let container = write_clustered(&outcome.model);
    std::fs::write(&args.out, &container).with_context(|| format!("writing {}", args.out.display()))?;

    let total_weights: usize = outcome.stats.iter().map(|s| s.weights).sum();
    let total_sse = outcome.total_sse();
    let report = ClusterReport {
        schema: SCHEMA,
        scope: outcome.model.scope,
        bits: outcome.model.bits,
        total_weights,
        total_sse,
        mse: if total_weights == 0 { 0.0 } else { total_sse / total_weights as f64 },
        lossless: total_sse == 0.0,
        kernel_bytes: 4 * total_weights,
        container_bytes: container.len(),
        container_sha256: sha256_hex(&container),
        word_aligned: size_reduction_factor(args.bits as u32, Packing::WordAligned, total_weights as u64, 1 << args.bits)?,
        tables: outcome.stats,
        manifest,
    };

    writeln!(out, "{:>8} {:>10} {:>9} {:>14} {:>12}", "layer", "weights", "centroids", "SSE", "iterations")?;
    for t in &report.tables {
        let layer = t.layer.map_or("all".to_string(), |l| l.to_string());
        writeln!(out, "{:>8} {:>10} {:>9} {:>14.6e} {:>12}", layer, t.weights, t.centroids, t.sse, t.iterations)?;
    }
    writeln!(
        out,
        "total SSE {:.6e}, MSE {:.6e}{}",
        report.total_sse,
        report.mse,
        if report.lossless { " (lossless)" } else { "" }
    )?;
    writeln!(
        out,
        "kernels {} bytes -> container {} bytes; word-aligned reduction {}x",
        report.kernel_bytes, report.container_bytes, report.word_aligned.factor
    )?;
    writeln!(out, "wrote {}", args.out.display())?;
    if let Some(p) = &args.json {
        write_json(p, &report)?;
    }
    Ok(true)
}
