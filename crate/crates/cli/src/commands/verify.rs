//! `wshare verify`: clustered inference against dequantized and original weights.

use std::io::Write;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wshare::cluster::{read_clustered, read_darknet_weights, ClusteredModel};
use wshare::engine::{head_outputs, output_mse, run_network, Kernels, Tensor};
use wshare::netdef::{parse_config, NetworkDef};

use crate::cli::VerifyArgs;
use crate::manifest::RunManifest;
use crate::output::{read_file, read_text, write_json};

pub const SCHEMA: &str = "wshare.verify.v1";

#[derive(Debug, Serialize)]
pub struct InputResult {
    pub input: u32,
    /// Indirect (centroid-table) execution equals dequantized execution bit for bit.
    pub bitwise_equal: bool,
    pub first_mismatch_layer: Option<usize>,
    /// Head-output MSE of clustered against original weights.
    pub mse_vs_original: f64,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub manifest: RunManifest,
    pub pass: bool,
    pub error: Option<String>,
    pub results: Vec<InputResult>,
}

fn random_input(net: &NetworkDef, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..net.input.elements()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor { shape: net.input, data }
}

fn check(args: &VerifyArgs, manifest: &mut RunManifest) -> Result<Vec<InputResult>> {
    let cfg_text = read_text(&args.cfg)?;
    manifest.add_input("network", Some(&args.cfg), cfg_text.as_bytes());
    let net = parse_config(&cfg_text).with_context(|| format!("parsing {}", args.cfg.display()))?;
    let wbytes = read_file(&args.weights)?;
    manifest.add_input("weights", Some(&args.weights), &wbytes);
    let weights = read_darknet_weights(&wbytes, &net).with_context(|| format!("reading {}", args.weights.display()))?;
    let cbytes = read_file(&args.cwts)?;
    manifest.add_input("clustered", Some(&args.cwts), &cbytes);
    let model: ClusteredModel =
        read_clustered(&cbytes).with_context(|| format!("format error in {}", args.cwts.display()))?;
    let dequantized = weights.with_clustered_kernels(&model).context("clustered model does not match the network")?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    (0..args.inputs)
        .map(|i| {
            let input = random_input(&net, &mut rng);
            let original = run_network(&net, &weights, Kernels::Dense, &input)?;
            let indirect = run_network(&net, &weights, Kernels::Clustered(&model), &input)?;
            let direct = run_network(&net, &dequantized, Kernels::Dense, &input)?;
            let first_mismatch_layer = indirect.iter().zip(&direct).position(|(a, b)| {
                a.data.len() != b.data.len() || a.data.iter().zip(&b.data).any(|(x, y)| x.to_bits() != y.to_bits())
            });
            Ok(InputResult {
                input: i,
                bitwise_equal: first_mismatch_layer.is_none(),
                first_mismatch_layer,
                mse_vs_original: output_mse(head_outputs(&net, &indirect), head_outputs(&net, &original)),
            })
        })
        .collect()
}

pub fn run(args: &VerifyArgs, out: &mut dyn Write) -> Result<bool> {
    let mut manifest = RunManifest::new("verify", serde_json::to_value(args)?, Some(args.seed));
    let (results, error) = match check(args, &mut manifest) {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(format!("{e:#}"))),
    };
    let pass = error.is_none() && results.iter().all(|r| r.bitwise_equal);
    for r in &results {
        writeln!(
            out,
            "input {}: indirect vs dequantized {}, output MSE vs original {:.6e}",
            r.input,
            if r.bitwise_equal { "bitwise equal" } else { "MISMATCH" },
            r.mse_vs_original
        )?;
    }
    if let Some(e) = &error {
        writeln!(out, "error: {e}")?;
    }
    writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
    let report = VerifyReport { schema: SCHEMA, manifest, pass, error, results };
    if let Some(p) = &args.json {
        write_json(p, &report)?;
    }
    Ok(pass)
}
