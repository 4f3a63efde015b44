use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wshare::cluster::write_darknet_weights;
use wshare::netdef::{parse_config, YOLOV3_608_CFG};
use wshare_testkit::toy::{toy_weights, TOY_CFG, TWO_CONV_CFG};

const TINY_CFG: &str = "[net]\nwidth=10\nheight=10\nchannels=2\n\
    [convolutional]\nfilters=4\nsize=3\nstride=1\npad=1\nactivation=leaky\n";

fn wshare(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wshare"))
        .current_dir(dir)
        .env_remove("WSHARE_ENERGY_CONFIG")
        .env_remove("SOURCE_DATE_EPOCH")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> String {
        fs::write(self.path(name), bytes).unwrap();
        name.to_string()
    }

    /// Writes `cfg` and synthetic weights for it; returns the two file names.
    fn network(&self, stem: &str, cfg: &str, seed: u64) -> (String, String) {
        let net = parse_config(cfg).unwrap();
        let cfg_name = self.write(&format!("{stem}.cfg"), cfg);
        let w_name = self.write(&format!("{stem}.weights"), write_darknet_weights(&toy_weights(&net, seed)));
        (cfg_name, w_name)
    }

    fn run(&self, args: &[&str]) -> Output {
        wshare(self.dir.path(), args)
    }
}

#[test]
fn analyze_tiny_network_hand_counts() {
    let fx = Fixture::new();
    fx.write("tiny.cfg", TINY_CFG);
    let stdout = ok(&fx.run(&["analyze", "tiny.cfg", "--json", "r.json"]));
    assert!(stdout.contains("Baseline"));
    let r = json(fx.path("r.json"));
    assert_eq!(r["schema"], "wshare.analyze.v1");
    let t = &r["traffic"]["totals"];
    // 3x3 stride 1 on 10x10x2 with 4 filters: 9*2*4*(10-2), 10*3*2*(10-2), 10*10*4.
    assert_eq!(t["weight_reads"], 576);
    assert_eq!(t["input_reads"], 480);
    assert_eq!(t["output_reads"], 0);
    assert_eq!(t["output_writes"], 400);
    assert_eq!(r["network"]["macs"], 7200);
    let base = &r["rows"][0];
    // Two 32-bit elements per 64-bit access.
    assert_eq!(base["dram_accesses"]["weight_reads"], 288);
    assert_eq!(base["dram_accesses"]["writes"], 200);
    assert_eq!(base["bytes_per_frame"], 4 * 1456);
    assert_eq!(base["relative_overall"], 1.0);
}

#[test]
fn analyze_yolov3_report_contents() {
    let fx = Fixture::new();
    fx.write("yolov3.cfg", YOLOV3_608_CFG);
    ok(&fx.run(&["analyze", "yolov3.cfg", "--bits", "8,5", "--json", "r.json", "--csv", "r.csv"]));
    let r = json(fx.path("r.json"));
    assert_eq!(r["network"]["layers"], 107);
    assert_eq!(r["traffic"]["total_elements"], 2_201_275_753u64);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["sram_table_bytes"], 1024);
    assert_eq!(rows[1]["sram_read_pj"], 0.85);
    assert_eq!(rows[2]["sram_table_bytes"], 128);
    assert_eq!(rows[2]["sram_read_pj"], 0.36);
    let csv = fs::read_to_string(fx.path("r.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "configuration,bandwidth_gbps,fps,relative_memory_energy_pct,relative_overall_energy_pct"
    );
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn analyze_is_deterministic() {
    let fx = Fixture::new();
    fx.write("yolov3.cfg", YOLOV3_608_CFG);
    let a = ok(&fx.run(&["analyze", "yolov3.cfg", "--json", "a.json", "--csv", "a.csv"]));
    let b = ok(&fx.run(&["analyze", "yolov3.cfg", "--json", "a.json", "--csv", "a.csv"]));
    let first = (fs::read(fx.path("a.json")).unwrap(), fs::read(fx.path("a.csv")).unwrap());
    ok(&fx.run(&["analyze", "yolov3.cfg", "--json", "a.json", "--csv", "a.csv"]));
    assert_eq!(a, b);
    assert_eq!(first.0, fs::read(fx.path("a.json")).unwrap());
    assert_eq!(first.1, fs::read(fx.path("a.csv")).unwrap());
}

#[test]
fn energy_config_env_override() {
    let fx = Fixture::new();
    fx.write("tiny.cfg", TINY_CFG);
    let custom = wshare::energy::EnergyConfig::parse(&fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/default_energy.cfg"),
    ).unwrap())
    .unwrap()
    .to_config_string()
    .replace("sram_read_pj_8 = 0.85", "sram_read_pj_8 = 9.5");
    assert!(custom.contains("sram_read_pj_8 = 9.5"), "{custom}");
    fx.write("custom.cfg", &custom);
    let out = Command::new(env!("CARGO_BIN_EXE_wshare"))
        .current_dir(fx.dir.path())
        .env("WSHARE_ENERGY_CONFIG", "custom.cfg")
        .args(["analyze", "tiny.cfg", "--bits", "8", "--json", "r.json"])
        .output()
        .unwrap();
    ok(&out);
    let r = json(fx.path("r.json"));
    assert_eq!(r["rows"][1]["sram_read_pj"], 9.5);
    assert_eq!(r["manifest"]["inputs"][1]["path"], "custom.cfg");
}

#[test]
fn analyze_errors_exit_nonzero() {
    let fx = Fixture::new();
    fx.write("bad.cfg", "[net]\nwidth=8\nheight=8\nchannels=3\n[convolutional]\nfilters=4\nsize=5\nstride=1\n");
    let out = fx.run(&["analyze", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(fx.run(&["analyze", "missing.cfg"]).status.code(), Some(2));
}

#[test]
fn cluster_lossless_when_centroids_cover_values() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("two", TWO_CONV_CFG, 3);
    let stdout = ok(&fx.run(&["cluster", &cfg, &w, "--bits", "8", "-o", "m.cwts", "--json", "c.json"]));
    assert!(stdout.contains("lossless"));
    let r = json(fx.path("c.json"));
    assert_eq!(r["total_sse"], 0.0);
    assert_eq!(r["lossless"], true);
    assert_eq!(r["tables"].as_array().unwrap().len(), 2);
    assert_eq!(r["container_bytes"], fs::read(fx.path("m.cwts")).unwrap().len());
}

#[test]
fn cluster_is_deterministic() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("toy", TOY_CFG, 11);
    for init in ["linspace", "kmeans-pp"] {
        let args = ["cluster", &cfg, &w, "--bits", "5", "--seed", "42", "--init", init];
        ok(&fx.run(&[&args[..], &["-o", "a.cwts", "--json", "a.json"]].concat()));
        ok(&fx.run(&[&args[..], &["-o", "b.cwts", "--json", "b.json"]].concat()));
        assert_eq!(fs::read(fx.path("a.cwts")).unwrap(), fs::read(fx.path("b.cwts")).unwrap());
        let strip = |p: &str| {
            let mut v = json(fx.path(p));
            v["manifest"]["options"]["out"] = Value::Null;
            v["manifest"]["options"]["json"] = Value::Null;
            v
        };
        assert_eq!(strip("a.json"), strip("b.json"));
    }
}

#[test]
fn cluster_per_layer_not_worse_than_global() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("two", TWO_CONV_CFG, 5);
    ok(&fx.run(&["cluster", &cfg, &w, "--bits", "3", "--scope", "per-layer", "-o", "p.cwts", "--json", "p.json"]));
    ok(&fx.run(&["cluster", &cfg, &w, "--bits", "3", "--scope", "all-layers", "-o", "g.cwts", "--json", "g.json"]));
    let per = json(fx.path("p.json"))["total_sse"].as_f64().unwrap();
    let global = json(fx.path("g.json"))["total_sse"].as_f64().unwrap();
    assert!(per > 0.0);
    assert!(per <= global, "per-layer {per} > global {global}");
    assert_eq!(json(fx.path("g.json"))["tables"].as_array().unwrap().len(), 1);
}

#[test]
fn cluster_reports_format_errors_with_offsets() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("two", TWO_CONV_CFG, 5);
    let mut bytes = fs::read(fx.path(&w)).unwrap();
    bytes.truncate(bytes.len() - 2);
    fx.write("short.weights", bytes);
    let out = fx.run(&["cluster", &cfg, "short.weights", "--bits", "5", "-o", "x.cwts"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
}

#[test]
fn verify_lossless_passes_with_zero_mse() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("two", TWO_CONV_CFG, 3);
    ok(&fx.run(&["cluster", &cfg, &w, "--bits", "8", "-o", "m.cwts"]));
    let stdout = ok(&fx.run(&["verify", &cfg, &w, "m.cwts", "--json", "v.json"]));
    assert!(stdout.trim_end().ends_with("PASS"));
    let r = json(fx.path("v.json"));
    assert_eq!(r["pass"], true);
    for res in r["results"].as_array().unwrap() {
        assert_eq!(res["bitwise_equal"], true);
        assert_eq!(res["mse_vs_original"], 0.0);
    }
}

#[test]
fn verify_five_bit_toy_passes_with_nonzero_mse() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("toy", TOY_CFG, 8);
    ok(&fx.run(&["cluster", &cfg, &w, "--bits", "5", "-o", "m.cwts"]));
    ok(&fx.run(&["verify", &cfg, &w, "m.cwts", "--inputs", "3", "--json", "v.json"]));
    let r = json(fx.path("v.json"));
    let results = r["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|x| x["bitwise_equal"] == true && x["mse_vs_original"].as_f64().unwrap() > 0.0));
}

#[test]
fn verify_corrupted_container_fails() {
    let fx = Fixture::new();
    let (cfg, w) = fx.network("two", TWO_CONV_CFG, 3);
    ok(&fx.run(&["cluster", &cfg, &w, "--bits", "6", "-o", "m.cwts"]));
    let mut bytes = fs::read(fx.path("m.cwts")).unwrap();
    bytes[20] ^= 0x01;
    fx.write("bad.cwts", bytes);
    let out = fx.run(&["verify", &cfg, &w, "bad.cwts", "--json", "v.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL") && stdout.contains("CRC"), "{stdout}");
    let r = json(fx.path("v.json"));
    assert_eq!(r["pass"], false);
    assert!(r["error"].as_str().unwrap().contains("format error"));
}

#[test]
fn compare_joins_reports() {
    let fx = Fixture::new();
    fx.write("yolov3.cfg", YOLOV3_608_CFG);
    let mut reports = Vec::new();
    for bits in ["8", "7", "6", "5"] {
        let name = format!("r{bits}.json");
        ok(&fx.run(&["analyze", "yolov3.cfg", "--bits", bits, "--json", &name]));
        reports.push(name);
    }
    let mut args = vec!["compare"];
    args.extend(reports.iter().map(String::as_str));
    args.extend([
        "--quality-name",
        "map",
        "--quality",
        "Baseline=55.3",
        "--quality",
        "Clustered 5 bits (per-layer)=51.0",
        "-o",
        "t.csv",
    ]);
    let out = fx.run(&args);
    ok(&out);
    let warnings = String::from_utf8_lossy(&out.stderr);
    assert_eq!(warnings.matches("warning").count(), 3, "{warnings}");

    let mut rdr = csv::Reader::from_path(fx.path("t.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["configuration", "energy_reduction_pct", "map"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[0][0], "Baseline");
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(&rows[0][2], "55.3");
    assert_eq!(&rows[1][2], "");
    let five = rows.iter().find(|r| r[0].starts_with("Clustered 5")).unwrap();
    assert!((five[1].parse::<f64>().unwrap() - 57.4).abs() < 1.5);
    assert_eq!(&five[2], "51.0");
}

#[test]
fn compare_rejects_foreign_schema() {
    let fx = Fixture::new();
    fx.write("x.json", r#"{"schema":"wshare.cluster.v1","rows":[]}"#);
    let out = fx.run(&["compare", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));
}

#[test]
fn map_command_reports_per_class_ap() {
    let fx = Fixture::new();
    fx.write("gt.txt", "img1 0 0 0 10 10\nimg1 1 20 20 30 30\nimg2 0 5 5 15 15\n");
    fx.write("det.txt", "img1 0 0 0 10 10 0.9\nimg2 0 50 50 60 60 0.8\nimg1 1 20 20 30 30 0.7\n");
    let stdout = ok(&fx.run(&["map", "--gt", "gt.txt", "--dets", "det.txt", "--json", "m.json"]));
    assert!(stdout.contains("mAP"));
    let r = json(fx.path("m.json"));
    assert_eq!(r["schema"], "wshare.map.v1");
    // Class 0: one hit then one miss over two ground truths; class 1: perfect.
    assert!((r["per_class"][0]["ap"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((r["per_class"][1]["ap"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["map"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn manifest_records_inputs_and_epoch() {
    let fx = Fixture::new();
    fx.write("tiny.cfg", TINY_CFG);
    let out = Command::new(env!("CARGO_BIN_EXE_wshare"))
        .current_dir(fx.dir.path())
        .env_remove("WSHARE_ENERGY_CONFIG")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(["analyze", "tiny.cfg", "--json", "r.json"])
        .output()
        .unwrap();
    ok(&out);
    let m = &json(fx.path("r.json"))["manifest"];
    assert_eq!(m["tool"], "wshare");
    assert_eq!(m["command"], "analyze");
    assert_eq!(m["source_date_epoch"], 1_700_000_000u64);
    assert_eq!(m["inputs"][0]["role"], "network");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}
