//! Whole-network checks on the bundled YOLOv3 608x608 definition.

use wshare::energy::{calibrate_fp_energy, frame_energy, EnergyConfig, FpEnergy};
use wshare::netdef::{parse_config, LayerCensus, NetworkDef, TensorShape, YOLOV3_608_CFG};
use wshare::traffic::{aggregate, op_profile, ShortcutBucketing, TrafficOptions};

fn yolo() -> NetworkDef {
    parse_config(YOLOV3_608_CFG).unwrap()
}

#[test]
fn census_and_shapes() {
    let net = yolo();
    assert_eq!(
        net.census(),
        LayerCensus { convolutional: 75, shortcut: 23, route: 4, upsample: 2, yolo: 3 }
    );
    assert_eq!(net.layers.len(), 107);
    let yolo_shapes: Vec<TensorShape> = net
        .layers
        .iter()
        .filter(|l| matches!(l.kind, wshare::netdef::LayerKind::Yolo(_)))
        .map(|l| l.out_shape)
        .collect();
    assert_eq!(
        yolo_shapes,
        vec![TensorShape::new(19, 19, 255), TensorShape::new(38, 38, 255), TensorShape::new(76, 76, 255)]
    );
}

#[test]
fn parameter_count_matches_public_weights_file() {
    // yolov3.weights is 248,007,048 bytes: a 20-byte header plus 62,001,757 floats.
    let net = yolo();
    let params: u64 = net
        .conv_layers()
        .map(|(_, l, c)| {
            let f = c.filters as u64;
            f + if c.batch_normalize { 3 * f } else { 0 } + c.weight_count(l.in_shape.c) as u64
        })
        .sum();
    assert_eq!(params, 62_001_757);
    assert_eq!(20 + 4 * params, 248_007_048);
}

#[test]
fn access_totals() {
    // Frozen from an independent prototype of the same per-layer formulas.
    let (_, t) = aggregate(&yolo(), &TrafficOptions::default()).unwrap();
    assert_eq!(t.weight_reads, 1_809_135_936);
    assert_eq!(t.output_writes, 152_748_486);
    assert_eq!(t.total(), 2_201_275_753);
    assert_eq!(op_profile(&yolo()).macs, 70_345_950_208);
}

#[test]
fn bucketing_choice_is_the_closer_match() {
    let target = (0.819, 0.120, 0.061);
    let dist = |b: ShortcutBucketing| {
        let opts = TrafficOptions { shortcut: b, ..Default::default() };
        let s = aggregate(&yolo(), &opts).unwrap().1.split();
        (s.weights - target.0).abs().max((s.inputs - target.1).abs()).max((s.outputs - target.2).abs())
    };
    assert!(dist(ShortcutBucketing::BothInputs) < dist(ShortcutBucketing::SplitOperands));
    assert!(dist(ShortcutBucketing::BothInputs) <= 0.02);
    assert_eq!(TrafficOptions::default().shortcut, ShortcutBucketing::BothInputs);
}

#[test]
fn shipped_fp_energies_are_the_calibrated_ones() {
    let net = yolo();
    let cfg = EnergyConfig::default();
    let (_, profile) = aggregate(&net, &TrafficOptions::default()).unwrap();
    let ops = op_profile(&net);
    let base = frame_energy(&net, &profile, &ops, &cfg, None).unwrap();
    let seed = FpEnergy::new(0.9, 3.7);
    let cal = calibrate_fp_energy(cfg.calibration_dram_share.unwrap(), base.dram_mj, &ops, &seed).unwrap();
    assert!((cal.fp.add_pj - cfg.fp.add_pj).abs() < 1e-5, "{} vs {}", cal.fp.add_pj, cfg.fp.add_pj);
    assert!((cal.fp.mul_pj - cfg.fp.mul_pj).abs() < 1e-5, "{} vs {}", cal.fp.mul_pj, cfg.fp.mul_pj);
    assert!((base.fractions.dram - 0.844).abs() < 1e-5);
    assert!(ops.mac_share() >= 0.99);
}
