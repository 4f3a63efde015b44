//! Library results against the independent oracles in `wshare-testkit`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wshare::cluster::{cluster_model, kmeans_1d, ClusterConfig, DarknetWeights, KMeansConfig, LayerWeights, Scope};
use wshare::engine::{conv_forward, gemm_nn, run_network, Epilogue, Kernel, Kernels, Matrix, Tensor};
use wshare::netdef::{parse_config, TensorShape, YOLOV3_608_CFG};
use wshare::traffic::{conv_accesses, TrafficOptions};
use wshare_testkit::{access, conv, gemm, kmeans_dp, toy};

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn gemm_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (m, n, k) = (rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7));
        let alpha: f32 = rng.random_range(-2.0..2.0);
        let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c0: Vec<f32> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut expected = c0.clone();
        gemm::gemm_nn_raw(m, n, k, alpha, &a, k, &b, n, &mut expected, n);
        let mut c = Matrix::from_vec(m, n, c0).unwrap();
        gemm_nn(alpha, &Matrix::from_vec(m, k, a).unwrap(), &Matrix::from_vec(k, n, b).unwrap(), &mut c).unwrap();
        assert_eq!(bits(c.data()), bits(&expected));
    }
}

fn conv_cfg(h: usize, w: usize, c: usize, f: usize, k: usize, s: usize, bn: bool, leaky: bool) -> String {
    format!(
        "[net]\nwidth={w}\nheight={h}\nchannels={c}\n[convolutional]\n{}filters={f}\nsize={k}\nstride={s}\npad=1\nactivation={}\n",
        if bn { "batch_normalize=1\n" } else { "" },
        if leaky { "leaky" } else { "linear" }
    )
}

#[test]
fn im2col_conv_matches_direct_conv_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..60 {
        let k = if trial % 3 == 0 { 1 } else { 3 };
        let s = if trial % 4 == 1 { 2 } else { 1 };
        let (h, w, c, f) = (rng.random_range(3..12), rng.random_range(3..12), rng.random_range(1..5), rng.random_range(1..6));
        let net = parse_config(&conv_cfg(h, w, c, f, k, s, trial % 2 == 0, trial % 5 != 0)).unwrap();
        let weights = DarknetWeights::synthetic(&net, trial);
        let p = &weights.convs[0];
        let input = toy::toy_input(&net, trial);
        let got = conv_forward(
            &net.layers[0],
            &input,
            Kernel::Dense(&p.kernel),
            Epilogue { biases: &p.biases, batch_norm: p.batch_norm.as_ref() },
        )
        .unwrap();
        let want = conv::direct_conv(&net.layers[0], &input, &p.kernel, &p.biases, p.batch_norm.as_ref());
        assert_eq!(got.shape, net.layers[0].out_shape);
        assert_eq!(bits(&got.data), bits(&want.data), "trial {trial}");
    }
}

#[test]
fn hand_constant_input_interior_is_nine_c() {
    let net = parse_config(&conv_cfg(6, 6, 1, 1, 3, 1, false, false)).unwrap();
    let input = Tensor::from_vec(net.input, vec![1.25; 36]).unwrap();
    let out = conv::direct_conv(&net.layers[0], &input, &[1.0; 9], &[0.0], None);
    assert_eq!(out.at(0, 2, 3), 9.0 * 1.25);
}

#[test]
fn traffic_formulas_match_fetch_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = TrafficOptions::default();
    for trial in 0..100 {
        let (k, s) = match trial % 3 {
            0 => (1, 1),
            1 => (3, 1),
            _ => (3, 2),
        };
        let h = 2 * rng.random_range(2..20);
        let w = 2 * rng.random_range(2..20);
        let net = parse_config(&conv_cfg(h, w, rng.random_range(1..64), rng.random_range(1..64), k, s, true, true)).unwrap();
        let p = conv_accesses(&net.layers[0], &opts).unwrap();
        let sim = access::simulate_conv(&net.layers[0]);
        assert_eq!((p.weight_reads, p.input_reads, p.output_writes), (sim.weights, sim.inputs, sim.outputs));
        assert_eq!(p.output_reads, 0);
    }
    let yolo = parse_config(YOLOV3_608_CFG).unwrap();
    for (_, l, _) in yolo.conv_layers() {
        let p = conv_accesses(l, &opts).unwrap();
        let sim = access::simulate_conv(l);
        assert_eq!((p.weight_reads, p.input_reads, p.output_writes), (sim.weights, sim.inputs, sim.outputs));
    }
}

#[test]
fn kmeans_close_to_exact_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let v: Vec<f32> = (0..1000).map(|_| rng.random_range(0.0f32..1.0)).collect();
        for k in [2, 4, 8] {
            let r = kmeans_1d(&v, k, &KMeansConfig::default()).unwrap();
            let opt = kmeans_dp::optimal_sse(&v, k);
            assert!(r.sse >= opt * (1.0 - 1e-9) - 1e-12, "below optimum: {} < {}", r.sse, opt);
            assert!(r.sse <= opt * 1.05 + 1e-12, "k={k}: {} vs {}", r.sse, opt);
        }
    }
}

#[test]
fn reconstruction_mse_is_sse_over_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v: Vec<f32> = (0..500).map(|_| rng.random_range(-0.3f32..0.3)).collect();
    let cfg = ClusterConfig::new(Scope::PerLayer, 5).unwrap();
    let out = cluster_model(&[LayerWeights { layer: 0, weights: &v }], &cfg).unwrap();
    let deq = &out.model.dequantize_layers(&[(0, v.len())]).unwrap()[0];
    let mse = v.iter().zip(deq).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>() / v.len() as f64;
    let r = kmeans_1d(&v, 32, &KMeansConfig::default()).unwrap();
    assert!((mse - r.mse()).abs() <= 1e-12 * mse.max(1e-30));
    assert!((mse - out.stats[0].sse / v.len() as f64).abs() <= 1e-12 * mse.max(1e-30));
}

#[test]
fn global_scope_file_has_one_table() {
    let net = parse_config(toy::TWO_CONV_CFG).unwrap();
    let w = DarknetWeights::synthetic(&net, 2);
    let model = cluster_model(&w.kernels(), &ClusterConfig::new(Scope::AllLayers, 5).unwrap()).unwrap().model;
    let bytes = wshare::cluster::write_clustered(&model);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), u32::MAX);
    let back = wshare::cluster::read_clustered(&bytes).unwrap();
    assert_eq!(back.tables.len(), 1);
    assert_eq!(back.total_indices(), w.convs.iter().map(|c| c.kernel.len()).sum::<usize>());
}

#[test]
fn single_layer_network_equals_conv_forward() {
    let net = parse_config(&conv_cfg(8, 8, 3, 4, 3, 1, true, true)).unwrap();
    let w = DarknetWeights::synthetic(&net, 9);
    let input = toy::toy_input(&net, 9);
    let outs = run_network(&net, &w, Kernels::Dense, &input).unwrap();
    let p = &w.convs[0];
    let direct = conv_forward(
        &net.layers[0],
        &input,
        Kernel::Dense(&p.kernel),
        Epilogue { biases: &p.biases, batch_norm: p.batch_norm.as_ref() },
    )
    .unwrap();
    assert_eq!(outs[0], direct);
}

#[test]
fn toy_network_shapes_and_clustered_equivalence() {
    let net = toy::toy_net();
    let w = toy::toy_weights(&net, 5);
    let input = toy::toy_input(&net, 5);
    let dense = run_network(&net, &w, Kernels::Dense, &input).unwrap();
    for (o, l) in dense.iter().zip(&net.layers) {
        assert_eq!(o.shape, l.out_shape);
    }
    assert_eq!(dense.last().unwrap().shape, TensorShape::new(16, 16, 8));

    for scope in [Scope::PerLayer, Scope::AllLayers] {
        let cfg = ClusterConfig::new(scope, 5).unwrap();
        let model = cluster_model(&w.kernels(), &cfg).unwrap().model;
        let indirect = run_network(&net, &w, Kernels::Clustered(&model), &input).unwrap();
        let deq = w.with_clustered_kernels(&model).unwrap();
        let direct = run_network(&net, &deq, Kernels::Dense, &input).unwrap();
        for (a, b) in indirect.iter().zip(&direct) {
            assert_eq!(bits(&a.data), bits(&b.data));
        }
    }
}

#[test]
fn lossless_clustering_reproduces_outputs() {
    // Few distinct kernel values: 8-bit tables hold all of them.
    let net = parse_config(&conv_cfg(8, 8, 2, 3, 3, 1, true, true)).unwrap();
    let mut w = DarknetWeights::synthetic(&net, 11);
    for (i, x) in w.convs[0].kernel.iter_mut().enumerate() {
        *x = ((i % 17) as f32 - 8.0) * 0.0625;
    }
    let cfg = ClusterConfig::new(Scope::PerLayer, 8).unwrap();
    let out = cluster_model(&[LayerWeights { layer: 0, weights: &w.convs[0].kernel }], &cfg).unwrap();
    assert_eq!(out.total_sse(), 0.0);
    let input = toy::toy_input(&net, 1);
    let a = run_network(&net, &w, Kernels::Dense, &input).unwrap();
    let b = run_network(&net, &w, Kernels::Clustered(&out.model), &input).unwrap();
    assert_eq!(bits(&a[0].data), bits(&b[0].data));
}
