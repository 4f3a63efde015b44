//! Small networks exercising every layer kind, sized for exhaustive tests.

use wshare::cluster::DarknetWeights;
use wshare::engine::Tensor;
use wshare::netdef::{parse_config, NetworkDef};

/// 16x16x3 input; conv (BN, leaky), strided conv, shortcut, route, upsample,
/// a linear head and a YOLO layer.
pub const TOY_CFG: &str = "\
[net]
width=16
height=16
channels=3

[convolutional]
batch_normalize=1
filters=8
size=3
stride=1
pad=1
activation=leaky

[convolutional]
batch_normalize=1
filters=16
size=3
stride=2
pad=1
activation=leaky

[convolutional]
batch_normalize=1
filters=8
size=1
stride=1
pad=1
activation=leaky

[convolutional]
batch_normalize=1
filters=16
size=3
stride=1
pad=1
activation=leaky

[shortcut]
from=-3
activation=linear

[convolutional]
filters=18
size=1
stride=1
pad=1
activation=linear

[yolo]
mask=0,1,2
anchors=10,13, 16,30, 33,23
classes=1
num=3

[route]
layers=-3

[upsample]
stride=2

[route]
layers=-1, 0

[convolutional]
batch_normalize=1
filters=8
size=3
stride=1
pad=1
activation=leaky
";

/// Two 3x3 convolutions on an 8x8x2 input.
pub const TWO_CONV_CFG: &str = "\
[net]
width=8
height=8
channels=2

[convolutional]
filters=4
size=3
stride=1
pad=1
activation=leaky

[convolutional]
filters=4
size=3
stride=1
pad=1
activation=linear
";

pub fn toy_net() -> NetworkDef {
    parse_config(TOY_CFG).expect("toy cfg parses")
}

pub fn toy_weights(net: &NetworkDef, seed: u64) -> DarknetWeights {
    DarknetWeights::synthetic(net, seed)
}

/// Deterministic pseudo-random input in `[-1, 1)` (SplitMix64).
pub fn toy_input(net: &NetworkDef, seed: u64) -> Tensor {
    let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
    let data = (0..net.input.elements())
        .map(|_| {
            s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            ((z >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
        })
        .collect();
    Tensor { shape: net.input, data }
}
