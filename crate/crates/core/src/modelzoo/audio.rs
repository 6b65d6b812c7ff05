//! Compact CNN for log-Mel inputs laid out as (N, 1, frames, mel bins).
//!
//! Each block runs a (4x1) temporal and a (1x4) spectral convolution in
//! parallel, concatenates them and fuses with a 1x1 convolution, followed by
//! group norm, ReLU, a ceil-mode 2x2 max-pool and spatial dropout.

use tch::nn::{self, ConvConfigND, Module};
use tch::Tensor;

use super::layers::{head, CONV_INIT};
use super::Network;

pub const BLOCK_CHANNELS: [i64; 4] = [24, 32, 64, 128];
pub const KERNEL: i64 = 4;
pub const DROPOUT: f64 = 0.2;
pub const MAX_GROUPS: i64 = 8;

fn conv(p: nn::Path, c_in: i64, c_out: i64, k: [i64; 2]) -> nn::Conv<[i64; 2]> {
    nn::conv(
        p,
        c_in,
        c_out,
        k,
        ConvConfigND {
            stride: [1, 1],
            padding: [0, 0],
            dilation: [1, 1],
            groups: 1,
            bias: true,
            ws_init: CONV_INIT,
            bs_init: nn::Init::Const(0.0),
            padding_mode: nn::PaddingMode::Zeros,
        },
    )
}

/// Group count used for `c` channels.
pub fn groups_for(c: i64) -> i64 {
    let mut g = MAX_GROUPS.min(c);
    while c % g != 0 {
        g -= 1;
    }
    g
}

#[derive(Debug)]
struct Block {
    time: nn::Conv<[i64; 2]>,
    freq: nn::Conv<[i64; 2]>,
    fuse: nn::Conv<[i64; 2]>,
    norm: nn::GroupNorm,
}

impl Block {
    fn new(p: nn::Path, c_in: i64, c_out: i64) -> Self {
        Self {
            time: conv(&p / "time", c_in, c_out, [KERNEL, 1]),
            freq: conv(&p / "freq", c_in, c_out, [1, KERNEL]),
            fuse: conv(&p / "fuse", 2 * c_out, c_out, [1, 1]),
            norm: nn::group_norm(&p / "norm", groups_for(c_out), c_out, Default::default()),
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        // 'same' padding for an even kernel: one before, two after.
        let lo = (KERNEL - 1) / 2;
        let hi = KERNEL - 1 - lo;
        let t = self.time.forward(&x.constant_pad_nd([0, 0, lo, hi]));
        let f = self.freq.forward(&x.constant_pad_nd([lo, hi, 0, 0]));
        let y = self.fuse.forward(&Tensor::cat(&[t, f], 1));
        let y = self.norm.forward(&y).relu();
        let y = y.max_pool2d([2, 2], [2, 2], [0, 0], [1, 1], true);
        y.feature_dropout(DROPOUT, train)
    }

    fn weights(&self) -> [&Tensor; 3] {
        [&self.time.ws, &self.freq.ws, &self.fuse.ws]
    }
}

#[derive(Debug)]
pub struct AudioCnn {
    blocks: Vec<Block>,
    fc: nn::Linear,
}

impl AudioCnn {
    pub fn new(p: &nn::Path, in_channels: i64, classes: i64) -> Self {
        let mut c_in = in_channels;
        let mut blocks = Vec::new();
        for (i, &c) in BLOCK_CHANNELS.iter().enumerate() {
            blocks.push(Block::new(p / format!("block{i}"), c_in, c));
            c_in = c;
        }
        Self {
            blocks,
            fc: head(p / "fc", c_in, classes),
        }
    }
}

impl Network for AudioCnn {
    fn forward(&self, x: &Tensor, train: bool, mut taps: Option<&mut Vec<Tensor>>) -> Tensor {
        let mut h = x.shallow_clone();
        for b in &self.blocks {
            h = b.forward(&h, train);
            if let Some(t) = taps.as_deref_mut() {
                t.push(h.shallow_clone());
            }
        }
        let h = h.amax(&[2i64, 3][..], false);
        self.fc.forward(&h)
    }

    fn tap_names(&self) -> Vec<String> {
        (0..self.blocks.len()).map(|i| format!("block{i}")).collect()
    }

    fn penalized_weights(&self) -> Vec<Tensor> {
        self.blocks.iter().flat_map(|b| b.weights().map(Tensor::shallow_clone)).collect()
    }
}
