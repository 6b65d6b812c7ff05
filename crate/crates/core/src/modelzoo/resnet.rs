//! CIFAR-style residual networks (6n+2 layers, widths 16/32/64 scaled by a
//! width multiplier, zero-padded identity shortcuts).

use tch::nn::{self, Module, ModuleT};
use tch::Tensor;

use super::layers::{batch_norm, conv3x3, global_avg, head};
use super::Network;

#[derive(Debug)]
struct BasicBlock {
    conv1: nn::Conv2D,
    bn1: nn::BatchNorm,
    conv2: nn::Conv2D,
    bn2: nn::BatchNorm,
    stride: i64,
    pad_channels: i64,
}

impl BasicBlock {
    fn new(p: nn::Path, c_in: i64, c_out: i64, stride: i64) -> Self {
        Self {
            conv1: conv3x3(&p / "conv1", c_in, c_out, stride, false),
            bn1: batch_norm(&p / "bn1", c_out),
            conv2: conv3x3(&p / "conv2", c_out, c_out, 1, false),
            bn2: batch_norm(&p / "bn2", c_out),
            stride,
            pad_channels: c_out - c_in,
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let y = self.bn1.forward_t(&self.conv1.forward(x), train).relu();
        let y = self.bn2.forward_t(&self.conv2.forward(&y), train);
        let shortcut = if self.stride == 1 && self.pad_channels == 0 {
            x.shallow_clone()
        } else {
            let sub = x.slice(2, 0, None, self.stride).slice(3, 0, None, self.stride);
            let half = self.pad_channels / 2;
            sub.constant_pad_nd([0, 0, 0, 0, half, self.pad_channels - half])
        };
        (y + shortcut).relu()
    }
}

#[derive(Debug)]
pub struct CifarResNet {
    stem: nn::Conv2D,
    stem_bn: nn::BatchNorm,
    blocks: Vec<BasicBlock>,
    fc: nn::Linear,
}

impl CifarResNet {
    pub fn new(p: &nn::Path, depth: usize, width: usize, in_channels: i64, classes: i64) -> Self {
        let n = (depth - 2) / 6;
        let w = width as i64;
        let widths = [16 * w, 32 * w, 64 * w];
        let mut blocks = Vec::new();
        let mut c_in = 16 * w;
        for (stage, &c_out) in widths.iter().enumerate() {
            for b in 0..n {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(p / format!("stage{}", stage + 1) / format!("block{b}"), c_in, c_out, stride));
                c_in = c_out;
            }
        }
        Self {
            stem: conv3x3(p / "stem", in_channels, 16 * w, 1, false),
            stem_bn: batch_norm(p / "stem_bn", 16 * w),
            blocks,
            fc: head(p / "fc", c_in, classes),
        }
    }
}

impl Network for CifarResNet {
    fn forward(&self, x: &Tensor, train: bool, mut taps: Option<&mut Vec<Tensor>>) -> Tensor {
        let mut h = self.stem_bn.forward_t(&self.stem.forward(x), train).relu();
        if let Some(t) = taps.as_deref_mut() {
            t.push(h.shallow_clone());
        }
        for b in &self.blocks {
            h = b.forward(&h, train);
            if let Some(t) = taps.as_deref_mut() {
                t.push(h.shallow_clone());
            }
        }
        self.fc.forward(&global_avg(&h))
    }

    fn tap_names(&self) -> Vec<String> {
        let n = self.blocks.len() / 3;
        std::iter::once("stem".to_string())
            .chain((0..self.blocks.len()).map(|i| format!("stage{}.block{}", i / n + 1, i % n)))
            .collect()
    }
}
