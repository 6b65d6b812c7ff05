//! Wide residual networks: pre-activation basic blocks, widths 16k/32k/64k,
//! 1x1 projection shortcuts where the shape changes.

use tch::nn::{self, Module, ModuleT};
use tch::Tensor;

use super::layers::{batch_norm, conv1x1, conv3x3, global_avg, head};
use super::Network;

#[derive(Debug)]
struct WideBlock {
    bn1: nn::BatchNorm,
    conv1: nn::Conv2D,
    bn2: nn::BatchNorm,
    conv2: nn::Conv2D,
    shortcut: Option<nn::Conv2D>,
}

impl WideBlock {
    fn new(p: nn::Path, c_in: i64, c_out: i64, stride: i64) -> Self {
        let shortcut = (c_in != c_out || stride != 1).then(|| conv1x1(&p / "shortcut", c_in, c_out, stride, false));
        Self {
            bn1: batch_norm(&p / "bn1", c_in),
            conv1: conv3x3(&p / "conv1", c_in, c_out, stride, false),
            bn2: batch_norm(&p / "bn2", c_out),
            conv2: conv3x3(&p / "conv2", c_out, c_out, 1, false),
            shortcut,
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let a = self.bn1.forward_t(x, train).relu();
        let y = self.conv1.forward(&a);
        let y = self.conv2.forward(&self.bn2.forward_t(&y, train).relu());
        match &self.shortcut {
            // Projection shortcuts consume the pre-activated input.
            Some(s) => y + s.forward(&a),
            None => y + x,
        }
    }
}

#[derive(Debug)]
pub struct WideResNet {
    stem: nn::Conv2D,
    blocks: Vec<WideBlock>,
    bn: nn::BatchNorm,
    fc: nn::Linear,
    per_group: usize,
}

impl WideResNet {
    pub fn new(p: &nn::Path, depth: usize, widen: usize, in_channels: i64, classes: i64) -> Self {
        let n = (depth - 4) / 6;
        let k = widen as i64;
        let widths = [16 * k, 32 * k, 64 * k];
        let mut c_in = 16;
        let mut blocks = Vec::new();
        for (g, &c_out) in widths.iter().enumerate() {
            for b in 0..n {
                let stride = if g > 0 && b == 0 { 2 } else { 1 };
                blocks.push(WideBlock::new(p / format!("group{}", g + 1) / format!("block{b}"), c_in, c_out, stride));
                c_in = c_out;
            }
        }
        Self {
            stem: conv3x3(p / "stem", in_channels, 16, 1, false),
            blocks,
            bn: batch_norm(p / "bn", c_in),
            fc: head(p / "fc", c_in, classes),
            per_group: n,
        }
    }
}

impl Network for WideResNet {
    fn forward(&self, x: &Tensor, train: bool, mut taps: Option<&mut Vec<Tensor>>) -> Tensor {
        let mut h = self.stem.forward(x);
        if let Some(t) = taps.as_deref_mut() {
            t.push(h.shallow_clone());
        }
        for b in &self.blocks {
            h = b.forward(&h, train);
            if let Some(t) = taps.as_deref_mut() {
                t.push(h.shallow_clone());
            }
        }
        let h = self.bn.forward_t(&h, train).relu();
        self.fc.forward(&global_avg(&h))
    }

    fn tap_names(&self) -> Vec<String> {
        std::iter::once("stem".to_string())
            .chain((0..self.blocks.len()).map(|i| format!("group{}.block{}", i / self.per_group + 1, i % self.per_group)))
            .collect()
    }
}
