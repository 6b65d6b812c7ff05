//! VGG with batch normalization, CIFAR variant (single linear classifier on
//! the 1x1x512 feature map).

use tch::nn::{self, Module, ModuleT};
use tch::Tensor;

use super::layers::{batch_norm, conv3x3, head};
use super::Network;

/// Channel plan; `0` marks a 2x2 max-pool.
pub fn plan(depth: usize) -> Option<&'static [i64]> {
    match depth {
        11 => Some(&[64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0]),
        13 => Some(&[64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0]),
        16 => Some(&[64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0]),
        19 => Some(&[
            64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0,
        ]),
        _ => None,
    }
}

#[derive(Debug)]
enum Layer {
    ConvBn(nn::Conv2D, nn::BatchNorm),
    Pool,
}

#[derive(Debug)]
pub struct Vgg {
    layers: Vec<Layer>,
    fc: nn::Linear,
}

impl Vgg {
    pub fn new(p: &nn::Path, depth: usize, in_channels: i64, classes: i64) -> Self {
        let mut c_in = in_channels;
        let mut layers = Vec::new();
        for (i, &c) in plan(depth).expect("depth validated by ModelSpec").iter().enumerate() {
            if c == 0 {
                layers.push(Layer::Pool);
            } else {
                layers.push(Layer::ConvBn(
                    conv3x3(p / format!("conv{i}"), c_in, c, 1, true),
                    batch_norm(p / format!("bn{i}"), c),
                ));
                c_in = c;
            }
        }
        Self {
            layers,
            fc: head(p / "fc", c_in, classes),
        }
    }
}

impl Network for Vgg {
    fn forward(&self, x: &Tensor, train: bool, mut taps: Option<&mut Vec<Tensor>>) -> Tensor {
        let mut h = x.shallow_clone();
        for l in &self.layers {
            h = match l {
                Layer::ConvBn(c, bn) => {
                    let y = bn.forward_t(&c.forward(&h), train).relu();
                    if let Some(t) = taps.as_deref_mut() {
                        t.push(y.shallow_clone());
                    }
                    y
                }
                Layer::Pool => h.max_pool2d_default(2),
            };
        }
        // Global pooling makes the head independent of the input resolution.
        let h = h.adaptive_avg_pool2d([1, 1]).flatten(1, -1);
        self.fc.forward(&h)
    }

    fn tap_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Layer::ConvBn(..)).then(|| format!("conv{i}")))
            .collect()
    }
}
