//! Small layer helpers shared by the architectures.

use tch::nn::{self, ConvConfig, Init};
use tch::Tensor;

/// Gaussian init scaled by fan-out, as used for all convolutions.
pub const CONV_INIT: Init = Init::Kaiming {
    dist: nn::init::NormalOrUniform::Normal,
    fan: nn::init::FanInOut::FanOut,
    non_linearity: nn::init::NonLinearity::ReLU,
};

pub fn conv3x3(p: nn::Path, c_in: i64, c_out: i64, stride: i64, bias: bool) -> nn::Conv2D {
    nn::conv2d(
        p,
        c_in,
        c_out,
        3,
        ConvConfig {
            stride,
            padding: 1,
            bias,
            ws_init: CONV_INIT,
            ..Default::default()
        },
    )
}

pub fn conv1x1(p: nn::Path, c_in: i64, c_out: i64, stride: i64, bias: bool) -> nn::Conv2D {
    nn::conv2d(
        p,
        c_in,
        c_out,
        1,
        ConvConfig {
            stride,
            bias,
            ws_init: CONV_INIT,
            ..Default::default()
        },
    )
}

pub fn batch_norm(p: nn::Path, c: i64) -> nn::BatchNorm {
    nn::batch_norm2d(p, c, Default::default())
}

/// Classifier head with zero bias.
pub fn head(p: nn::Path, c_in: i64, classes: i64) -> nn::Linear {
    nn::linear(
        p,
        c_in,
        classes,
        nn::LinearConfig {
            bs_init: Some(Init::Const(0.0)),
            ..Default::default()
        },
    )
}

/// Global average pool over the spatial dims: (N, C, H, W) -> (N, C).
pub fn global_avg(x: &Tensor) -> Tensor {
    x.mean_dim(&[2i64, 3][..], false, tch::Kind::Float)
}
