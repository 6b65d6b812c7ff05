//! Named teacher/student architectures built on libtorch.
//!
//! Every model maps an `(N, C, H, W)` float tensor to `(N, classes)` logits.
//! Construction is seeded: the same [`ModelSpec`] and seed give bitwise
//! identical initial weights.

pub mod audio;
pub mod checkpoint;
mod layers;
pub mod resnet;
pub mod vgg;
pub mod wrn;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tch::{nn, Device, Kind, Tensor};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};

/// L2 rate applied to the audio CNN's convolution kernels.
pub const AUDIO_L2: f64 = 1e-4;

/// Architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    CifarResnet,
    Vgg,
    Wideresnet,
    AudioCnn,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::CifarResnet => "cifar-resnet",
            Family::Vgg => "vgg",
            Family::Wideresnet => "wideresnet",
            Family::AudioCnn => "audio-cnn",
        })
    }
}

/// Complete description of an architecture instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Layer count (ignored for the audio CNN).
    pub depth: usize,
    /// Width multiplier: `k` for wide resnets, channel multiplier for
    /// cifar resnets, unused otherwise.
    pub width: usize,
    pub num_classes: usize,
    /// Input shape `[channels, height, width]`.
    pub input: [usize; 3],
}

impl ModelSpec {
    pub fn cifar_resnet(depth: usize, num_classes: usize) -> Self {
        Self { family: Family::CifarResnet, depth, width: 1, num_classes, input: [3, 32, 32] }
    }

    pub fn vgg(depth: usize, num_classes: usize) -> Self {
        Self { family: Family::Vgg, depth, width: 1, num_classes, input: [3, 32, 32] }
    }

    pub fn wideresnet(depth: usize, widen: usize, num_classes: usize) -> Self {
        Self { family: Family::Wideresnet, depth, width: widen, num_classes, input: [3, 32, 32] }
    }

    pub fn audio_cnn(num_classes: usize) -> Self {
        Self { family: Family::AudioCnn, depth: 4, width: 1, num_classes, input: [1, 98, 64] }
    }

    /// Resolve a preset name such as `resnet56`, `vgg19`, `wrn40-4` or
    /// `audio-cnn`.
    pub fn preset(name: &str, num_classes: usize) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::config(format!("unknown architecture `{name}`")));
        let spec = if lower == "audio-cnn" || lower == "audiocnn" {
            Self::audio_cnn(num_classes)
        } else if let Some(rest) = lower.strip_prefix("wrn").or_else(|| lower.strip_prefix("wideresnet")) {
            let rest = rest.trim_start_matches('-');
            let (d, k) = rest
                .split_once('-')
                .ok_or_else(|| Error::config(format!("architecture `{name}` must look like wrn<depth>-<k>")))?;
            Self::wideresnet(num(d)?, num(k)?, num_classes)
        } else if let Some(d) = lower.strip_prefix("resnet") {
            Self::cifar_resnet(num(d.trim_start_matches('-'))?, num_classes)
        } else if let Some(d) = lower.strip_prefix("vgg") {
            Self::vgg(num(d.trim_start_matches('-'))?, num_classes)
        } else {
            return Err(Error::config(format!("unknown architecture `{name}`")));
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Short canonical name, inverse of [`ModelSpec::preset`].
    pub fn name(&self) -> String {
        match self.family {
            Family::CifarResnet if self.width == 1 => format!("resnet{}", self.depth),
            Family::CifarResnet => format!("resnet{}x{}", self.depth, self.width),
            Family::Vgg => format!("vgg{}", self.depth),
            Family::Wideresnet => format!("wrn{}-{}", self.depth, self.width),
            Family::AudioCnn => "audio-cnn".into(),
        }
    }

    pub fn with_input(mut self, input: [usize; 3]) -> Self {
        self.input = input;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("input shape {:?} has a zero dimension", self.input)));
        }
        match self.family {
            Family::CifarResnet => {
                if self.depth < 8 || (self.depth - 2) % 6 != 0 {
                    return Err(Error::config(format!("cifar-resnet depth must be 6n+2 (n >= 1), got {}", self.depth)));
                }
                if self.width == 0 {
                    return Err(Error::config("cifar-resnet width must be >= 1"));
                }
            }
            Family::Wideresnet => {
                if self.depth < 10 || (self.depth - 4) % 6 != 0 {
                    return Err(Error::config(format!("wideresnet depth must be 6n+4 (n >= 1), got {}", self.depth)));
                }
                if self.width == 0 {
                    return Err(Error::config("wideresnet widen factor must be >= 1"));
                }
            }
            Family::Vgg => {
                if vgg::plan(self.depth).is_none() {
                    return Err(Error::config(format!("vgg depth must be one of 11, 13, 16, 19, got {}", self.depth)));
                }
            }
            Family::AudioCnn => {}
        }
        Ok(())
    }
}

/// Forward interface implemented by every architecture.
pub trait Network: fmt::Debug {
    /// Compute logits. When `taps` is given, intermediate block outputs are
    /// appended in order, matching [`Network::tap_names`].
    fn forward(&self, x: &Tensor, train: bool, taps: Option<&mut Vec<Tensor>>) -> Tensor;

    fn tap_names(&self) -> Vec<String>;

    /// Weights that carry an explicit L2 penalty in the training loss.
    fn penalized_weights(&self) -> Vec<Tensor> {
        Vec::new()
    }
}

/// Anything that maps an input batch to `(N, classes)` logits.
pub trait Classifier {
    fn logits(&self, x: &Tensor, train: bool) -> Tensor;

    fn num_classes(&self) -> usize;

    /// Hash of all state that affects outputs, when available.
    fn fingerprint(&self) -> Option<String> {
        None
    }
}

impl Classifier for Model {
    fn logits(&self, x: &Tensor, train: bool) -> Tensor {
        self.forward(x, train)
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn fingerprint(&self) -> Option<String> {
        Some(self.weight_hash())
    }
}

// libtorch's generator is process-global; serialize seeded construction.
static INIT_LOCK: Mutex<()> = Mutex::new(());

/// A built model: spec, variable store and network graph.
pub struct Model {
    spec: ModelSpec,
    vs: nn::VarStore,
    net: Box<dyn Network + Send>,
    params: Vec<(String, Tensor)>,
    buffers: Vec<(String, Tensor)>,
    frozen: bool,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("params", &self.num_params())
            .field("frozen", &self.frozen)
            .finish()
    }
}

/// Build a freshly initialized model.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let _guard = INIT_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    tch::manual_seed(seed as i64);
    let vs = nn::VarStore::new(Device::Cpu);
    let root = vs.root();
    let c_in = spec.input[0] as i64;
    let classes = spec.num_classes as i64;
    let net: Box<dyn Network + Send> = match spec.family {
        Family::CifarResnet => Box::new(resnet::CifarResNet::new(&root, spec.depth, spec.width, c_in, classes)),
        Family::Vgg => Box::new(vgg::Vgg::new(&root, spec.depth, c_in, classes)),
        Family::Wideresnet => Box::new(wrn::WideResNet::new(&root, spec.depth, spec.width, c_in, classes)),
        Family::AudioCnn => Box::new(audio::AudioCnn::new(&root, c_in, classes)),
    };
    drop(root);
    let (params, buffers) = split_vars(&vs);
    Ok(Model { spec: spec.clone(), vs, net, params, buffers, frozen: false })
}

/// Build the audio CNN for `num_classes` classes on 98x64 log-Mel input.
pub fn build_audio_cnn(num_classes: usize, seed: u64) -> Result<Model> {
    if num_classes < 2 {
        return Err(Error::precondition(format!("audio CNN needs >= 2 classes, got {num_classes}")));
    }
    build_model(&ModelSpec::audio_cnn(num_classes), seed)
}

fn split_vars(vs: &nn::VarStore) -> (Vec<(String, Tensor)>, Vec<(String, Tensor)>) {
    let vars = vs.variables_.lock().unwrap();
    let trainable: Vec<usize> = vars.trainable_variables.iter().map(|v| v.tensor.data_ptr() as usize).collect();
    let mut params = Vec::new();
    let mut buffers = Vec::new();
    for (name, t) in &vars.named_variables {
        let entry = (name.clone(), t.shallow_clone());
        if trainable.contains(&(t.data_ptr() as usize)) {
            params.push(entry);
        } else {
            buffers.push(entry);
        }
    }
    params.sort_by(|a, b| a.0.cmp(&b.0));
    buffers.sort_by(|a, b| a.0.cmp(&b.0));
    (params, buffers)
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Trainable parameters, sorted by name.
    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    /// Non-trainable state (normalization running statistics), sorted by name.
    pub fn buffers(&self) -> &[(String, Tensor)] {
        &self.buffers
    }

    /// Parameters and buffers together, sorted by name.
    pub fn state(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .chain(&self.buffers)
            .map(|(n, t)| (n.clone(), t.shallow_clone()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stop tracking gradients; the model is then only used for inference.
    pub fn freeze(&mut self) {
        self.vs.freeze();
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.vs.unfreeze();
        self.frozen = false;
    }

    /// Logits; `train` selects batch statistics and dropout.
    pub fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        self.net.forward(x, train, None)
    }

    /// Inference-mode logits without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Tensor {
        tch::no_grad(|| self.net.forward(x, false, None))
    }

    /// Inference-mode logits plus intermediate activations.
    pub fn forward_taps(&self, x: &Tensor) -> (Tensor, Vec<Tensor>) {
        tch::no_grad(|| {
            let mut taps = Vec::new();
            let y = self.net.forward(x, false, Some(&mut taps));
            (y, taps)
        })
    }

    pub fn tap_names(&self) -> Vec<String> {
        self.net.tap_names()
    }

    /// Explicit weight penalty added to the training loss (zero for families
    /// that have none).
    pub fn regularization(&self) -> Option<Tensor> {
        let ws = self.net.penalized_weights();
        if ws.is_empty() {
            return None;
        }
        let sum = ws.iter().map(|w| w.square().sum(Kind::Float)).reduce(|a, b| a + b)?;
        Some(sum * AUDIO_L2)
    }

    /// Deep copy with identical weights and buffers.
    pub fn try_clone(&self) -> Result<Model> {
        let mut m = build_model(&self.spec, 0)?;
        m.vs.copy(&self.vs)?;
        if self.frozen {
            m.freeze();
        }
        Ok(m)
    }

    /// Overwrite weights and buffers from another model with the same spec.
    pub fn copy_from(&mut self, other: &Model) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::precondition(format!(
                "cannot copy {} weights into {}",
                other.spec.name(),
                self.spec.name()
            )));
        }
        self.vs.copy(&other.vs)?;
        Ok(())
    }

    /// Overwrite a named tensor in place.
    pub fn set_tensor(&self, name: &str, value: &Tensor) -> Result<()> {
        let t = self
            .params
            .iter()
            .chain(&self.buffers)
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format("checkpoint", format!("model has no tensor `{name}`")))?;
        if t.size() != value.size() {
            return Err(Error::format(
                "checkpoint",
                format!("tensor `{name}` has shape {:?}, expected {:?}", value.size(), t.size()),
            ));
        }
        let mut t = t.shallow_clone();
        tch::no_grad(|| t.copy_(value));
        Ok(())
    }

    /// SHA-256 over every parameter and buffer (names, shapes and bytes).
    pub fn weight_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.state() {
            h.update(name.as_bytes());
            for d in t.size() {
                h.update(d.to_le_bytes());
            }
            h.update(tensor_bytes(&t));
        }
        hex::encode(h.finalize())
    }
}

/// Raw little-endian bytes of a tensor, contiguous, on CPU.
pub(crate) fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    let t = t.detach().to_device(Device::Cpu).contiguous();
    let n = t.numel() * t.kind().elt_size_in_bytes();
    let mut out = vec![0u8; n];
    t.copy_data_u8(&mut out, t.numel());
    out
}

/// Copy a float tensor into a `Vec<f32>`.
pub fn to_vec_f32(t: &Tensor) -> Vec<f32> {
    let t = t.detach().to_device(Device::Cpu).to_kind(Kind::Float).contiguous().view(-1);
    Vec::<f32>::try_from(&t).expect("float tensor converts to Vec<f32>")
}
