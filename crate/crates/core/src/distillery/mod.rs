//! Distillation objectives, teacher-signal degradation, batch mixing,
//! optimizers and the training loops.

pub mod config;
pub mod eval;
pub mod loss;
pub mod mix;
pub mod optim;
pub mod signal;
pub mod train;

pub use config::{Budget, DistillConfig, TrainConfig};
pub use eval::{evaluate, EvalResult};
pub use loss::{kd_grad, kd_loss, log_soften, logit_regression_loss, soften, LossKind};
pub use mix::{cutmix, cutmix_with, mixup, mixup_with, CutBox, MixKind, MixedBatch};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, Schedule};
pub use signal::{degrade_signal, degrade_signal_with, SignalMode, TeacherSignal};
pub use train::{distill, train_supervised, DistillOutcome, StepHook, Student, SupervisedConfig, TrainOutcome};
