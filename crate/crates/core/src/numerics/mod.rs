//! Dense math, neural-layer primitives, optimizers and gradient checking.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheck};
pub use layers::{attention_score, gcn_layer, lstm_step, sigmoid, softmax, LstmParams};
pub use optim::{adam_step, radam_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use tape::{bce_value, Grads, ParamGrads, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;
