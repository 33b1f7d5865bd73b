//! Minimal dense reverse-mode autodiff engine with the layers and losses the CNN baselines need.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod optim;
pub mod param;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use graph::{BatchStats, Graph, Mode, PoolKind, Var};
pub use kernels::loss::sigmoid;
pub use kernels::norm::{BN_EPS, BN_MOMENTUM};
pub use optim::{Adam, AdamConfig};
pub use param::{glorot_uniform, ParamStore, Parameter};
pub use tensor::{Scalar, Tensor};
