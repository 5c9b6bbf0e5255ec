//! Dense tensors, a reverse-mode tape, Adam and multi-head self-attention.

pub mod adam;
pub mod attention;
pub mod gradcheck;
pub mod init;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{AttentionParams, AttnMask, MASK_FILL};
pub use gradcheck::{grad_check, grad_check_coords, params_fn, GradCheckReport};
pub use params::{ModelParams, CHECKPOINT_MAGIC};
pub use tape::{Tape, Var};
pub use tensor::{Real, Tensor};
