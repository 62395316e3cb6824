//! Differentiable dense-tensor layer: values, the reverse-mode tape, layers,
//! convolutions, Fourier transforms and the optimizer.

mod activation;
pub mod conv;
pub mod fft;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use activation::{sigmoid, Activation};
pub use conv::{conv3_forward, conv3_value, Conv3, ConvGeom, Padding};
pub use fft::{fft3, ifft3, retained_modes, spectral_forward, spectral_value, Complex, SpectralGeom};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{
    attention_forward, gru_forward, mlp_forward, siren_forward, softmax, Dense, GruCell, LayerKind, LayerSpec, Mlp,
    SelfAttention,
};
pub use optim::{adam_step, AdamConfig, PlateauSchedule, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS, DEFAULT_LR};
pub use params::{init_affine_bias, init_affine_weight, init_siren_weight, uniform, ParamEntry, ParamId, ParamStore};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
