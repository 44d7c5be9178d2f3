//! Dense NCHW tensors with reverse-mode differentiation, and the neck blocks
//! built on them: channel-gated attention upsampling and downsampling, parallel
//! atrous convolution (PAC), CSP-PAC fusion, and a three-level feature pyramid.
//!
//! Layout:
//!
//! * [`tensor`], [`kernels`], [`autodiff`]: the numeric core.
//! * [`layers`]: convolution parameter holders shared by every block.
//! * [`neck`]: the individual blocks.
//! * [`pyramid`]: config-driven neck assembly and the stub backbone.
//! * [`analysis`]: parameter/FLOP accounting and latency measurement.
//! * [`io`]: tensor files, checkpoints and PNM images.

// `is_multiple_of` and `repeat_n` postdate the declared MSRV.
#![allow(clippy::manual_is_multiple_of, clippy::manual_repeat_n)]

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod io;
pub mod kernels;
pub mod layers;
pub mod neck;
pub mod pyramid;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use autodiff::{gradcheck, gradcheck_block, GradcheckOptions, GradcheckReport, Gradients, Graph, OpKind, Var};
pub use error::{Error, Result};
pub use layers::{Activation, Block, Conv, ConvSpec, ConvTranspose, Parameters};
pub use neck::{AttentionDownsample, AttentionUpsample, ChannelGate, CspPac, Pac, PlainCsp};
pub use pyramid::{NeckConfig, NeckGraph, StubBackbone};
pub use rng::SeedStream;
pub use scalar::{Scalar, ScalarKind};
pub use tensor::{Dims, Tensor};
