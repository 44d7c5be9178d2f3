//! Three-level neck assembly (P3/P4/P5 at strides 8/16/32).
//!
//! Top-down, the coarsest level is upsampled, concatenated with the next finer
//! level and fused; bottom-up, the finest fused level is downsampled,
//! concatenated with the top-down result one level coarser and fused again.
//! Each of the three module families can be swapped for a baseline op via
//! [`NeckConfig`].

mod backbone;
mod config;
mod graph;

pub use backbone::{NeckModel, StubBackbone};
pub use config::{NeckConfig, BASELINE_CSP_DEPTH, LEVEL_STRIDES};
pub use graph::{BlockSlot, Downsampler, Fusion, NeckGraph, Upsampler};
