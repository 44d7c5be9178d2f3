//! The neck building blocks: channel gate, attention upsampling (AU),
//! attention downsampling (AD), parallel atrous convolution (PAC) and the CSP
//! fusion blocks built around it.

mod csp;
mod gate;
mod sampling;

pub use csp::{CspPac, Pac, PlainCsp, DILATIONS};
pub use gate::ChannelGate;
pub use sampling::{AttentionDownsample, AttentionUpsample};

use crate::error::{Error, Result};

pub(crate) fn require_even_channels(op: &'static str, c: usize) -> Result<()> {
    if c % 2 != 0 || c == 0 {
        return Err(Error::OddChannels { op, c });
    }
    Ok(())
}

pub(crate) fn require_channels(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ChannelMismatch { op, expected, got });
    }
    Ok(())
}
