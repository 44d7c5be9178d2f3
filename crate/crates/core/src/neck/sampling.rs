//! Dual-branch, channel-gated resampling blocks.
//!
//! Both blocks share one dataflow: a gate computed from the block input, two
//! branches that each produce half the channels at the new resolution, the
//! branch outputs concatenated (branch 1 first) and multiplied by the gate,
//! then a fuse convolution back to the full channel count.

use crate::autodiff::{Graph, Var};
use crate::error::{BlockContext, Error, Result};
use crate::layers::{Block, Conv, ConvSpec, ConvTranspose, Parameters};
use crate::neck::{require_channels, require_even_channels, ChannelGate};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// x2 upsampling: transposed conv branch and nearest-upsample + conv branch.
#[derive(Debug, Clone)]
pub struct AttentionUpsample<T> {
    name: String,
    channels: usize,
    pub gate: ChannelGate<T>,
    pub deconv: ConvTranspose<T>,
    pub up_conv: Conv<T>,
    pub fuse: Conv<T>,
}

impl<T: Scalar> AttentionUpsample<T> {
    /// Default kernels: 2x2 stride-2 transposed conv, 1x1 `up_conv` and 1x1 `fuse`.
    pub fn new(name: &str, channels: usize, rng: &SeedStream) -> Result<Self> {
        Self::with_kernels(name, channels, 1, 1, rng)
    }

    /// Same block with explicit (odd) kernel sizes for `up_conv` and `fuse`.
    pub fn with_kernels(
        name: &str,
        channels: usize,
        up_kernel: usize,
        fuse_kernel: usize,
        rng: &SeedStream,
    ) -> Result<Self> {
        require_even_channels("attention_upsample", channels).block(name)?;
        let half = channels / 2;
        Ok(AttentionUpsample {
            name: name.to_owned(),
            channels,
            gate: ChannelGate::new(&format!("{name}.gate"), channels, rng),
            deconv: ConvTranspose::init(&format!("{name}.deconv"), channels, half, 2, 2, rng),
            up_conv: Conv::init(
                &format!("{name}.up_conv"),
                ConvSpec::new(channels, half, up_kernel),
                rng,
            ),
            fuse: Conv::init(
                &format!("{name}.fuse"),
                ConvSpec::new(channels, channels, fuse_kernel),
                rng,
            ),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Records the block and returns `(X_up, Y)`: the gated concatenation
    /// before the fuse conv, and the block output.
    pub fn forward_parts(&self, g: &mut Graph<T>, x: Var) -> Result<(Var, Var)> {
        let run = |g: &mut Graph<T>| {
            require_channels("attention_upsample", self.channels, g.try_value(x)?.dims().c)?;
            let gate = self.gate.forward(g, x)?;
            let u1 = self.deconv.forward(g, x)?;
            let up = g.upsample_nearest2(x)?;
            let u2 = self.up_conv.forward(g, up)?;
            let cat = g.concat(&[u1, u2])?;
            let x_up = g.mul_broadcast(cat, gate)?;
            let y = self.fuse.forward(g, x_up)?;
            Ok((x_up, y))
        };
        run(g).block(&self.name)
    }
}

impl<T: Scalar> Parameters<T> for AttentionUpsample<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.gate.visit(f);
        self.deconv.visit(f);
        self.up_conv.visit(f);
        self.fuse.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.gate.visit_mut(f);
        self.deconv.visit_mut(f);
        self.up_conv.visit_mut(f);
        self.fuse.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for AttentionUpsample<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.forward_parts(g, x).map(|(_, y)| y)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        let run = || {
            require_channels("attention_upsample", self.channels, x.c)?;
            let (_, gate) = self.gate.cost(x)?;
            let (u1, deconv) = self.deconv.flops(x)?;
            let up = x.with_hw(2 * x.h, 2 * x.w);
            let (_, up_conv) = self.up_conv.spec.flops(up)?;
            let cat = u1.with_c(self.channels);
            let (y, fuse) = self.fuse.spec.flops(cat)?;
            Ok((y, gate + deconv + up_conv + cat.numel() as u64 + fuse))
        };
        run().block(&self.name)
    }
}

/// x1/2 downsampling: stride-2 3x3 conv branch and maxpool + 1x1 conv branch.
#[derive(Debug, Clone)]
pub struct AttentionDownsample<T> {
    name: String,
    channels: usize,
    pub gate: ChannelGate<T>,
    pub stride_conv: Conv<T>,
    pub pool_conv: Conv<T>,
    pub fuse: Conv<T>,
}

impl<T: Scalar> AttentionDownsample<T> {
    pub fn new(name: &str, channels: usize, rng: &SeedStream) -> Result<Self> {
        require_even_channels("attention_downsample", channels).block(name)?;
        let half = channels / 2;
        Ok(AttentionDownsample {
            name: name.to_owned(),
            channels,
            gate: ChannelGate::new(&format!("{name}.gate"), channels, rng),
            stride_conv: Conv::init(
                &format!("{name}.stride_conv"),
                ConvSpec::new(channels, half, 3).stride(2),
                rng,
            ),
            pool_conv: Conv::init(&format!("{name}.pool_conv"), ConvSpec::new(channels, half, 1), rng),
            fuse: Conv::init(&format!("{name}.fuse"), ConvSpec::new(channels, channels, 3), rng),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn check_input(&self, x: Dims) -> Result<()> {
        require_channels("attention_downsample", self.channels, x.c)?;
        if x.h % 2 != 0 || x.w % 2 != 0 {
            return Err(Error::OddSpatial {
                op: "attention_downsample",
                h: x.h,
                w: x.w,
            });
        }
        Ok(())
    }

    /// Records the block and returns `(X_down, Y)`.
    pub fn forward_parts(&self, g: &mut Graph<T>, x: Var) -> Result<(Var, Var)> {
        let run = |g: &mut Graph<T>| {
            self.check_input(g.try_value(x)?.dims())?;
            let gate = self.gate.forward(g, x)?;
            let d1 = self.stride_conv.forward(g, x)?;
            let pooled = g.maxpool2(x)?;
            let d2 = self.pool_conv.forward(g, pooled)?;
            let cat = g.concat(&[d1, d2])?;
            let x_down = g.mul_broadcast(cat, gate)?;
            let y = self.fuse.forward(g, x_down)?;
            Ok((x_down, y))
        };
        run(g).block(&self.name)
    }
}

impl<T: Scalar> Parameters<T> for AttentionDownsample<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.gate.visit(f);
        self.stride_conv.visit(f);
        self.pool_conv.visit(f);
        self.fuse.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.gate.visit_mut(f);
        self.stride_conv.visit_mut(f);
        self.pool_conv.visit_mut(f);
        self.fuse.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for AttentionDownsample<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.forward_parts(g, x).map(|(_, y)| y)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        let run = || {
            self.check_input(x)?;
            let (_, gate) = self.gate.cost(x)?;
            let (d1, stride_conv) = self.stride_conv.spec.flops(x)?;
            let pooled = x.with_hw(x.h / 2, x.w / 2);
            let pool = 4 * pooled.numel() as u64;
            let (_, pool_conv) = self.pool_conv.spec.flops(pooled)?;
            let cat = d1.with_c(self.channels);
            let (y, fuse) = self.fuse.spec.flops(cat)?;
            Ok((y, gate + stride_conv + pool + pool_conv + cat.numel() as u64 + fuse))
        };
        run().block(&self.name)
    }
}
