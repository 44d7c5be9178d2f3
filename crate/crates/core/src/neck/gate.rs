use crate::autodiff::{Graph, Var};
use crate::error::{BlockContext, Result};
use crate::layers::{Activation, Block, Conv, ConvSpec, Parameters};
use crate::neck::require_channels;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// `G = sigmoid(Conv1x1(AvgPool(X)))`, one weight in (0, 1) per channel.
#[derive(Debug, Clone)]
pub struct ChannelGate<T> {
    name: String,
    pub conv: Conv<T>,
}

impl<T: Scalar> ChannelGate<T> {
    pub fn new(name: &str, channels: usize, rng: &SeedStream) -> Self {
        let spec = ConvSpec::new(channels, channels, 1).activation(Activation::Identity);
        ChannelGate {
            name: name.to_owned(),
            conv: Conv::init(&format!("{name}.conv"), spec, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv.spec.in_channels
    }
}

impl<T: Scalar> Parameters<T> for ChannelGate<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.conv.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.conv.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for ChannelGate<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let run = |g: &mut Graph<T>| {
            require_channels("channel_gate", self.channels(), g.try_value(x)?.dims().c)?;
            let pooled = g.global_avgpool(x)?;
            let logits = self.conv.forward(g, pooled)?;
            g.sigmoid(logits)
        };
        run(g).block(&self.name)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        require_channels("channel_gate", self.channels(), x.c).block(&self.name)?;
        let pooled = x.with_hw(1, 1);
        let (out, conv) = self.conv.spec.flops(pooled)?;
        Ok((out, x.numel() as u64 + conv + out.numel() as u64))
    }
}
