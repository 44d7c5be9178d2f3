use crate::autodiff::{Graph, Var};
use crate::error::{BlockContext, Error, Result};
use crate::layers::{Conv, ConvSpec, Parameters};
use crate::pyramid::config::NeckConfig;
use crate::pyramid::graph::NeckGraph;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Stand-in feature extractor: five 3x3 stride-2 SiLU convs. The outputs of
/// the last three are P3, P4, P5 (strides 8, 16, 32).
#[derive(Debug, Clone)]
pub struct StubBackbone<T> {
    pub stages: [Conv<T>; 5],
}

const STAGE_NAMES: [&str; 5] = ["stem", "stage1", "stage2", "stage3", "stage4"];

impl<T: Scalar> StubBackbone<T> {
    pub fn new(config: &NeckConfig) -> Self {
        let rng = SeedStream::new(config.seed);
        let [c3, c4, c5] = config.in_channels;
        let widths = [3, 16, 32, c3, c4, c5];
        let stage = |i: usize| {
            let spec = ConvSpec::new(widths[i], widths[i + 1], 3).stride(2);
            Conv::init(&format!("backbone.{}", STAGE_NAMES[i]), spec, &rng)
        };
        StubBackbone {
            stages: [0, 1, 2, 3, 4].map(stage),
        }
    }

    fn check_image(x: Dims) -> Result<()> {
        if x.c != 3 {
            return Err(Error::ChannelMismatch {
                op: "stub_backbone",
                expected: 3,
                got: x.c,
            });
        }
        if x.h % 32 != 0 || x.w % 32 != 0 {
            return Err(Error::ShapeMismatch {
                op: "stub_backbone",
                detail: format!("image size {}x{} must be divisible by 32", x.h, x.w),
            });
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph<T>, image: Var) -> Result<[Var; 3]> {
        Self::check_image(g.try_value(image)?.dims())?;
        let mut x = image;
        let mut levels = Vec::with_capacity(3);
        for (i, s) in self.stages.iter().enumerate() {
            x = s.forward(g, x).block(s.name())?;
            if i >= 2 {
                levels.push(x);
            }
        }
        Ok([levels[0], levels[1], levels[2]])
    }

    pub fn run(&self, image: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
        let mut g = Graph::new();
        let x = g.input(image.clone());
        let levels = self.forward(&mut g, x)?;
        Ok(levels.map(|v| g.value(v).clone()))
    }
}

impl<T: Scalar> Parameters<T> for StubBackbone<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.stages.iter().for_each(|s| s.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.stages.iter_mut().for_each(|s| s.visit_mut(f));
    }
}

/// Stub backbone followed by the neck; the unit a checkpoint stores.
#[derive(Debug, Clone)]
pub struct NeckModel<T> {
    pub backbone: StubBackbone<T>,
    pub neck: NeckGraph<T>,
}

impl<T: Scalar> NeckModel<T> {
    pub fn build(config: &NeckConfig) -> Result<Self> {
        Ok(NeckModel {
            backbone: StubBackbone::new(config),
            neck: NeckGraph::build(config)?,
        })
    }

    pub fn config(&self) -> &NeckConfig {
        self.neck.config()
    }

    /// Image `(n, 3, H, W)` to `[N3, N4, N5]`.
    pub fn forward_image(&self, image: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
        let mut g = Graph::new();
        let x = g.input(image.clone());
        let levels = self.backbone.forward(&mut g, x)?;
        let outs = self.neck.forward(&mut g, levels)?;
        Ok(outs.map(|v| g.value(v).clone()))
    }
}

impl<T: Scalar> Parameters<T> for NeckModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.backbone.visit(f);
        self.neck.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.backbone.visit_mut(f);
        self.neck.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes_follow_strides() {
        let cfg = NeckConfig::tiny();
        let bb = StubBackbone::<f32>::new(&cfg);
        let img = SeedStream::new(3).uniform("img", [1, 3, 64, 64], 0.0, 1.0);
        let [p3, p4, p5] = bb.run(&img).unwrap();
        assert_eq!(p3.dims(), Dims::new(1, 8, 8, 8));
        assert_eq!(p4.dims(), Dims::new(1, 12, 4, 4));
        assert_eq!(p5.dims(), Dims::new(1, 16, 2, 2));
    }

    #[test]
    fn indivisible_image_rejected() {
        let bb = StubBackbone::<f32>::new(&NeckConfig::tiny());
        let err = bb.run(&Tensor::zeros([1, 3, 48, 64])).unwrap_err();
        assert!(err.to_string().contains("divisible by 32"), "{err}");
    }
}
