use crate::autodiff::{Graph, Var};
use crate::error::{BlockContext, Error, Result};
use crate::layers::{Activation, Block, Conv, ConvSpec, Parameters};
use crate::neck::{AttentionDownsample, AttentionUpsample, CspPac, PlainCsp};
use crate::pyramid::config::{NeckConfig, BASELINE_CSP_DEPTH};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Top-down x2 resampler: attention upsampling or plain nearest neighbour.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Upsampler<T> {
    Attention(AttentionUpsample<T>),
    Nearest { name: String },
}

/// Bottom-up x1/2 resampler: attention downsampling or a 3x3 stride-2 conv.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Downsampler<T> {
    Attention(AttentionDownsample<T>),
    Strided(Conv<T>),
}

/// Fusion block after each concat: CSP-PAC or the plain CSP baseline.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Fusion<T> {
    CspPac(CspPac<T>),
    Plain(PlainCsp<T>),
}

impl<T: Scalar> Upsampler<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Upsampler::Attention(_) => "attention_upsample",
            Upsampler::Nearest { .. } => "nearest_upsample",
        }
    }
}

impl<T: Scalar> Downsampler<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Downsampler::Attention(_) => "attention_downsample",
            Downsampler::Strided(_) => "strided_conv",
        }
    }
}

impl<T: Scalar> Fusion<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Fusion::CspPac(_) => "csp_pac",
            Fusion::Plain(_) => "plain_csp",
        }
    }
}

impl<T: Scalar> Parameters<T> for Upsampler<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        if let Upsampler::Attention(b) = self {
            b.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        if let Upsampler::Attention(b) = self {
            b.visit_mut(f);
        }
    }
}

impl<T: Scalar> Block<T> for Upsampler<T> {
    fn name(&self) -> &str {
        match self {
            Upsampler::Attention(b) => b.name(),
            Upsampler::Nearest { name } => name,
        }
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match self {
            Upsampler::Attention(b) => b.forward(g, x),
            Upsampler::Nearest { name } => g.upsample_nearest2(x).block(name),
        }
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        match self {
            Upsampler::Attention(b) => b.cost(x),
            Upsampler::Nearest { .. } => Ok((x.with_hw(2 * x.h, 2 * x.w), 0)),
        }
    }
}

impl<T: Scalar> Parameters<T> for Downsampler<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            Downsampler::Attention(b) => b.visit(f),
            Downsampler::Strided(c) => c.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        match self {
            Downsampler::Attention(b) => b.visit_mut(f),
            Downsampler::Strided(c) => c.visit_mut(f),
        }
    }
}

impl<T: Scalar> Block<T> for Downsampler<T> {
    fn name(&self) -> &str {
        match self {
            Downsampler::Attention(b) => b.name(),
            Downsampler::Strided(c) => c.name(),
        }
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match self {
            Downsampler::Attention(b) => b.forward(g, x),
            Downsampler::Strided(c) => c.forward(g, x).block(c.name()),
        }
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        match self {
            Downsampler::Attention(b) => b.cost(x),
            Downsampler::Strided(c) => c.spec.flops(x).block(c.name()),
        }
    }
}

impl<T: Scalar> Parameters<T> for Fusion<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            Fusion::CspPac(b) => b.visit(f),
            Fusion::Plain(b) => b.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        match self {
            Fusion::CspPac(b) => b.visit_mut(f),
            Fusion::Plain(b) => b.visit_mut(f),
        }
    }
}

impl<T: Scalar> Block<T> for Fusion<T> {
    fn name(&self) -> &str {
        match self {
            Fusion::CspPac(b) => b.name(),
            Fusion::Plain(b) => b.name(),
        }
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match self {
            Fusion::CspPac(b) => b.forward(g, x),
            Fusion::Plain(b) => b.forward(g, x),
        }
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        match self {
            Fusion::CspPac(b) => b.cost(x),
            Fusion::Plain(b) => b.cost(x),
        }
    }
}

/// One entry of [`NeckGraph::blocks`].
pub struct BlockSlot<'a, T: Scalar> {
    /// Slot name, identical across configurations (e.g. `up0`).
    pub slot: &'static str,
    /// Which implementation fills the slot.
    pub kind: &'static str,
    pub block: &'a dyn Block<T>,
}

/// The assembled neck: input projections, two upsamplers, two downsamplers
/// and four fusion blocks.
///
/// Wiring, with `P3'..P5'` the projected inputs:
///
/// ```text
/// mid = fuse_td0(concat(up0(P5'), P4'))
/// N3  = fuse_td1(concat(up1(mid), P3'))
/// N4  = fuse_bu0(concat(down0(N3), mid))
/// N5  = fuse_bu1(concat(down1(N4), P5'))
/// ```
#[derive(Debug, Clone)]
pub struct NeckGraph<T> {
    config: NeckConfig,
    pub proj: [Conv<T>; 3],
    pub up: [Upsampler<T>; 2],
    pub fuse_td: [Fusion<T>; 2],
    pub down: [Downsampler<T>; 2],
    pub fuse_bu: [Fusion<T>; 2],
}

const PROJ_SLOTS: [&str; 3] = ["proj3", "proj4", "proj5"];
const UP_SLOTS: [&str; 2] = ["up0", "up1"];
const DOWN_SLOTS: [&str; 2] = ["down0", "down1"];
const TD_SLOTS: [&str; 2] = ["fuse_td0", "fuse_td1"];
const BU_SLOTS: [&str; 2] = ["fuse_bu0", "fuse_bu1"];

impl<T: Scalar> NeckGraph<T> {
    /// Builds the neck with weights drawn from `config.seed`.
    pub fn build(config: &NeckConfig) -> Result<Self> {
        config.validate()?;
        let rng = SeedStream::new(config.seed);
        let h = config.hidden_dim;
        let name = |slot: &str| format!("neck.{slot}");

        let proj = [0, 1, 2].map(|i| {
            let spec = ConvSpec::new(config.in_channels[i], h, 1).activation(Activation::Identity);
            Conv::init(&name(PROJ_SLOTS[i]), spec, &rng)
        });
        let mut up = Vec::new();
        for slot in UP_SLOTS {
            up.push(if config.use_au {
                Upsampler::Attention(AttentionUpsample::new(&name(slot), h, &rng)?)
            } else {
                Upsampler::Nearest { name: name(slot) }
            });
        }
        let mut down = Vec::new();
        for slot in DOWN_SLOTS {
            down.push(if config.use_ad {
                Downsampler::Attention(AttentionDownsample::new(&name(slot), h, &rng)?)
            } else {
                Downsampler::Strided(Conv::init(&name(slot), ConvSpec::new(h, h, 3).stride(2), &rng))
            });
        }
        let fusion = |slot: &str| {
            let mid = h / 2;
            if config.use_csp_pac {
                Fusion::CspPac(CspPac::new(&name(slot), 2 * h, mid, h, &rng))
            } else {
                Fusion::Plain(PlainCsp::new(&name(slot), 2 * h, mid, h, BASELINE_CSP_DEPTH, &rng))
            }
        };
        let [up0, up1]: [Upsampler<T>; 2] = up.try_into().unwrap_or_else(|_| unreachable!("two upsamplers"));
        let [down0, down1]: [Downsampler<T>; 2] = down.try_into().unwrap_or_else(|_| unreachable!("two downsamplers"));
        Ok(NeckGraph {
            config: config.clone(),
            proj,
            up: [up0, up1],
            fuse_td: TD_SLOTS.map(fusion),
            down: [down0, down1],
            fuse_bu: BU_SLOTS.map(fusion),
        })
    }

    pub fn config(&self) -> &NeckConfig {
        &self.config
    }

    /// Blocks in execution order.
    pub fn blocks(&self) -> Vec<BlockSlot<'_, T>> {
        let mut out = Vec::with_capacity(11);
        for (slot, p) in PROJ_SLOTS.iter().zip(&self.proj) {
            out.push(BlockSlot {
                slot,
                kind: "projection",
                block: p,
            });
        }
        let pairs = [
            (UP_SLOTS[0], self.up[0].kind(), &self.up[0] as &dyn Block<T>),
            (TD_SLOTS[0], self.fuse_td[0].kind(), &self.fuse_td[0]),
            (UP_SLOTS[1], self.up[1].kind(), &self.up[1]),
            (TD_SLOTS[1], self.fuse_td[1].kind(), &self.fuse_td[1]),
            (DOWN_SLOTS[0], self.down[0].kind(), &self.down[0]),
            (BU_SLOTS[0], self.fuse_bu[0].kind(), &self.fuse_bu[0]),
            (DOWN_SLOTS[1], self.down[1].kind(), &self.down[1]),
            (BU_SLOTS[1], self.fuse_bu[1].kind(), &self.fuse_bu[1]),
        ];
        for (slot, kind, block) in pairs {
            out.push(BlockSlot { slot, kind, block });
        }
        out
    }

    fn check_levels(&self, dims: [Dims; 3]) -> Result<()> {
        let [p3, p4, p5] = dims;
        let halves = |a: Dims, b: Dims| a.h == 2 * b.h && a.w == 2 * b.w;
        if !(halves(p3, p4) && halves(p4, p5)) {
            return Err(Error::ShapeMismatch {
                op: "project_inputs",
                detail: format!("level sizes must halve exactly from P3 to P5, got {p3}, {p4}, {p5}"),
            });
        }
        if p3.n != p4.n || p4.n != p5.n {
            return Err(Error::ShapeMismatch {
                op: "project_inputs",
                detail: "batch sizes differ between levels".into(),
            });
        }
        for (i, d) in dims.iter().enumerate() {
            if d.c != self.config.in_channels[i] {
                return Err(Error::ChannelMismatch {
                    op: "project_inputs",
                    expected: self.config.in_channels[i],
                    got: d.c,
                });
            }
        }
        Ok(())
    }

    /// 1x1 projections of P3, P4, P5 to `hidden_dim` channels.
    pub fn project_inputs(&self, g: &mut Graph<T>, levels: [Var; 3]) -> Result<[Var; 3]> {
        let dims = [
            g.try_value(levels[0])?.dims(),
            g.try_value(levels[1])?.dims(),
            g.try_value(levels[2])?.dims(),
        ];
        self.check_levels(dims)?;
        let mut out = [levels[0]; 3];
        for i in 0..3 {
            out[i] = self.proj[i].forward(g, levels[i]).block(self.proj[i].name())?;
        }
        Ok(out)
    }

    /// Neck over already-projected levels; returns `[N3, N4, N5]`.
    pub fn forward_projected(&self, g: &mut Graph<T>, projected: [Var; 3]) -> Result<[Var; 3]> {
        let [p3, p4, p5] = projected;
        let fuse = |g: &mut Graph<T>, f: &Fusion<T>, a: Var, b: Var| -> Result<Var> {
            let cat = g.concat(&[a, b]).block(f.name())?;
            f.forward(g, cat)
        };
        let u = self.up[0].forward(g, p5)?;
        let mid = fuse(g, &self.fuse_td[0], u, p4)?;
        let u = self.up[1].forward(g, mid)?;
        let n3 = fuse(g, &self.fuse_td[1], u, p3)?;
        let d = self.down[0].forward(g, n3)?;
        let n4 = fuse(g, &self.fuse_bu[0], d, mid)?;
        let d = self.down[1].forward(g, n4)?;
        let n5 = fuse(g, &self.fuse_bu[1], d, p5)?;
        Ok([n3, n4, n5])
    }

    /// Projection followed by the neck.
    pub fn forward(&self, g: &mut Graph<T>, levels: [Var; 3]) -> Result<[Var; 3]> {
        let projected = self.project_inputs(g, levels)?;
        self.forward_projected(g, projected)
    }

    /// Runs the neck on backbone features and returns `[N3, N4, N5]`.
    pub fn run(&self, levels: [&Tensor<T>; 3]) -> Result<[Tensor<T>; 3]> {
        let mut g = Graph::new();
        let vars = levels.map(|t| g.input(t.clone()));
        let outs = self.forward(&mut g, vars)?;
        Ok(outs.map(|v| g.value(v).clone()))
    }

    /// Per-block `(slot, kind, params, flops)` for backbone features of `levels` dims.
    pub fn block_costs(&self, levels: [Dims; 3]) -> Result<Vec<(&'static str, &'static str, u64, u64)>> {
        self.check_levels(levels)?;
        let mut rows = Vec::new();
        let mut projected = levels;
        for i in 0..3 {
            let (d, f) = self.proj[i].spec.flops(levels[i]).block(self.proj[i].name())?;
            projected[i] = d;
            rows.push((PROJ_SLOTS[i], "projection", self.proj[i].param_count(), f));
        }
        let [p3, p4, p5] = projected;
        let mut push = |slot, kind, block: &dyn Block<T>, x: Dims| -> Result<Dims> {
            let (d, f) = block.cost(x)?;
            rows.push((slot, kind, block.param_count(), f));
            Ok(d)
        };
        let cat = |a: Dims, b: Dims| a.with_c(a.c + b.c);

        let u = push(UP_SLOTS[0], self.up[0].kind(), &self.up[0], p5)?;
        let mid = push(TD_SLOTS[0], self.fuse_td[0].kind(), &self.fuse_td[0], cat(u, p4))?;
        let u = push(UP_SLOTS[1], self.up[1].kind(), &self.up[1], mid)?;
        let n3 = push(TD_SLOTS[1], self.fuse_td[1].kind(), &self.fuse_td[1], cat(u, p3))?;
        let d = push(DOWN_SLOTS[0], self.down[0].kind(), &self.down[0], n3)?;
        let n4 = push(BU_SLOTS[0], self.fuse_bu[0].kind(), &self.fuse_bu[0], cat(d, mid))?;
        let d = push(DOWN_SLOTS[1], self.down[1].kind(), &self.down[1], n4)?;
        push(BU_SLOTS[1], self.fuse_bu[1].kind(), &self.fuse_bu[1], cat(d, p5))?;
        Ok(rows)
    }
}

impl<T: Scalar> Parameters<T> for NeckGraph<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for b in self.blocks() {
            b.block.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.proj.iter_mut().for_each(|p| p.visit_mut(f));
        self.up[0].visit_mut(f);
        self.fuse_td[0].visit_mut(f);
        self.up[1].visit_mut(f);
        self.fuse_td[1].visit_mut(f);
        self.down[0].visit_mut(f);
        self.fuse_bu[0].visit_mut(f);
        self.down[1].visit_mut(f);
        self.fuse_bu[1].visit_mut(f);
    }
}
