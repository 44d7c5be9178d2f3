//! Parallel atrous convolution and the cross-stage-partial blocks.

use crate::autodiff::{Graph, Var};
use crate::error::{BlockContext, Result};
use crate::layers::{Block, Conv, ConvSpec, Parameters};
use crate::neck::require_channels;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Dilation rates of the three PAC branches.
pub const DILATIONS: [usize; 3] = [1, 2, 3];

/// Three 3x3 convs with dilation 1, 2, 3 (padding equal to dilation, so the
/// spatial size is kept), concatenated and merged by a 1x1 conv.
#[derive(Debug, Clone)]
pub struct Pac<T> {
    name: String,
    channels: usize,
    pub branches: [Conv<T>; 3],
    pub merge: Conv<T>,
}

impl<T: Scalar> Pac<T> {
    pub fn new(name: &str, channels: usize, rng: &SeedStream) -> Self {
        let branch = |d: usize| {
            let spec = ConvSpec::new(channels, channels, 3).dilation(d).padding(d);
            Conv::init(&format!("{name}.branch{d}"), spec, rng)
        };
        Pac {
            name: name.to_owned(),
            channels,
            branches: DILATIONS.map(branch),
            merge: Conv::init(&format!("{name}.merge"), ConvSpec::new(3 * channels, channels, 1), rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Records the block and returns `(concat of branches, output)`.
    pub fn forward_parts(&self, g: &mut Graph<T>, x: Var) -> Result<(Var, Var)> {
        let run = |g: &mut Graph<T>| {
            require_channels("pac", self.channels, g.try_value(x)?.dims().c)?;
            let outs = self
                .branches
                .iter()
                .map(|b| b.forward(g, x))
                .collect::<Result<Vec<_>>>()?;
            let cat = g.concat(&outs)?;
            let y = self.merge.forward(g, cat)?;
            Ok((cat, y))
        };
        run(g).block(&self.name)
    }
}

impl<T: Scalar> Parameters<T> for Pac<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.branches.iter().for_each(|b| b.visit(f));
        self.merge.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.branches.iter_mut().for_each(|b| b.visit_mut(f));
        self.merge.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for Pac<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.forward_parts(g, x).map(|(_, y)| y)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        let run = || {
            require_channels("pac", self.channels, x.c)?;
            let mut total = 0;
            let mut out = x;
            for b in &self.branches {
                let (d, f) = b.spec.flops(x)?;
                out = d;
                total += f;
            }
            let (y, merge) = self.merge.spec.flops(out.with_c(3 * self.channels))?;
            Ok((y, total + merge))
        };
        run().block(&self.name)
    }
}

/// The CSP split shared by [`CspPac`] and [`PlainCsp`]: a 1x1 main entry
/// conv, an inner op on the main path, a 1x1 shortcut, and a 1x1 output conv
/// over `concat(main, shortcut)`.
#[derive(Debug, Clone)]
struct CspFrame<T> {
    in_channels: usize,
    main_in: Conv<T>,
    shortcut: Conv<T>,
    out: Conv<T>,
}

impl<T: Scalar> CspFrame<T> {
    fn new(name: &str, in_channels: usize, mid: usize, out_channels: usize, rng: &SeedStream) -> Self {
        CspFrame {
            in_channels,
            main_in: Conv::init(&format!("{name}.main_in"), ConvSpec::new(in_channels, mid, 1), rng),
            shortcut: Conv::init(&format!("{name}.shortcut"), ConvSpec::new(in_channels, mid, 1), rng),
            out: Conv::init(&format!("{name}.out"), ConvSpec::new(2 * mid, out_channels, 1), rng),
        }
    }

    fn forward(
        &self,
        g: &mut Graph<T>,
        x: Var,
        op: &'static str,
        inner: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
    ) -> Result<Var> {
        require_channels(op, self.in_channels, g.try_value(x)?.dims().c)?;
        let main = self.main_in.forward(g, x)?;
        let main = inner(g, main)?;
        let short = self.shortcut.forward(g, x)?;
        let cat = g.concat(&[main, short])?;
        self.out.forward(g, cat)
    }

    fn cost(&self, x: Dims, op: &'static str, inner: impl FnOnce(Dims) -> Result<(Dims, u64)>) -> Result<(Dims, u64)> {
        require_channels(op, self.in_channels, x.c)?;
        let (mid, f_in) = self.main_in.spec.flops(x)?;
        let (main, f_inner) = inner(mid)?;
        let (_, f_short) = self.shortcut.spec.flops(x)?;
        let (y, f_out) = self.out.spec.flops(main.with_c(2 * mid.c))?;
        Ok((y, f_in + f_inner + f_short + f_out))
    }
}

/// CSP block whose main path is a [`Pac`].
#[derive(Debug, Clone)]
pub struct CspPac<T> {
    name: String,
    frame: CspFrame<T>,
    pub pac: Pac<T>,
}

impl<T: Scalar> CspPac<T> {
    /// `in_channels -> out_channels`, with the main and shortcut paths each
    /// `mid` channels wide.
    pub fn new(name: &str, in_channels: usize, mid: usize, out_channels: usize, rng: &SeedStream) -> Self {
        CspPac {
            name: name.to_owned(),
            frame: CspFrame::new(name, in_channels, mid, out_channels, rng),
            pac: Pac::new(&format!("{name}.pac"), mid, rng),
        }
    }

    pub fn main_in(&self) -> &Conv<T> {
        &self.frame.main_in
    }

    pub fn main_in_mut(&mut self) -> &mut Conv<T> {
        &mut self.frame.main_in
    }

    pub fn shortcut(&self) -> &Conv<T> {
        &self.frame.shortcut
    }

    pub fn out(&self) -> &Conv<T> {
        &self.frame.out
    }

    pub fn out_mut(&mut self) -> &mut Conv<T> {
        &mut self.frame.out
    }
}

impl<T: Scalar> Parameters<T> for CspPac<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.frame.main_in.visit(f);
        self.pac.visit(f);
        self.frame.shortcut.visit(f);
        self.frame.out.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.frame.main_in.visit_mut(f);
        self.pac.visit_mut(f);
        self.frame.shortcut.visit_mut(f);
        self.frame.out.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for CspPac<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.frame
            .forward(g, x, "csp_pac", |g, m| self.pac.forward(g, m))
            .block(&self.name)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        self.frame.cost(x, "csp_pac", |m| self.pac.cost(m)).block(&self.name)
    }
}

/// Baseline CSP block: the main path is a stack of plain 3x3 convs.
#[derive(Debug, Clone)]
pub struct PlainCsp<T> {
    name: String,
    frame: CspFrame<T>,
    pub inner: Vec<Conv<T>>,
}

impl<T: Scalar> PlainCsp<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        mid: usize,
        out_channels: usize,
        depth: usize,
        rng: &SeedStream,
    ) -> Self {
        PlainCsp {
            name: name.to_owned(),
            frame: CspFrame::new(name, in_channels, mid, out_channels, rng),
            inner: (0..depth)
                .map(|i| Conv::init(&format!("{name}.inner{i}"), ConvSpec::new(mid, mid, 3), rng))
                .collect(),
        }
    }
}

impl<T: Scalar> Parameters<T> for PlainCsp<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.frame.main_in.visit(f);
        self.inner.iter().for_each(|c| c.visit(f));
        self.frame.shortcut.visit(f);
        self.frame.out.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.frame.main_in.visit_mut(f);
        self.inner.iter_mut().for_each(|c| c.visit_mut(f));
        self.frame.shortcut.visit_mut(f);
        self.frame.out.visit_mut(f);
    }
}

impl<T: Scalar> Block<T> for PlainCsp<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.frame
            .forward(g, x, "plain_csp", |g, mut m| {
                for c in &self.inner {
                    m = c.forward(g, m)?;
                }
                Ok(m)
            })
            .block(&self.name)
    }

    fn cost(&self, x: Dims) -> Result<(Dims, u64)> {
        self.frame
            .cost(x, "plain_csp", |mut m| {
                let mut total = 0;
                for c in &self.inner {
                    let (d, f) = c.spec.flops(m)?;
                    m = d;
                    total += f;
                }
                Ok((m, total))
            })
            .block(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pac_param_closed_form() {
        let pac = Pac::<f32>::new("pac", 16, &SeedStream::new(0));
        let branch = 16 * 16 * 9 + 16;
        let merge = 48 * 16 + 16;
        assert_eq!(pac.param_count(), (3 * branch + merge) as u64);
    }

    #[test]
    fn cost_matches_recorded_flops() {
        let rng = SeedStream::new(2);
        let x: Tensor<f32> = rng.uniform("x", [2, 12, 7, 5], -1.0, 1.0);
        let csp = CspPac::new("csp", 12, 6, 10, &rng);
        let plain = PlainCsp::new("plain", 12, 6, 10, 3, &rng);
        for block in [&csp as &dyn Block<f32>, &plain] {
            let mut g = Graph::new();
            let v = g.input(x.clone());
            let y = block.forward(&mut g, v).unwrap();
            let (dims, flops) = block.cost(x.dims()).unwrap();
            assert_eq!(dims, Dims::new(2, 10, 7, 5));
            assert_eq!(dims, g.value(y).dims());
            assert_eq!(flops, g.flops(), "{}", block.name());
        }
    }

    #[test]
    fn parameter_names_are_hierarchical() {
        let csp = CspPac::<f32>::new("fuse", 8, 4, 8, &SeedStream::new(0));
        let names: Vec<String> = csp.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.first().unwrap(), "fuse.main_in.weight");
        assert!(names.contains(&"fuse.pac.branch3.bias".to_string()));
        assert_eq!(names.last().unwrap(), "fuse.out.bias");
    }
}
