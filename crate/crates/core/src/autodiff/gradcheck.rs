use serde::Serialize;

use crate::autodiff::{Graph, OpKind, Var};
use crate::error::Result;
use crate::layers::{Block, Parameters};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Maximum allowed relative error.
    pub tol: f64,
    /// Denominator floor of the relative error, see [`InputCheck`].
    pub floor: f64,
    /// Tensors with more elements than this are checked on a deterministic
    /// sample of this many coordinates.
    pub max_coords: usize,
    /// Seed for the output projection and coordinate sampling.
    pub seed: u64,
    /// Corrupts the backward pass of one op kind (negative controls).
    pub fault: Option<OpKind>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            eps: 1e-6,
            tol: 1e-4,
            floor: 1e-3,
            max_coords: 32,
            seed: 0x5eed,
            fault: None,
        }
    }
}

/// Result for one checked input. The error of a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
#[derive(Debug, Clone, Serialize)]
pub struct InputCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub numel: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub inputs: Vec<InputCheck>,
    pub tol: f64,
    pub eps: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|i| i.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.inputs.iter().all(|i| i.max_rel_error <= self.tol)
    }

    pub fn worst(&self) -> Option<&InputCheck> {
        self.inputs
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares reverse-mode gradients of `f` against central finite differences.
///
/// `f` receives one leaf per entry of `inputs` and returns any number of
/// outputs; they are reduced to a scalar with fixed random projections so
/// every output element contributes with a distinct weight.
pub fn gradcheck<F>(f: F, inputs: &[(String, Tensor<f64>)], opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Vec<Var>>,
{
    let root = SeedStream::new(opts.seed);

    let build = |values: &[Tensor<f64>], fault: Option<OpKind>| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        g.inject_backward_fault(fault);
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let outs = f(&mut g, &vars)?;
        let mut total = None;
        for (k, &o) in outs.iter().enumerate() {
            let proj: Tensor<f64> = root.uniform(&format!("gradcheck.projection.{k}"), g.value(o).dims(), -1.0, 1.0);
            let s = g.weighted_sum(o, proj)?;
            total = Some(match total {
                None => s,
                Some(acc) => {
                    let both = g.concat(&[acc, s])?;
                    g.sum(both)?
                }
            });
        }
        let loss = total.expect("gradcheck function returned no outputs");
        Ok((g, vars, loss))
    };

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let (g, vars, loss) = build(&values, opts.fault)?;
    let grads = g.backward(loss)?;

    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, loss) = build(values, None)?;
        Ok(g.value(loss).data()[0])
    };

    let mut report = Vec::with_capacity(inputs.len());
    for (i, (name, t)) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], t.dims());
        let coords = sample_coords(t.numel(), opts.max_coords, &root, i);
        let mut worst: f64 = 0.0;
        for &c in &coords {
            let orig = values[i].data()[c];
            values[i].data_mut()[c] = orig + opts.eps;
            let plus = eval(&values)?;
            values[i].data_mut()[c] = orig - opts.eps;
            let minus = eval(&values)?;
            values[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic.data()[c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            worst = worst.max(err);
        }
        report.push(InputCheck {
            name: name.clone(),
            max_rel_error: worst,
            checked: coords.len(),
            numel: t.numel(),
        });
    }
    Ok(GradcheckReport {
        inputs: report,
        tol: opts.tol,
        eps: opts.eps,
    })
}

/// [`gradcheck`] over `inputs` plus every parameter of `params`. The
/// parameters are bound by name, so `f` records them through the usual
/// [`Graph::param`] lookups and receives only the leading `inputs` vars.
pub fn gradcheck_with_params<F>(
    params: &dyn Parameters<f64>,
    inputs: Vec<(String, Tensor<f64>)>,
    f: F,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Vec<Var>>,
{
    let n = inputs.len();
    let mut all = inputs;
    params.visit(&mut |name, t| all.push((name.to_owned(), t.clone())));
    let names: Vec<String> = all[n..].iter().map(|(name, _)| name.clone()).collect();
    gradcheck(
        |g, vars| {
            for (name, &v) in names.iter().zip(&vars[n..]) {
                g.bind_param(name, v);
            }
            f(g, &vars[..n])
        },
        &all,
        opts,
    )
}

/// Checks a block with respect to its input `x` and all of its parameters.
pub fn gradcheck_block(block: &dyn Block<f64>, x: Tensor<f64>, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    gradcheck_with_params(
        block,
        vec![("x".to_owned(), x)],
        |g, v| Ok(vec![block.forward(g, v[0])?]),
        opts,
    )
}

fn sample_coords(numel: usize, max: usize, root: &SeedStream, input: usize) -> Vec<usize> {
    if numel <= max {
        return (0..numel).collect();
    }
    let s = root.stream(&format!("gradcheck.coords.{input}"));
    let mut picks: Vec<usize> = vec![0, numel - 1];
    let mut k = 0u64;
    while picks.len() < max {
        let c = (s.word(k) % numel as u64) as usize;
        if !picks.contains(&c) {
            picks.push(c);
        }
        k += 1;
    }
    picks.sort_unstable();
    picks
}
