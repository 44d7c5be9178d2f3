use serde::Serialize;

use crate::autodiff::{
    gradcheck, gradcheck_block, gradcheck_with_params, GradcheckOptions, GradcheckReport, Graph, Var,
};
use crate::error::Result;
use crate::kernels::Geometry;
use crate::layers::{Block, Conv, ConvSpec};
use crate::neck::{AttentionDownsample, AttentionUpsample, ChannelGate, CspPac, Pac, PlainCsp};
use crate::pyramid::{NeckConfig, NeckGraph, BASELINE_CSP_DEPTH};
use crate::rng::SeedStream;
use crate::tensor::{Dims, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradcheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

type OpFn = fn(&mut Graph<f64>, &[Var]) -> Result<Vec<Var>>;

fn op_cases() -> Vec<(&'static str, Vec<Dims>, OpFn)> {
    let d = |n, c, h, w| Dims::new(n, c, h, w);
    vec![
        ("conv2d", vec![d(2, 3, 7, 6), d(4, 3, 3, 3), d(1, 4, 1, 1)], |g, v| {
            let geo = Geometry {
                stride: 2,
                padding: 2,
                dilation: 2,
            };
            Ok(vec![g.conv2d(v[0], v[1], Some(v[2]), geo)?])
        }),
        (
            "conv_transpose2d",
            vec![d(1, 4, 3, 3), d(4, 2, 2, 2), d(1, 2, 1, 1)],
            |g, v| Ok(vec![g.conv_transpose2d(v[0], v[1], Some(v[2]), 2)?]),
        ),
        ("maxpool2d", vec![d(2, 3, 4, 6)], |g, v| Ok(vec![g.maxpool2(v[0])?])),
        ("global_avgpool", vec![d(2, 3, 4, 5)], |g, v| {
            Ok(vec![g.global_avgpool(v[0])?])
        }),
        ("upsample_nearest", vec![d(1, 3, 3, 2)], |g, v| {
            Ok(vec![g.upsample_nearest2(v[0])?])
        }),
        ("concat", vec![d(1, 2, 3, 3), d(1, 3, 3, 3)], |g, v| {
            Ok(vec![g.concat(&[v[0], v[1]])?])
        }),
        ("sigmoid", vec![d(1, 3, 4, 4)], |g, v| Ok(vec![g.sigmoid(v[0])?])),
        ("silu", vec![d(1, 3, 4, 4)], |g, v| Ok(vec![g.silu(v[0])?])),
        ("mul_broadcast", vec![d(2, 3, 4, 5), d(2, 3, 1, 1)], |g, v| {
            Ok(vec![g.mul_broadcast(v[0], v[1])?])
        }),
    ]
}

/// Gradient checks for every primitive op, every neck block and the full
/// neck at `config` (use [`NeckConfig::tiny`] for a quick run). Inputs and
/// weights come from `config.seed`; computation is in double precision.
pub fn gradcheck_suite(config: &NeckConfig, opts: &GradcheckOptions) -> Result<Vec<SuiteEntry>> {
    let rng = SeedStream::new(config.seed);
    let mut out = Vec::new();
    let mut push = |name: &str, report: GradcheckReport| {
        out.push(SuiteEntry {
            name: name.to_owned(),
            report,
        })
    };

    for (name, dims, f) in op_cases() {
        let inputs: Vec<(String, Tensor<f64>)> = dims
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let key = format!("suite.{name}.{i}");
                (format!("in{i}"), rng.uniform(&key, d, -1.0, 1.0))
            })
            .collect();
        push(name, gradcheck(f, &inputs, opts)?);
    }

    let h = config.hidden_dim;
    let [s3, s4, s5] = config.level_sizes();
    let x = |key: &str, c: usize, s: usize| rng.uniform::<f64>(key, [1, c, s, s], -1.0, 1.0);
    let conv = Conv::<f64>::init("suite.conv", ConvSpec::new(h, h, 3).dilation(2).padding(2), &rng);
    let gate = ChannelGate::<f64>::new("suite.gate", h, &rng);
    let au = AttentionUpsample::<f64>::new("suite.au", h, &rng)?;
    let ad = AttentionDownsample::<f64>::new("suite.ad", h, &rng)?;
    let pac = Pac::<f64>::new("suite.pac", h, &rng);
    let csp = CspPac::<f64>::new("suite.csp_pac", 2 * h, h / 2, h, &rng);
    let plain = PlainCsp::<f64>::new("suite.plain_csp", 2 * h, h / 2, h, BASELINE_CSP_DEPTH, &rng);
    let blocks: [(&str, &dyn Block<f64>, Tensor<f64>); 7] = [
        ("conv_block", &conv, x("suite.x.conv", h, s4)),
        ("channel_gate", &gate, x("suite.x.gate", h, s4)),
        ("attention_upsample", &au, x("suite.x.au", h, s5)),
        ("attention_downsample", &ad, x("suite.x.ad", h, s3)),
        ("pac", &pac, x("suite.x.pac", h, s4)),
        ("csp_pac", &csp, x("suite.x.csp", 2 * h, s4)),
        ("plain_csp", &plain, x("suite.x.plain", 2 * h, s4)),
    ];
    for (name, block, input) in blocks {
        push(name, gradcheck_block(block, input, opts)?);
    }

    let neck = NeckGraph::<f64>::build(config)?;
    let levels: Vec<(String, Tensor<f64>)> = config
        .level_dims(1)
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            (
                format!("p{}", i + 3),
                rng.uniform(&format!("suite.p{}", i + 3), d, -1.0, 1.0),
            )
        })
        .collect();
    let report = gradcheck_with_params(
        &neck,
        levels,
        |g, v| Ok(neck.forward(g, [v[0], v[1], v[2]])?.to_vec()),
        opts,
    )?;
    push("neck", report);
    Ok(out)
}
