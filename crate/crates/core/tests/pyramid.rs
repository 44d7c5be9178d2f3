mod common;

use neck_core::analysis::{count_config, delta_report};
use neck_core::pyramid::{Fusion, Upsampler};
use neck_core::{Conv, ConvSpec, Dims, Graph, NeckConfig, NeckGraph, Parameters, SeedStream, StubBackbone, Tensor};

fn levels<T: neck_core::Scalar>(cfg: &NeckConfig, seed: u64) -> [Tensor<T>; 3] {
    let rng = SeedStream::new(seed);
    let d = cfg.level_dims(1);
    [0, 1, 2].map(|i| rng.uniform(&format!("p{}", i + 3), d[i], -1.0, 1.0))
}

fn run<T: neck_core::Scalar>(neck: &NeckGraph<T>, p: &[Tensor<T>; 3]) -> [Tensor<T>; 3] {
    neck.run([&p[0], &p[1], &p[2]]).unwrap()
}

#[test]
fn forward_shapes_full_and_baseline() {
    let cfg = NeckConfig::default();
    let p = levels::<f32>(&cfg, 1);
    let expect = [40, 20, 10].map(|s| Dims::new(1, 64, s, s));
    for cfg in [cfg.clone(), cfg.clone().baseline()] {
        let neck = NeckGraph::<f32>::build(&cfg).unwrap();
        let out = run(&neck, &p);
        assert_eq!(out.map(|t| t.dims()), expect, "{cfg:?}");
    }
}

#[test]
fn every_toggle_combination_preserves_level_shapes() {
    let base = NeckConfig::tiny();
    let p = levels::<f64>(&base, 2);
    for bits in 0..8u8 {
        let cfg = base.clone().with_toggles(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
        let out = run(&NeckGraph::<f64>::build(&cfg).unwrap(), &p);
        for (o, s) in out.iter().zip([8, 4, 2]) {
            assert_eq!(o.dims(), Dims::new(1, 8, s, s), "{cfg:?}");
        }
    }
}

#[test]
fn projection_shapes_passthrough_and_halving_check() {
    let cfg = NeckConfig {
        hidden_dim: 64,
        input_size: 640,
        ..NeckConfig::default()
    };
    let mut neck = NeckGraph::<f32>::build(&cfg).unwrap();
    let p = levels::<f32>(&cfg, 3);
    let mut g = Graph::new();
    let vars = [0, 1, 2].map(|i| g.input(p[i].clone()));
    let proj = neck.project_inputs(&mut g, vars).unwrap();
    for (i, s) in [80, 40, 20].into_iter().enumerate() {
        assert_eq!(g.value(proj[i]).dims(), Dims::new(1, 64, s, s));
    }
    // P3 already has hidden_dim channels: identity weights pass it through
    neck.proj[0].set_identity_center();
    let mut g = Graph::new();
    let vars = [0, 1, 2].map(|i| g.input(p[i].clone()));
    let proj = neck.project_inputs(&mut g, vars).unwrap();
    assert!(g.value(proj[0]).bitwise_eq(&p[0]));

    let bad = [
        Dims::new(1, 64, 80, 80),
        Dims::new(1, 128, 40, 40),
        Dims::new(1, 256, 21, 21),
    ];
    let mut g = Graph::new();
    let vars = bad.map(|d| g.input(Tensor::<f32>::zeros(d)));
    let err = neck.project_inputs(&mut g, vars).unwrap_err();
    assert!(err.to_string().contains("halve"), "{err}");
}

#[test]
fn neck_errors_carry_block_names() {
    let cfg = NeckConfig::tiny();
    let neck = NeckGraph::<f32>::build(&cfg).unwrap();
    let mut g = Graph::new();
    // projected inputs with the wrong channel count reach up0 first
    let bad = [8, 4, 2].map(|s| g.input(Tensor::<f32>::zeros([1, 6, s, s])));
    let msg = neck.forward_projected(&mut g, bad).unwrap_err().to_string();
    assert!(msg.contains("neck.up0"), "{msg}");
}

/// With the first upsampler's output forced to zero, N3 cannot see P5.
#[test]
fn n3_is_isolated_from_p5_when_top_down_au_is_zeroed() {
    let cfg = NeckConfig::tiny();
    let mut neck = NeckGraph::<f64>::build(&cfg).unwrap();
    let Upsampler::Attention(au) = &mut neck.up[0] else {
        panic!("expected attention upsampler")
    };
    au.visit_mut(&mut |_, t| t.data_mut().fill(0.0));
    let p = levels::<f64>(&cfg, 4);
    let mut q = p.clone();
    q[2] = q[2].map(|v| 3.0 * v + 1.0);
    let a = run(&neck, &p);
    let b = run(&neck, &q);
    assert!(a[0].bitwise_eq(&b[0]), "N3 changed");
    assert!(!a[2].bitwise_eq(&b[2]), "N5 should still see P5");

    // with the original weights the perturbation does reach N3
    let fresh = NeckGraph::<f64>::build(&cfg).unwrap();
    assert!(!run(&fresh, &p)[0].bitwise_eq(&run(&fresh, &q)[0]));
}

#[test]
fn forward_is_deterministic() {
    let cfg = NeckConfig::tiny();
    let p = levels::<f32>(&cfg, 5);
    let a = run(&NeckGraph::<f32>::build(&cfg).unwrap(), &p);
    let b = run(&NeckGraph::<f32>::build(&cfg).unwrap(), &p);
    for i in 0..3 {
        assert!(a[i].bitwise_eq(&b[i]));
    }
}

#[test]
fn stub_backbone_strides_and_determinism() {
    let cfg = NeckConfig::default();
    let img: Tensor<f32> = SeedStream::new(6).uniform("img", [1, 3, 320, 320], 0.0, 1.0);
    let a = StubBackbone::<f32>::new(&cfg).run(&img).unwrap();
    assert_eq!(a.clone().map(|t| t.dims().h), [40, 20, 10]);
    let b = StubBackbone::<f32>::new(&cfg).run(&img).unwrap();
    assert!((0..3).all(|i| a[i].bitwise_eq(&b[i])));
    let small = StubBackbone::<f32>::new(&cfg)
        .run(&Tensor::zeros([1, 3, 64, 64]))
        .unwrap();
    assert_eq!(small.map(|t| t.dims().h), [8, 4, 2]);
    assert!(StubBackbone::<f32>::new(&cfg)
        .run(&Tensor::zeros([1, 3, 320, 300]))
        .is_err());
}

#[test]
fn analytic_flops_match_recorded_graph() {
    for cfg in [NeckConfig::tiny(), NeckConfig::tiny().baseline()] {
        let neck = NeckGraph::<f32>::build(&cfg).unwrap();
        let p = levels::<f32>(&cfg, 7);
        let mut g = Graph::new();
        let vars = [0, 1, 2].map(|i| g.input(p[i].clone()));
        neck.forward(&mut g, vars).unwrap();
        let report = count_config(&cfg).unwrap();
        assert_eq!(report.total_flops, g.flops(), "{cfg:?}");
        assert_eq!(report.total_params, neck.param_count());
    }
}

#[test]
fn ablation_lattice_is_strictly_increasing() {
    for base in [NeckConfig::tiny(), NeckConfig::default(), NeckConfig::reference()] {
        let steps = [
            (false, false, false),
            (true, false, false),
            (true, true, false),
            (true, true, true),
        ];
        let counts: Vec<_> = steps
            .iter()
            .map(|&(a, b, c)| count_config(&base.clone().with_toggles(a, b, c)).unwrap())
            .collect();
        for w in counts.windows(2) {
            assert!(w[1].total_params > w[0].total_params);
            assert!(w[1].total_flops > w[0].total_flops);
        }
    }
}

/// Per fusion block, CSP-PAC minus plain CSP (both with mid width m and the
/// same 1x1 frame) is one PAC merge conv: params 3m*m + m, and per output
/// pixel 2*3m*m multiply-add FLOPs plus m for its SiLU.
#[test]
fn csp_pac_toggle_delta_matches_closed_form() {
    for cfg in [NeckConfig::tiny(), NeckConfig::default()] {
        let on = cfg.clone();
        let off = cfg.clone().with_toggles(true, true, false);
        let d = delta_report(&off, &on, None).unwrap();
        let m = (cfg.hidden_dim / 2) as i64;
        let sizes = cfg.level_sizes().map(|s| (s * s) as i64);
        // fuse_td0 at P4, fuse_td1 at P3, fuse_bu0 at P4, fuse_bu1 at P5
        let pixels = [sizes[1], sizes[0], sizes[1], sizes[2]];
        let params: i64 = 4 * (3 * m * m + m);
        let flops: i64 = pixels.iter().map(|p| p * (6 * m * m + m)).sum();
        assert_eq!((d.params, d.flops), (params, flops), "{cfg:?}");
        let fusion_rows: i64 = d
            .rows
            .iter()
            .filter(|r| r.name.starts_with("fuse"))
            .map(|r| r.params)
            .sum();
        assert_eq!(fusion_rows, params);
    }
}

#[test]
fn strided_baseline_and_fusion_kinds() {
    let neck = NeckGraph::<f32>::build(&NeckConfig::tiny().baseline()).unwrap();
    assert!(matches!(neck.up[0], Upsampler::Nearest { .. }));
    assert!(matches!(neck.fuse_bu[1], Fusion::Plain(_)));
    let kinds: Vec<&str> = neck.blocks().iter().map(|b| b.kind).collect();
    assert_eq!(
        kinds[3..],
        [
            "nearest_upsample",
            "plain_csp",
            "nearest_upsample",
            "plain_csp",
            "strided_conv",
            "plain_csp",
            "strided_conv",
            "plain_csp"
        ]
    );
    let c: Conv<f32> = Conv::init("x", ConvSpec::new(8, 8, 3).stride(2), &SeedStream::new(0));
    assert_eq!(c.param_count(), 8 * 8 * 9 + 8);
}
