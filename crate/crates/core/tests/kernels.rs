mod common;

use common::rand;
use neck_core::kernels::{self, conv, pool, Geometry};
use neck_core::{ConvSpec, Dims, SeedStream, Tensor};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

#[test]
fn conv2d_matches_direct_loops_over_geometry_grid() {
    let rng = SeedStream::new(11);
    let mut cases = 0;
    for stride in 1..=3 {
        for padding in 0..=3 {
            for dilation in 1..=3 {
                for (i, k) in [1usize, 2, 3].into_iter().enumerate() {
                    let key = format!("{stride}.{padding}.{dilation}.{k}");
                    let (h, w) = (5 + i, 7 - i);
                    let x = rand(&rng, &format!("x{key}"), [2, 3, h, w]);
                    let wt = rand(&rng, &format!("w{key}"), [4, 3, k, k]);
                    let b = rand(&rng, &format!("b{key}"), [1, 4, 1, 1]);
                    let g = Geometry {
                        stride,
                        padding,
                        dilation,
                    };
                    let Ok(fast) = conv::conv2d(&x, &wt, Some(&b), g) else {
                        // dilated kernel larger than the padded input
                        assert!(h + 2 * padding < dilation * (k - 1) + 1 || w + 2 * padding < dilation * (k - 1) + 1);
                        continue;
                    };
                    let slow = common::conv2d(&x, &wt, Some(&b), stride, padding, dilation);
                    assert!(common::rel_err(&fast, &slow) <= TOL, "{key}");
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 100, "only {cases} cases ran");
}

#[test]
fn dilated_all_ones_centre_and_corner() {
    let x = Tensor::<f64>::ones([1, 1, 5, 5]);
    let w = Tensor::<f64>::ones([1, 1, 3, 3]);
    let g = Geometry {
        stride: 1,
        padding: 1,
        dilation: 2,
    };
    let y = conv::conv2d(&x, &w, None, g).unwrap();
    assert_eq!(y.dims(), Dims::new(1, 1, 3, 3));
    assert_eq!(y.at(0, 0, 1, 1), 9.0);
    assert_eq!(y.at(0, 0, 0, 0), 4.0);
    assert_eq!(common::conv2d(&x, &w, None, 1, 1, 2).data(), y.data());
}

#[test]
fn conv_layer_shapes_and_errors() {
    let spec = ConvSpec::new(8, 4, 3).stride(2).padding(1).without_bias();
    let x = Tensor::<f32>::zeros([1, 8, 16, 16]);
    let w = Tensor::zeros(spec.weight_dims());
    assert_eq!(
        kernels::conv2d(&x, &spec, &w, None).unwrap().dims(),
        Dims::new(1, 4, 8, 8)
    );
    let bad = Tensor::<f32>::zeros([1, 7, 16, 16]);
    assert!(kernels::conv2d(&bad, &spec, &w, None).is_err());
    let tiny = Tensor::<f32>::zeros([1, 8, 1, 1]);
    let big = ConvSpec::new(8, 4, 3).padding(0).dilation(3).without_bias();
    assert!(kernels::conv2d(&tiny, &big, &Tensor::zeros(big.weight_dims()), None).is_err());
}

#[test]
fn identity_1x1_is_exact_passthrough() {
    let rng = SeedStream::new(4);
    let x: Tensor<f32> = rng.uniform("x", [2, 5, 3, 4], -3.0, 3.0);
    let spec = ConvSpec::new(5, 5, 1).activation(neck_core::Activation::Identity);
    let w = Tensor::from_fn(spec.weight_dims(), |o, i, _, _| if o == i { 1.0 } else { 0.0 });
    let b = Tensor::zeros(spec.bias_dims());
    assert!(kernels::conv2d(&x, &spec, &w, Some(&b)).unwrap().bitwise_eq(&x));
}

#[test]
fn conv_transpose_matches_scatter_oracle() {
    let rng = SeedStream::new(12);
    for i in 0..100 {
        let (c_in, c_out, h, w, k, s) = (1 + i % 4, 1 + i % 3, 1 + i % 5, 1 + (i / 5) % 4, 1 + i % 3, 1 + i % 2);
        let x = rand(&rng, &format!("x{i}"), [1 + i % 2, c_in, h, w]);
        let wt = rand(&rng, &format!("w{i}"), [c_in, c_out, k, k]);
        let b = rand(&rng, &format!("b{i}"), [1, c_out, 1, 1]);
        let fast = conv::conv_transpose2d(&x, &wt, Some(&b), s).unwrap();
        let slow = common::conv_transpose2d(&x, &wt, Some(&b), s);
        assert!(common::rel_err(&fast, &slow) <= TOL, "case {i}");
    }
}

#[test]
fn conv_transpose_single_pixel_and_shape() {
    let x = Tensor::<f64>::full([1, 1, 1, 1], 5.0);
    let y = kernels::conv_transpose2d(&x, &Tensor::ones([1, 1, 2, 2]), None, 2, 2).unwrap();
    assert_eq!(y.data(), &[5.0; 4]);
    let x = Tensor::<f64>::zeros([1, 4, 3, 3]);
    let y = kernels::conv_transpose2d(&x, &Tensor::zeros([4, 7, 2, 2]), None, 2, 2).unwrap();
    assert_eq!(y.dims(), Dims::new(1, 7, 6, 6));
    assert!(kernels::conv_transpose2d(&x, &Tensor::zeros([3, 7, 2, 2]), None, 2, 2).is_err());
}

/// Transposed conv (k2 s2) is the adjoint of the stride-2 conv with the same
/// weights: <conv(x), y> == <x, conv_t(y)>.
#[test]
fn conv_transpose_is_adjoint_of_strided_conv() {
    let rng = SeedStream::new(13);
    for i in 0..20 {
        let w = rand(&rng, &format!("w{i}"), [3, 5, 2, 2]);
        let x = rand(&rng, &format!("x{i}"), [2, 5, 6, 8]);
        let y = rand(&rng, &format!("y{i}"), [2, 3, 3, 4]);
        let g = Geometry {
            stride: 2,
            padding: 0,
            dilation: 1,
        };
        let lhs = conv::conv2d(&x, &w, None, g).unwrap().dot(&y);
        // conv weights (out=3, in=5) read as transposed-conv weights (in=3, out=5)
        let rhs = x.dot(&conv::conv_transpose2d(&y, &w, None, 2).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn conv_input_gradient_is_adjoint() {
    let rng = SeedStream::new(14);
    let mut i = 0;
    for stride in 1..=3 {
        for padding in 0..=2 {
            for dilation in 1..=3 {
                i += 1;
                let x = rand(&rng, &format!("x{i}"), [2, 3, 9, 8]);
                let w = rand(&rng, &format!("w{i}"), [4, 3, 3, 3]);
                let g = Geometry {
                    stride,
                    padding,
                    dilation,
                };
                let Ok(cx) = conv::conv2d(&x, &w, None, g) else {
                    continue;
                };
                let y = rand(&rng, &format!("y{i}"), cx.dims().as_array());
                let lhs = cx.dot(&y);
                let rhs = x.dot(&conv::conv2d_grad_input(&y, &w, x.dims(), g).unwrap());
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()),
                    "{g:?}: {lhs} vs {rhs}"
                );
                // the weight gradient is the adjoint in the other argument
                let dw = conv::conv2d_grad_weight(&y, &x, w.dims(), g).unwrap();
                let rhs_w = w.dot(&dw);
                assert!((lhs - rhs_w).abs() <= 1e-10 * lhs.abs(), "{g:?}");
            }
        }
    }
}

#[test]
fn pooling_and_upsample_match_oracles() {
    let rng = SeedStream::new(15);
    for i in 0..100 {
        let dims = [1 + i % 2, 1 + i % 4, 2 * (1 + i % 5), 2 * (1 + (i / 5) % 4)];
        let x = rand(&rng, &format!("x{i}"), dims);
        let mp = kernels::maxpool2d(&x).unwrap();
        assert_eq!(mp.data(), common::maxpool2(&x).data(), "maxpool {i}");
        let ap = kernels::global_avgpool(&x);
        assert!(common::rel_err(&ap, &common::avgpool(&x)) <= TOL, "avgpool {i}");
        let up = kernels::upsample_nearest(&x);
        assert_eq!(up.data(), common::upsample2(&x).data(), "upsample {i}");
    }
}

#[test]
fn pooling_small_cases() {
    let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(kernels::maxpool2d(&x).unwrap().data(), &[4.0]);
    assert_eq!(kernels::global_avgpool(&x).data(), &[2.5]);
    let c = Tensor::<f64>::full([1, 2, 4, 6], 1.5);
    assert_eq!(kernels::maxpool2d(&c).unwrap(), Tensor::full([1, 2, 2, 3], 1.5));
    assert_eq!(kernels::global_avgpool(&c), Tensor::full([1, 2, 1, 1], 1.5));
    assert!(kernels::maxpool2d(&Tensor::<f64>::zeros([1, 1, 3, 4])).is_err());
    let seven = Tensor::<f64>::full([1, 1, 1, 1], 7.0);
    assert_eq!(kernels::upsample_nearest(&seven).data(), &[7.0; 4]);
}

#[test]
fn maxpool_ties_route_gradient_to_first_element() {
    let x = Tensor::<f64>::full([1, 1, 2, 2], 3.0);
    let (_, argmax) = pool::maxpool2(&x).unwrap();
    assert_eq!(argmax, vec![0]);
    let dx = pool::maxpool2_grad(&Tensor::<f64>::ones([1, 1, 1, 1]), &argmax, x.dims());
    assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn concat_order_and_round_trip() {
    let rng = SeedStream::new(16);
    let a = rand(&rng, "a", [1, 2, 4, 4]);
    let b = rand(&rng, "b", [1, 3, 4, 4]);
    let cat = kernels::concat_channels(&[&a, &b]).unwrap();
    assert_eq!(cat.dims(), Dims::new(1, 5, 4, 4));
    assert_eq!(cat, common::concat(&[&a, &b]));
    assert!(cat.slice_channels(0, 2).unwrap().bitwise_eq(&a));
    assert!(cat.slice_channels(2, 5).unwrap().bitwise_eq(&b));
    assert!(kernels::concat_channels(&[&a]).unwrap().bitwise_eq(&a));
    let c = rand(&rng, "c", [1, 3, 4, 5]);
    assert!(kernels::concat_channels(&[&a, &c]).is_err());
}

#[test]
fn pointwise_values() {
    let z = Tensor::<f64>::zeros([1, 1, 1, 1]);
    assert_eq!(kernels::sigmoid(&z).data(), &[0.5]);
    let extremes = Tensor::<f64>::new([1, 1, 1, 4], vec![-1e4, -40.0, 40.0, 1e4]).unwrap();
    for &s in kernels::sigmoid(&extremes).data() {
        assert!(s > 0.0 && s < 1.0, "{s}");
    }
    let extremes32 = extremes.cast::<f32>();
    for &s in kernels::sigmoid(&extremes32).data() {
        assert!(s > 0.0 && s < 1.0, "{s}");
    }
    let rng = SeedStream::new(17);
    let x = rand(&rng, "x", [2, 3, 4, 5]);
    for (a, &v) in kernels::silu(&x).data().iter().zip(x.data()) {
        assert!((a - common::silu(v)).abs() <= 1e-15);
    }
    let ones = Tensor::<f64>::ones([2, 3, 1, 1]);
    assert!(kernels::mul_broadcast(&x, &ones).unwrap().bitwise_eq(&x));
    assert!(kernels::mul_broadcast(&x, &Tensor::ones([2, 4, 1, 1])).is_err());
}

#[test]
fn upsample_then_stride_is_identity() {
    let x = rand(&SeedStream::new(18), "x", [2, 3, 5, 4]);
    let up = kernels::upsample_nearest(&x);
    let down = Tensor::from_fn(x.dims(), |n, c, y, w| up.at(n, c, 2 * y, 2 * w));
    assert!(down.bitwise_eq(&x));
}

#[test]
fn parallel_and_serial_paths_agree_bitwise() {
    // large enough to cross the parallel threshold
    let rng = SeedStream::new(19);
    let x: Tensor<f32> = rng.uniform("x", [1, 32, 32, 32], -1.0, 1.0);
    let w: Tensor<f32> = rng.uniform("w", [32, 32, 3, 3], -0.1, 0.1);
    let g = Geometry {
        stride: 1,
        padding: 1,
        dilation: 1,
    };
    let par = conv::conv2d(&x, &w, None, g).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let ser = pool.install(|| conv::conv2d(&x, &w, None, g).unwrap());
    assert!(par.bitwise_eq(&ser));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_dims_follow_formula(
        h in 1usize..12, w in 1usize..12, k in 1usize..4,
        stride in 1usize..4, padding in 0usize..4, dilation in 1usize..4,
    ) {
        let x = Tensor::<f64>::ones([1, 2, h, w]);
        let wt = Tensor::<f64>::ones([3, 2, k, k]);
        let g = Geometry { stride, padding, dilation };
        let extent = dilation * (k - 1) + 1;
        match conv::conv2d(&x, &wt, None, g) {
            Ok(y) => {
                prop_assert!(h + 2 * padding >= extent && w + 2 * padding >= extent);
                prop_assert_eq!(y.dims().h, (h + 2 * padding - extent) / stride + 1);
                prop_assert_eq!(y.dims().w, (w + 2 * padding - extent) / stride + 1);
            }
            Err(_) => prop_assert!(h + 2 * padding < extent || w + 2 * padding < extent),
        }
    }

    #[test]
    fn sigmoid_is_strictly_inside_unit_interval(v in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
        let s = kernels::sigmoid(&Tensor::full([1, 1, 1, 1], v)).data()[0];
        prop_assert!(s > 0.0 && s < 1.0);
        if (v as f32).is_finite() {
            let s32 = kernels::sigmoid(&Tensor::full([1, 1, 1, 1], v as f32)).data()[0];
            prop_assert!(s32 > 0.0 && s32 < 1.0);
        }
    }
}
