use resfpn::gradcheck::{check_function, is_linear, network_check, run_check, CHECK_NAMES, DEFAULT_TOLERANCE};
use resfpn::ops::{ConvSpec, PoolSpec};
use resfpn::pyramid::{build_resfpn, PyramidConfig};
use resfpn::tensor::Fill;
use resfpn::{Error, Shape, Tape, Tensor};

#[test]
fn every_op_check_passes_on_several_seeds() {
    let cfg = PyramidConfig::default();
    for name in CHECK_NAMES.iter().filter(|&&n| n != "resfpn") {
        for seed in 0..3 {
            let r = run_check(name, &cfg, DEFAULT_TOLERANCE, seed).unwrap();
            let expected_tol = if is_linear(name) { 1e-6 } else { 1e-4 };
            assert_eq!(r.tolerance, expected_tol, "{name}");
            assert!(r.passed(), "{name} seed {seed}: {:e}", r.max_rel_error);
            assert!(r.points > 0);
        }
    }
}

#[test]
fn small_pyramid_network_check() {
    let cfg = PyramidConfig {
        levels_down: 3,
        levels_up: 2,
        encoder_depths: vec![3, 4, 6, 8],
        ..Default::default()
    };
    let r = network_check(&cfg, DEFAULT_TOLERANCE, 1).unwrap();
    assert!(r.passed(), "{:e}", r.max_rel_error);
}

#[test]
fn composed_block_check() {
    let x = Tensor::<f64>::create(
        Shape::new(1, 3, 8, 8).unwrap(),
        Fill::Uniform { low: -1.0, high: 1.0 },
        3,
    )
    .unwrap();
    let w1 = Tensor::<f64>::create(Shape::new(5, 3, 3, 3).unwrap(), Fill::KaimingUniform { fan_in: 27 }, 4).unwrap();
    let w2 = Tensor::<f64>::create(Shape::new(5, 5, 4, 4).unwrap(), Fill::KaimingUniform { fan_in: 20 }, 5).unwrap();
    let b = Tensor::<f64>::create(
        Shape::new(1, 1, 1, 5).unwrap(),
        Fill::Uniform { low: -0.1, high: 0.1 },
        6,
    )
    .unwrap();
    let r = check_function(
        "block",
        &[x, w1, w2, b],
        |t, v| {
            let c = t.conv2d(v[0], v[1], v[3], ConvSpec::same(5, 3, 2)?)?;
            let a = t.leaky_relu(c, 0.1)?;
            let u = t.conv_transpose2d(a, v[2], v[3], ConvSpec::upconv(5, 2)?)?;
            let sq = t.mul(u, u)?;
            let p = t.max_pool2d(sq, PoolSpec::square(2)?)?;
            t.bilinear_resize(p, 6, 6)
        },
        200,
        DEFAULT_TOLERANCE,
        0,
    )
    .unwrap();
    assert!(r.passed(), "{:e}", r.max_rel_error);
}

#[test]
fn impossible_tolerance_fails() {
    let r = run_check("conv3x3", &PyramidConfig::default(), 0.0, 0).unwrap();
    assert!(!r.passed());
}

#[test]
fn addition_rejects_mismatched_shapes() {
    let mut tape = Tape::<f32>::new();
    let a = tape.leaf(Tensor::zeros(Shape::new(1, 4, 8, 8).unwrap()));
    let b = tape.leaf(Tensor::zeros(Shape::new(1, 2, 8, 8).unwrap()));
    assert!(matches!(tape.add(a, b), Err(Error::MergeShape(_))));
}

#[test]
fn backward_needs_a_scalar() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(Shape::new(1, 1, 2, 2).unwrap(), 1.0));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    let mut lone = Tape::<f64>::new();
    let s = lone.leaf(Tensor::scalar(2.0).with_requires_grad());
    lone.backward(s).unwrap();
    assert_eq!(lone.grad(s), Some(&[1.0][..]));
}

#[test]
fn forward_is_bitwise_deterministic() {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let input = Tensor::<f32>::create(
        Shape::new(1, 3, 64, 128).unwrap(),
        Fill::Uniform { low: 0.0, high: 1.0 },
        7,
    )
    .unwrap();
    let run = || {
        let params = net.init_params::<f32>().unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let f = net.forward(&mut tape, &params, x).unwrap();
        tape.value(f.finest().unwrap()).clone()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.data(), b.data());
    assert!(a.is_finite());
}

#[test]
fn single_and_double_precision_agree() {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let input = Tensor::<f64>::create(
        Shape::new(1, 3, 64, 64).unwrap(),
        Fill::Uniform { low: 0.0, high: 1.0 },
        8,
    )
    .unwrap();
    let p64 = net.init_params::<f64>().unwrap();
    let p32 = net.init_params::<f32>().unwrap();
    let mut t64 = Tape::new();
    let x64 = t64.leaf(input.clone());
    let v64 = net.forward(&mut t64, &p64, x64).unwrap().finest().unwrap();
    let f64_out = t64.value(v64).clone();
    let mut t32 = Tape::new();
    let x32 = t32.leaf(input.cast::<f32>());
    let v32 = net.forward(&mut t32, &p32, x32).unwrap().finest().unwrap();
    let f32_out = t32.value(v32).clone();
    let scale = f64_out.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in f64_out.data().iter().zip(f32_out.data()) {
        assert!((a - *b as f64).abs() <= 1e-4 * scale, "{a} vs {b}");
    }
}
