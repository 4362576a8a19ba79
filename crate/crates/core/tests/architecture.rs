use proptest::prelude::*;
use resfpn::accounting::summarize;
use resfpn::pyramid::{build_resfpn, PyramidConfig};
use resfpn::{Error, Shape};

mod common;
use common::TABLE;

/// Frozen total of the default feature module, from [`hand_params`].
const DEFAULT_PARAMS: u64 = 2_509_816;
/// Frozen FLOPs at 256x512, from [`hand_flops`].
const DEFAULT_FLOPS_256X512: u64 = 1_977_536_000;

fn row(name: &str) -> (&'static str, &'static str, &'static str, usize, usize) {
    *TABLE.iter().find(|r| r.0 == name).expect("row in table")
}

fn depth_and_div(name: &str) -> (usize, usize) {
    if name == "input" {
        (3, 1)
    } else {
        let r = row(name);
        (r.4, r.3)
    }
}

fn kernel(layer: &str) -> (usize, usize) {
    // "Conv(c,k,s,d)" / "UpConv(c,k,s,d)": (k, s)
    let inner = &layer[layer.find('(').unwrap() + 1..layer.find(')').unwrap()];
    let v: Vec<usize> = inner.split(',').map(|x| x.parse().unwrap()).collect();
    (v[1], v[2])
}

/// k*k*c_in*c_out + c_out per (transposed) convolution; c_in is the depth of
/// the first listed input (merges are additions, so every input agrees).
fn hand_params() -> u64 {
    TABLE
        .iter()
        .map(|&(_, input, layer, _, out)| {
            let first = input.split('+').next().unwrap();
            let (c_in, _) = depth_and_div(first);
            let (k, _) = kernel(layer);
            (k * k * c_in * out + out) as u64
        })
        .sum()
}

/// Conv: 2 FLOPs per MAC, one bias add and one activation per output.
/// Max-pool: k*k-1 comparisons per output. Addition: inputs-1 per element.
fn hand_flops(h: usize, w: usize) -> u64 {
    let mut total = 0;
    for &(_, input, layer, div, out) in &TABLE {
        let inputs: Vec<&str> = input.split('+').collect();
        let (c_in, in_div) = depth_and_div(inputs[0]);
        let (k, _) = kernel(layer);
        let out_px = (h / div) * (w / div);
        total += ((inputs.len() - 1) * out_px * out) as u64;
        if layer.starts_with("UpConv") {
            // Transposed conv: every input pixel scatters a k*k*out stencil.
            let in_px = (h / in_div) * (w / in_div);
            total += (2 * k * k * c_in * out * in_px + 2 * out_px * out) as u64;
        } else if let Some(p) = layer.find("MaxPool(") {
            let pool: usize = layer[p + 8..].split(',').next().unwrap().parse().unwrap();
            let conv_px = out_px * pool * pool;
            total += (conv_px * out * (2 * c_in + 2)) as u64;
            total += (out_px * out * (pool * pool - 1)) as u64;
        } else {
            total += (out_px * out * (2 * k * k * c_in + 2)) as u64;
        }
    }
    total
}

fn check_golden(h: usize, w: usize) {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let s = summarize(&net, Shape::new(1, 3, h, w).unwrap()).unwrap();
    assert_eq!(s.input, Shape::new(1, 3, h, w).unwrap());
    assert_eq!(s.rows.len(), TABLE.len());
    for (r, &(name, input, layer, div, c)) in s.rows.iter().zip(&TABLE) {
        assert_eq!(r.name, name);
        assert_eq!(r.input, input, "{name}");
        assert_eq!(r.layer, layer, "{name}");
        assert_eq!(r.output_shape, Shape::new(1, c, h / div, w / div).unwrap(), "{name}");
    }
}

#[test]
fn golden_table_256x512() {
    check_golden(256, 512);
}

#[test]
fn golden_table_384x640() {
    check_golden(384, 640);
}

#[test]
fn finest_row_at_256x512() {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let s = summarize(&net, Shape::new(1, 3, 256, 512).unwrap()).unwrap();
    assert_eq!(
        s.row("dec-2-2").unwrap().output_shape,
        Shape::new(1, 32, 64, 128).unwrap()
    );
    assert_eq!(
        s.relative_shape(s.row("dec-2-2").unwrap().output_shape),
        "1/4 H x 1/4 W x 32"
    );
}

#[test]
fn parameter_total_matches_hand_formula() {
    assert_eq!(hand_params(), DEFAULT_PARAMS);
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    assert_eq!(net.param_count(), DEFAULT_PARAMS);
    let s = summarize(&net, Shape::new(1, 3, 256, 512).unwrap()).unwrap();
    assert_eq!(s.total_params, DEFAULT_PARAMS);
    for r in &s.rows {
        let &(_, input, layer, _, out) = &row(&r.name);
        let (c_in, _) = depth_and_div(input.split('+').next().unwrap());
        let (k, _) = kernel(layer);
        assert_eq!(r.params, (k * k * c_in * out + out) as u64, "{}", r.name);
    }
    assert_eq!(
        net.init_params::<f32>().unwrap().count(),
        DEFAULT_PARAMS,
        "materialized store"
    );
}

#[test]
fn flop_total_matches_hand_formula() {
    assert_eq!(hand_flops(256, 512), DEFAULT_FLOPS_256X512);
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    for (h, w) in [(256, 512), (384, 1280), (64, 64)] {
        let s = summarize(&net, Shape::new(1, 3, h, w).unwrap()).unwrap();
        assert_eq!(s.total_flops, hand_flops(h, w), "{h}x{w}");
    }
}

#[test]
fn indivisible_input_rejected() {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let err = summarize(&net, Shape::new(1, 3, 384, 1248).unwrap()).unwrap_err();
    assert!(matches!(err, Error::InvalidShape(_)), "{err}");
}

#[test]
fn fpn_has_only_laterals() {
    let net = build_resfpn(&PyramidConfig::fpn()).unwrap();
    let s = summarize(&net, Shape::new(1, 3, 128, 128).unwrap()).unwrap();
    assert!(s.rows.iter().all(|r| !r.name.starts_with("skip")));
    assert_eq!(s.row("dec-6-2").unwrap().input, "bottleneck");
    assert_eq!(s.row("dec-2-2").unwrap().input, "dec-2-1+enc-2-2");
}

#[test]
fn encoder_only_has_no_decoder_rows() {
    let cfg = PyramidConfig {
        levels_up: 0,
        ..Default::default()
    };
    let net = build_resfpn(&cfg).unwrap();
    assert!(net.decoder_levels().is_empty());
    assert_eq!(net.finest_level(), None);
    let s = summarize(&net, Shape::new(1, 3, 64, 64).unwrap()).unwrap();
    assert!(s.rows.iter().all(|r| r.name.starts_with("enc-")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn golden_shapes_hold_for_any_multiple_of_64(a in 1usize..12, b in 1usize..24) {
        check_golden(64 * a, 64 * b);
    }

    #[test]
    fn flops_are_resolution_linear(a in 1usize..6, b in 1usize..6) {
        let net = build_resfpn(&PyramidConfig::default()).unwrap();
        let small = summarize(&net, Shape::new(1, 3, 64 * a, 64 * b).unwrap()).unwrap();
        let big = summarize(&net, Shape::new(1, 3, 128 * a, 128 * b).unwrap()).unwrap();
        prop_assert_eq!(small.total_params, big.total_params);
        for (s, l) in small.rows.iter().zip(&big.rows) {
            prop_assert_eq!(4 * s.flops, l.flops, "{}", s.name);
        }
    }

    #[test]
    fn accounting_is_a_pure_function(a in 1usize..6, b in 1usize..6) {
        let input = Shape::new(1, 3, 64 * a, 64 * b).unwrap();
        let first = summarize(&build_resfpn(&PyramidConfig::default()).unwrap(), input).unwrap();
        let second = summarize(&build_resfpn(&PyramidConfig::default()).unwrap(), input).unwrap();
        prop_assert_eq!(first, second);
    }
}
