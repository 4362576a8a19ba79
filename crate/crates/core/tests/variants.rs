use std::collections::BTreeSet;

use proptest::prelude::*;
use resfpn::accounting::{ablation_variants, compare_variants, reference_input};
use resfpn::pyramid::{build_resfpn, Merge, PyramidConfig, PyramidNet, Reshape, Role, VARIANT_NAMES};
use resfpn::{Error, Shape};

const DEPTHS: [u64; 7] = [3, 16, 32, 64, 96, 128, 196];

/// Parameters a variant adds over the plain FPN, summed merge point by merge
/// point (targets 6 down to 2) without consulting the builder.
fn hand_delta(h: usize, merge: Merge, reshape: Reshape) -> i64 {
    let mut delta = 0i64;
    for t in 2..=6usize {
        let c = DEPTHS[t] as i64;
        let sources: Vec<i64> = (1..=h.min(t)).map(|g| DEPTHS[t - g] as i64).collect();
        let mut skip_depths = Vec::new();
        for &src in &sources {
            let (params, depth) = match reshape {
                Reshape::MaxPoolOnly => (0, src),
                Reshape::StridedConv3x3 => (9 * src * c + c, c),
                _ => (src * c + c, c),
            };
            delta += params;
            skip_depths.push(depth);
        }
        if merge == Merge::Concatenation {
            // Up-sampled and lateral maps are stacked too, except at the
            // bottleneck merge point which has neither.
            let base = if t == 6 { c } else { 2 * c };
            let widened = base + skip_depths.iter().sum::<i64>();
            delta += 9 * (widened - c) * c;
        }
    }
    delta
}

fn variant(name: &str) -> PyramidConfig {
    PyramidConfig::default().variant(name).unwrap()
}

#[test]
fn deltas_match_hand_oracle() {
    let cmp = compare_variants(
        &ablation_variants(&PyramidConfig::default()).unwrap(),
        reference_input(),
    )
    .unwrap();
    assert_eq!(cmp.rows.len(), 8);
    for name in VARIANT_NAMES {
        let cfg = variant(name);
        assert_eq!(
            cmp.row(name).unwrap().delta_params,
            hand_delta(cfg.extra_skips, cfg.merge, cfg.reshape),
            "{name}"
        );
    }
    assert_eq!(cmp.rows[0].delta_params, 0);
    assert_eq!(cmp.rows[0].delta_flops, 0);
}

#[test]
fn frozen_deltas() {
    let cmp = compare_variants(
        &ablation_variants(&PyramidConfig::default()).unwrap(),
        reference_input(),
    )
    .unwrap();
    let frozen = [
        ("fpn", 0),
        ("h1", 46_596),
        ("concat-maxpool", 972_000),
        ("concat-1x1", 1_599_240),
        ("strided", 696_552),
        ("bilinear", 78_312),
        ("maxpool-1x1", 78_312),
        ("resfpn", 78_312),
    ];
    for (name, d) in frozen {
        assert_eq!(cmp.row(name).unwrap().delta_params, d, "{name}");
    }
    let flagged: Vec<String> = cmp.reference_mismatches().into_iter().map(|m| m.variant).collect();
    assert_eq!(flagged, ["concat-maxpool", "concat-1x1"]);
}

#[test]
fn parameter_counts_pairwise_distinct_except_one_by_one_family() {
    let counts: Vec<(&str, u64)> = VARIANT_NAMES
        .iter()
        .map(|&n| (n, build_resfpn(&variant(n)).unwrap().param_count()))
        .collect();
    let family = ["bilinear", "maxpool-1x1", "resfpn"];
    for (i, a) in counts.iter().enumerate() {
        for b in &counts[i + 1..] {
            let same_family = family.contains(&a.0) && family.contains(&b.0);
            assert_eq!(a.1 == b.1, same_family, "{} vs {}", a.0, b.0);
        }
    }
}

#[test]
fn maxpool_only_requires_concatenation() {
    let cfg = PyramidConfig {
        reshape: Reshape::MaxPoolOnly,
        ..Default::default()
    };
    match build_resfpn(&cfg) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "reshape"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_file_round_trip_and_unknown_key() {
    let cfg = variant("strided");
    assert_eq!(PyramidConfig::parse(&cfg.to_key_values()).unwrap(), cfg);
    let text = "# comment\nh=1\nreshape=conv1x1_then_bilinear\n";
    let parsed = PyramidConfig::parse(text).unwrap();
    assert_eq!(parsed.extra_skips, 1);
    assert_eq!(parsed.reshape, Reshape::Conv1x1ThenBilinear);
    match PyramidConfig::parse("depth=3\n") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "depth"),
        other => panic!("{other:?}"),
    }
    match PyramidConfig::parse("encoder_depths=3,16,x\n") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "encoder_depths"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_variant_names_the_key() {
    match PyramidConfig::default().variant("dense") {
        Err(Error::Config { key, .. }) => assert_eq!(key, "variant"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn more_skips_than_levels_attach_all_available() {
    let wide = build_resfpn(&PyramidConfig {
        extra_skips: 9,
        ..Default::default()
    })
    .unwrap();
    // Every merge point reaches down to the image.
    for t in 2..=6 {
        assert!(wide.layer(&format!("skip-0-{t}")).is_some(), "target {t}");
    }
    wide.infer_shapes(Shape::new(1, 3, 128, 192).unwrap()).unwrap();
}

fn edges(net: &PyramidNet) -> BTreeSet<(String, String)> {
    net.layers()
        .iter()
        .flat_map(|l| {
            l.inputs
                .iter()
                .map(move |&s| (net.source_name(s).to_string(), l.name.clone()))
        })
        .collect()
}

fn arb_config() -> impl Strategy<Value = PyramidConfig> {
    (2usize..=6, 0usize..=6, 0usize..=4, 0usize..4, prop::bool::ANY).prop_map(|(l_d, l_u, h, r, concat)| {
        let reshape = [
            Reshape::Conv1x1ThenMaxPool,
            Reshape::StridedConv3x3,
            Reshape::Conv1x1ThenBilinear,
            Reshape::MaxPoolThenConv1x1,
        ][r];
        PyramidConfig {
            levels_down: l_d,
            levels_up: l_u.min(l_d),
            extra_skips: h,
            encoder_depths: std::iter::once(3)
                .chain(DEPTHS[1..=l_d].iter().map(|&d| d as usize / 4 + 1))
                .collect(),
            merge: if concat { Merge::Concatenation } else { Merge::Addition },
            reshape,
            ..Default::default()
        }
    })
}

#[test]
fn h_nesting_on_default_net() {
    for h in 0..6 {
        let small = edges(
            &build_resfpn(&PyramidConfig {
                extra_skips: h,
                ..Default::default()
            })
            .unwrap(),
        );
        let big = edges(
            &build_resfpn(&PyramidConfig {
                extra_skips: h + 1,
                ..Default::default()
            })
            .unwrap(),
        );
        assert!(small.is_subset(&big) && small.len() < big.len(), "h={h}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_nest_in_h(cfg in arb_config()) {
        let small = edges(&build_resfpn(&cfg).unwrap());
        let big = edges(&build_resfpn(&PyramidConfig { extra_skips: cfg.extra_skips + 1, ..cfg.clone() }).unwrap());
        prop_assert!(small.is_subset(&big));
    }

    #[test]
    fn skips_only_go_from_high_to_low_resolution(cfg in arb_config()) {
        let net = build_resfpn(&cfg).unwrap();
        let input = Shape::new(1, 3, cfg.input_multiple(), 2 * cfg.input_multiple()).unwrap();
        let shapes = net.infer_shapes(input).unwrap();
        for (i, layer) in net.layers().iter().enumerate() {
            if let Role::Skip { from, to } = layer.role {
                prop_assert!(from < to);
                prop_assert!(cfg.scale_of(from) < cfg.scale_of(to));
                let src = net.source_name(layer.inputs[0]);
                let expected = if from == 0 { "input".to_string() } else { format!("enc-{from}-2") };
                prop_assert_eq!(src, expected.as_str());
                prop_assert_eq!(shapes[i].h, input.h / cfg.scale_of(to));
            }
        }
    }

    #[test]
    fn random_configs_produce_consistent_shapes(cfg in arb_config()) {
        let net = build_resfpn(&cfg).unwrap();
        let m = cfg.input_multiple();
        let input = Shape::new(1, 3, m, m).unwrap();
        let shapes = net.infer_shapes(input).unwrap();
        prop_assert_eq!(shapes.len(), net.layers().len());
        // The bottleneck merge point decodes too: l_u blocks give l_u + 1 outputs.
        let outputs = if cfg.levels_up == 0 { 0 } else { cfg.levels_up + 1 };
        prop_assert_eq!(net.decoder_levels().len(), outputs);
        prop_assert!(net.infer_shapes(Shape::new(1, 3, m + 1, m).unwrap()).is_err());
    }
}
