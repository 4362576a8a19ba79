use resfpn::accounting::summarize;
use resfpn::pyramid::{attach_projection, build_liteflownet_variant, build_resfpn, PyramidConfig};
use resfpn::{Error, Shape, Tape, Tensor};

#[test]
fn liteflownet_encoder_shapes() {
    let net = build_liteflownet_variant().unwrap();
    let s = summarize(&net, Shape::new(1, 3, 128, 192).unwrap()).unwrap();
    let shape = |n: &str| s.row(n).unwrap().output_shape;
    assert_eq!(shape("enc-1-1"), Shape::new(1, 32, 128, 192).unwrap());
    assert_eq!(shape("enc-2-2"), Shape::new(1, 32, 64, 96).unwrap());
    assert_eq!(shape("enc-6-2"), Shape::new(1, 192, 4, 6).unwrap());
    assert_eq!(shape("dec-2-2"), Shape::new(1, 32, 64, 96).unwrap());
    assert_eq!(net.decoder_levels(), vec![2, 3, 4, 5, 6]);
    // Input multiple drops to 32 with a full-resolution first level.
    assert!(net.infer_shapes(Shape::new(1, 3, 96, 160).unwrap()).is_ok());
}

#[test]
fn projection_on_every_decoder_level() {
    let base = build_resfpn(&PyramidConfig::default()).unwrap();
    let params0 = base.init_params::<f32>().unwrap();
    for level in base.decoder_levels() {
        let depth = PyramidConfig::default().encoder_depths[level];
        let net = attach_projection(&base, level, 128).unwrap();
        assert_eq!(net.param_count() - base.param_count(), (depth * 128 + 128) as u64);
        let params = net.init_params::<f32>().unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 3, 128, 128).unwrap(), 0.25));
        let f = net.forward(&mut tape, &params, x).unwrap();
        let scale = 1 << level;
        assert_eq!(
            tape.shape(f.projection(level).unwrap()),
            Shape::new(1, 128, 128 / scale, 128 / scale).unwrap()
        );
        // The base parameters are untouched by attaching the adapter.
        for (name, t) in params0.iter() {
            assert_eq!(params.by_name(name).unwrap().data(), t.data(), "{name}");
        }
    }
}

#[test]
fn projection_on_unknown_level_is_a_config_error() {
    let base = build_resfpn(&PyramidConfig::default()).unwrap();
    match attach_projection(&base, 1, 128) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "level"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn decoder_maps_are_retrievable_by_level() {
    let net = build_resfpn(&PyramidConfig::default()).unwrap();
    let params = net.init_params::<f32>().unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(Shape::new(1, 3, 64, 64).unwrap(), 0.5));
    let f = net.forward(&mut tape, &params, x).unwrap();
    assert_eq!(f.decoder_levels(), vec![2, 3, 4, 5, 6]);
    assert_eq!(f.finest(), f.decoder(2));
    assert_eq!(f.get("dec-2-2"), f.finest());
    for level in 2..=6 {
        let s = tape.shape(f.decoder(level).unwrap());
        assert_eq!(s.h, 64 >> level);
    }
    assert!(f.decoder(1).is_none());
}
