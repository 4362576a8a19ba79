// Pyramid with LiteFlowNet's encoder depths (full-resolution first level,
// 1/32 deepest) and a 1x1 projection adapter on the finest decoder map.

use resfpn::pyramid::{attach_projection, build_liteflownet_variant, build_resfpn, PyramidConfig};
use resfpn::{Shape, Tape, Tensor};

pub fn run_example() -> resfpn::Result<()> {
    let net = build_liteflownet_variant()?;
    let input = Shape::new(1, 3, 64, 64)?;
    let shapes = net.infer_shapes(input)?;
    for (layer, shape) in net.layers().iter().zip(&shapes) {
        if !layer.name.starts_with("skip") && (layer.name.ends_with("-2") || layer.name == "bottleneck") {
            println!("{:<10} {shape}", layer.name);
        }
    }

    // A 128-channel adapter on dec-2-2 of the default pyramid.
    let base = build_resfpn(&PyramidConfig::default())?;
    let projected = attach_projection(&base, 2, 128)?;
    let params = projected.init_params::<f32>()?;
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(Shape::new(1, 3, 128, 256)?, 0.5));
    let features = projected.forward(&mut tape, &params, x)?;
    let proj = features.projection(2).expect("projection attached");
    println!(
        "proj-2 {} (+{} parameters)",
        tape.shape(proj),
        projected.param_count() - base.param_count()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    run_example()
}
