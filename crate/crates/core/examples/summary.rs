// Prints the layer table of the default pyramid for a 256x512 input and
// the same network at another size.

use resfpn::accounting::summarize;
use resfpn::pyramid::{build_resfpn, PyramidConfig};
use resfpn::Shape;

pub fn run_example() -> resfpn::Result<()> {
    let net = build_resfpn(&PyramidConfig::default())?;
    let summary = summarize(&net, Shape::new(1, 3, 256, 512)?)?;
    print!("{}", summary.to_table());

    let dec = summarize(&net, Shape::new(1, 3, 384, 1280)?)?;
    let finest = dec.row("dec-2-2").expect("default net decodes to level 2");
    println!("\n384x1280 -> dec-2-2 {}", finest.output_shape);
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    run_example()
}
