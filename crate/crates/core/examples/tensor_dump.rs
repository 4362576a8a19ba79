// Writes a tensor in the portable dump format and reads it back.

use resfpn::dump;
use resfpn::tensor::{Fill, Shape, Tensor};

pub fn run_example() -> resfpn::Result<()> {
    let t = Tensor::<f32>::create(Shape::new(1, 2, 3, 4)?, Fill::Uniform { low: -1.0, high: 1.0 }, 7)?;
    let bytes = dump::encode(&t);
    println!(
        "{} values -> {} bytes, magic {:?}",
        t.len(),
        bytes.len(),
        std::str::from_utf8(&bytes[..8]).unwrap_or("?")
    );

    let dir = std::env::temp_dir().join(format!("resfpn-dump-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("t.pft");
    dump::save(&t, &path)?;
    let back: Tensor<f32> = dump::load(&path)?;
    assert_eq!(back.data(), t.data());
    println!("roundtrip through {} ok", path.display());
    std::fs::remove_dir_all(&dir)?;

    // Reading with the wrong element type is an error.
    assert!(dump::decode::<f64>(&bytes).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    run_example()
}
