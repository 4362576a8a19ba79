// Parameter and FLOP totals of the eight skip-connection variants at the
// reference resolution, relative to the plain FPN.

use resfpn::accounting::{ablation_variants, compare_variants, reference_input};
use resfpn::pyramid::PyramidConfig;

pub fn run_example() -> resfpn::Result<()> {
    let variants = ablation_variants(&PyramidConfig::default())?;
    let cmp = compare_variants(&variants, reference_input())?;
    print!("{}", cmp.to_table());
    for m in cmp.reference_mismatches() {
        println!(
            "{}: computed delta {} vs reference {:.0}",
            m.variant, m.computed_delta, m.reference_delta
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    run_example()
}
