// Generates a random-dot stereo pair and scores a few hand-made
// predictions, including the boundary-distance buckets.

use resfpn::harness::generate_sample;
use resfpn::harness::metrics::evaluate_predictions;

pub fn run_example() -> resfpn::Result<()> {
    let s = generate_sample(64, 128, 3, 24, 42)?;
    let valid = s.valid_mask.iter().filter(|&&v| v).count();
    println!(
        "background disparity {}, {} object pixels, {valid} valid pixels",
        s.background_disparity,
        s.object_mask.iter().filter(|&&m| m).count()
    );

    let samples = [s.clone()];
    let perfect = evaluate_predictions(std::slice::from_ref(&s.gt_disparity), &samples, &[1, 2, 4, 8])?;
    println!("ground truth: EPE {} outliers {}", perfect.epe, perfect.outlier_rate);

    let flat = vec![s.background_disparity as f32; s.gt_disparity.len()];
    let report = evaluate_predictions(&[flat], &samples, &[1, 2, 4, 8])?;
    println!(
        "background only: EPE {:.3} outliers {:.3}",
        report.epe, report.outlier_rate
    );
    for b in &report.boundary {
        println!("  <= {} px: n {} EPE {:?}", b.max_distance, b.n_eval, b.epe);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    run_example()
}
