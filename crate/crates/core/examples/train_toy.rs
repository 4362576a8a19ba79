// Trains a pyramid with the soft-argmin disparity head on random-dot
// stereograms and compares its held-out EPE with the best constant
// disparity.
//
// `cargo run --release --example train_toy -- [variant] [steps] [seed]`

use std::time::Instant;

use resfpn::harness::train::{make_samples, Split};
use resfpn::harness::{best_constant_epe, evaluate, train, TrainConfig};
use resfpn::pyramid::{build_resfpn, PyramidConfig};

fn run(variant: &str, steps: usize, seed: u64) -> resfpn::Result<()> {
    let net = build_resfpn(&PyramidConfig::default().variant(variant)?)?;
    let cfg = TrainConfig {
        steps,
        seed,
        ..Default::default()
    };
    let started = Instant::now();
    let report = train(&net, &cfg)?;
    let secs = started.elapsed().as_secs_f64();
    let chunk = steps.div_ceil(10).max(1);
    for (i, losses) in report.losses.chunks(chunk).enumerate() {
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        println!("steps {:>4}+  mean loss {mean:.4}", i * chunk + 1);
    }
    println!("{steps} steps in {secs:.1}s");

    let eval = make_samples(&cfg.task, seed, Split::Eval, 0, 8)?;
    let metrics = evaluate(&net, &report.params, &eval, cfg.task.max_disp, &[1, 2, 4, 8])?;
    let (constant, constant_epe) = best_constant_epe(&eval)?;
    println!(
        "{variant}: EPE {:.3}  >3px {:.1}%  (constant {constant}: EPE {constant_epe:.3})",
        metrics.epe,
        100.0 * metrics.outlier_rate
    );
    for b in &metrics.boundary {
        match b.epe {
            Some(e) => println!(
                "  within {} px of a boundary: EPE {e:.3} over {} px",
                b.max_distance, b.n_eval
            ),
            None => println!("  within {} px of a boundary: no pixels", b.max_distance),
        }
    }
    Ok(())
}

pub fn run_example() -> resfpn::Result<()> {
    run("resfpn", 10, 0)
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant = args.first().map_or("resfpn", String::as_str);
    let steps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    run(variant, steps, seed)
}
