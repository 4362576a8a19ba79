//! The `resfpn` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::accounting::{compare_variants, reference_input, summarize};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, DEFAULT_TOLERANCE};
use crate::harness::metrics::{best_constant_epe, DEFAULT_BOUNDARY_DISTANCES};
use crate::harness::train::{evaluate, make_samples, train, Split, TaskParams, TrainConfig};
use crate::harness::MetricsReport;
use crate::pyramid::config::{parse_key_values, parse_num};
use crate::pyramid::{build_resfpn, ParamStore, PyramidConfig, VARIANT_NAMES};
use crate::tensor::Shape;

#[derive(Debug, Parser)]
#[command(
    name = "resfpn",
    version,
    about = "Feature pyramids with extra residual skip connections"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key=value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for initialization and data; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` override applied after the config file (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Layer table with output shapes, parameters and FLOPs.
    Summary {
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Total parameter and FLOP counts.
    Count {
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Finite-difference gradient checks in double precision.
    Gradcheck {
        /// Tolerance of nonlinear checks; linear checks use 1/100 of it.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        /// Run only this check.
        #[arg(long)]
        op: Option<String>,
    },
    /// Trains on synthetic stereo pairs; writes the loss curve and a checkpoint.
    Train {
        /// Named ablation variant applied on top of the config.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Trains (or loads) and evaluates one or more variants over several seeds.
    Eval {
        /// Named ablation variant (repeatable); defaults to `fpn` and `resfpn`.
        #[arg(long)]
        variant: Vec<String>,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BOUNDARY_DISTANCES)]
        boundary_distances: Vec<usize>,
    },
    /// Parameter and FLOP comparison of ablation variants.
    Ablation {
        /// Comma-separated variant names, baseline first.
        #[arg(long, value_delimiter = ',', default_values_t = VARIANT_NAMES.map(String::from))]
        variants: Vec<String>,
    },
}

/// Everything a command needs after config parsing.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pyramid: PyramidConfig,
    pub task: TaskParams,
    pub steps: usize,
    pub lr: f64,
    pub eval_samples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Keys besides the pyramid keys accepted in config files and overrides.
pub const RUN_KEYS: [&str; 8] = [
    "height",
    "width",
    "n_objects",
    "d_max",
    "batch",
    "steps",
    "lr",
    "eval_samples",
];

impl RunConfig {
    pub fn defaults(output_dir: PathBuf) -> Self {
        let train = TrainConfig::default();
        RunConfig {
            pyramid: PyramidConfig::default(),
            task: train.task,
            steps: train.steps,
            lr: train.lr,
            eval_samples: 8,
            seed: 0,
            output_dir,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.pyramid.set(key, value)? {
            if key == "seed" {
                self.seed = self.pyramid.seed;
            }
            return Ok(());
        }
        match key {
            "height" => self.task.height = parse_num(key, value)?,
            "width" => self.task.width = parse_num(key, value)?,
            "n_objects" => self.task.n_objects = parse_num(key, value)?,
            "d_max" => self.task.max_disp = parse_num(key, value)?,
            "batch" => self.task.batch = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "eval_samples" => self.eval_samples = parse_num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Config file, then `--set` overrides, then `--seed`.
    pub fn load(common: &CommonArgs) -> Result<Self> {
        let mut cfg = RunConfig::defaults(common.out.clone());
        if let Some(path) = &common.config {
            let text =
                fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
            for (key, value) in parse_key_values(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for item in &common.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "override must be key=value"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        cfg.pyramid.seed = cfg.seed;
        cfg.pyramid.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            lr: self.lr,
            seed,
            task: self.task.clone(),
        }
    }
}

/// Failure of a check, as opposed to a usage or config error.
#[derive(Debug)]
enum Outcome {
    Ok,
    CheckFailed,
}

/// Parses `args` and runs the command. Exit codes: 0 success, 1 failed
/// check or runtime failure, 2 usage or config error.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::InvalidShape(_) => 2,
                _ => 1,
            })
        }
    }
}

fn input_shape(cfg: &RunConfig, height: Option<usize>, width: Option<usize>) -> Result<Shape> {
    let r = reference_input();
    Shape::new(
        1,
        cfg.pyramid.encoder_depths[0],
        height.unwrap_or(r.h),
        width.unwrap_or(r.w),
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = RunConfig::load(&cli.common)?;
    match &cli.command {
        Command::Summary { height, width } => {
            let net = build_resfpn(&cfg.pyramid)?;
            let summary = summarize(&net, input_shape(&cfg, *height, *width)?)?;
            print!("{}", summary.to_table());
            let path = write(&cfg.output_dir, "summary.csv", &summary.to_csv())?;
            println!("wrote {}", path.display());
        }
        Command::Count { height, width } => {
            let net = build_resfpn(&cfg.pyramid)?;
            let summary = summarize(&net, input_shape(&cfg, *height, *width)?)?;
            println!("input {}", summary.input);
            println!("params {}", summary.total_params);
            println!("flops {}", summary.total_flops);
        }
        Command::Gradcheck { tol, op } => {
            if tol.is_nan() || *tol < 0.0 {
                return Err(Error::config("tol", "tolerance must be >= 0"));
            }
            let results = run_suite(&cfg.pyramid, *tol, op.as_deref(), cfg.seed)?;
            for r in &results {
                println!(
                    "{:<16} {:>4} points  max rel err {:.3e}  tol {:.0e}  {}",
                    r.name,
                    r.points,
                    r.max_rel_error,
                    r.tolerance,
                    if r.passed() { "pass" } else { "FAIL" }
                );
            }
            if results.iter().any(|r| !r.passed()) {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Train { variant } => {
            let variant = variant.as_deref().unwrap_or("resfpn");
            let net = build_resfpn(&cfg.pyramid.variant(variant)?)?;
            let report = train(&net, &cfg.train_config(cfg.seed))?;
            let stem = run_stem(variant, cfg.seed);
            write(&cfg.output_dir, &format!("loss_{stem}.csv"), &report.loss_csv())?;
            report
                .params
                .save_dir(cfg.output_dir.join(format!("checkpoint_{stem}")))?;
            println!(
                "{variant} seed {}: loss {:.4} -> {:.4} over {} steps",
                cfg.seed,
                report.losses[0],
                report.losses[report.losses.len() - 1],
                report.losses.len()
            );
        }
        Command::Eval {
            variant,
            runs,
            boundary_distances,
        } => {
            let variants: Vec<String> = if variant.is_empty() {
                vec!["fpn".into(), "resfpn".into()]
            } else {
                variant.clone()
            };
            if *runs == 0 {
                return Err(Error::config("runs", "need at least one run"));
            }
            let mut distances = boundary_distances.clone();
            distances.sort_unstable();
            distances.dedup();
            let rows = eval_matrix(&cfg, &variants, *runs, &distances)?;
            let csv = metrics_csv(&rows, &distances);
            let path = write(&cfg.output_dir, "metrics.csv", &csv)?;
            print_eval(&cfg, &rows, &variants)?;
            println!("wrote {}", path.display());
        }
        Command::Ablation { variants } => {
            if variants.len() < 2 {
                return Err(Error::config("variants", "need at least two variants, baseline first"));
            }
            let configs = variants
                .iter()
                .map(|v| Ok((v.clone(), cfg.pyramid.variant(v)?)))
                .collect::<Result<Vec<_>>>()?;
            let cmp = compare_variants(&configs, reference_input())?;
            print!("{}", cmp.to_table());
            for m in cmp.reference_mismatches() {
                println!(
                    "note: {} parameter delta {} differs from the reference {:.0}",
                    m.variant, m.computed_delta, m.reference_delta
                );
            }
            let path = write(&cfg.output_dir, "ablation.csv", &cmp.to_csv())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(Outcome::Ok)
}

fn run_stem(variant: &str, seed: u64) -> String {
    format!("{variant}_seed{seed}")
}

/// One evaluated (variant, seed) run.
#[derive(Clone, Debug)]
pub struct EvalRow {
    pub variant: String,
    pub seed: u64,
    pub metrics: MetricsReport,
}

fn eval_matrix(cfg: &RunConfig, variants: &[String], runs: u64, distances: &[usize]) -> Result<Vec<EvalRow>> {
    let jobs: Vec<(String, u64)> = variants
        .iter()
        .flat_map(|v| (0..runs).map(move |r| (v.clone(), cfg.seed + r)))
        .collect();
    jobs.par_iter()
        .map(|(variant, seed)| {
            let net = build_resfpn(&cfg.pyramid.variant(variant)?)?;
            let checkpoint = cfg.output_dir.join(format!("checkpoint_{}", run_stem(variant, *seed)));
            let params = if checkpoint.is_dir() {
                let mut p: ParamStore<f32> = net.init_params_with_seed(*seed)?;
                p.load_dir(&checkpoint)?;
                p
            } else {
                train(&net, &cfg.train_config(*seed))?.params
            };
            let eval = make_samples(&cfg.task, *seed, Split::Eval, 0, cfg.eval_samples)?;
            let metrics = evaluate(&net, &params, &eval, cfg.task.max_disp, distances)?;
            Ok(EvalRow {
                variant: variant.clone(),
                seed: *seed,
                metrics,
            })
        })
        .collect()
}

pub fn metrics_csv(rows: &[EvalRow], distances: &[usize]) -> String {
    let mut out = String::from("variant,seed,epe,outlier_rate");
    for d in distances {
        out.push_str(&format!(",epe_b{d}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}",
            r.variant, r.seed, r.metrics.epe, r.metrics.outlier_rate
        ));
        for d in distances {
            out.push(',');
            if let Some(e) = r.metrics.bucket(*d).and_then(|b| b.epe) {
                out.push_str(&e.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn print_eval(cfg: &RunConfig, rows: &[EvalRow], variants: &[String]) -> Result<()> {
    for r in rows {
        println!(
            "{:<16} seed {:<4} EPE {:.4}  >3px {:.2}%",
            r.variant,
            r.seed,
            r.metrics.epe,
            100.0 * r.metrics.outlier_rate
        );
    }
    let medians: Vec<String> = variants
        .iter()
        .map(|v| {
            let mut epes: Vec<f64> = rows.iter().filter(|r| &r.variant == v).map(|r| r.metrics.epe).collect();
            format!("{v} {:.4}", median(&mut epes).unwrap_or(f64::NAN))
        })
        .collect();
    println!("median EPE  {}", medians.join("  |  "));
    let eval = make_samples(&cfg.task, cfg.seed, Split::Eval, 0, cfg.eval_samples)?;
    let (c, epe) = best_constant_epe(&eval)?;
    println!("best constant disparity {c} (seed {}): EPE {epe:.4}", cfg.seed);
    Ok(())
}
