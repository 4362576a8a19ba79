//! Disparity training and evaluation on random-dot stereograms.
//!
//! Left and right images of a batch run through the pyramid as one stacked
//! batch (shared weights). The finest decoder map feeds the soft-argmin
//! head; its prediction is bilinearly up-sampled to full resolution and
//! multiplied by the same factor before the loss.

use crate::error::{Error, Result};
use crate::harness::metrics::{evaluate_predictions, MetricsReport};
use crate::harness::stereo::{check_sample_params, generate_sample, MatchSample};
use crate::pyramid::params::mix_seed;
use crate::pyramid::{ParamStore, PyramidNet};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

/// Synthetic task settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskParams {
    pub height: usize,
    pub width: usize,
    pub n_objects: usize,
    pub max_disp: usize,
    pub batch: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            height: 64,
            width: 128,
            n_objects: 3,
            max_disp: 24,
            batch: 2,
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch", "batch must be >= 1"));
        }
        check_sample_params(self.height, self.width, self.n_objects, self.max_disp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub task: TaskParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            lr: 1e-3,
            seed: 0,
            task: TaskParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Seed of sample `index` of a split; the two splits never share a seed.
pub fn sample_seed(run_seed: u64, split: Split, index: u64) -> u64 {
    let stream = match split {
        Split::Train => 1,
        Split::Eval => 2,
    };
    mix_seed(mix_seed(run_seed, stream), index) & !(1 << 63) | ((stream - 1) << 63)
}

pub fn make_samples(task: &TaskParams, seed: u64, split: Split, start: u64, count: usize) -> Result<Vec<MatchSample>> {
    task.validate()?;
    (0..count as u64)
        .map(|i| {
            generate_sample(
                task.height,
                task.width,
                task.n_objects,
                task.max_disp,
                sample_seed(seed, split, start + i),
            )
        })
        .collect()
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<f32>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = p.grad().map(<[f32]>::to_vec) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] as f64 / c1;
                let v_hat = v[j] as f64 / c2;
                *x -= (self.lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
            }
        }
    }
}

/// Stacks `(1,C,H,W)` tensors along the batch axis.
pub fn stack_batch(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = items
        .first()
        .ok_or_else(|| Error::Contract("nothing to stack".into()))?
        .shape();
    let mut data = Vec::with_capacity(first.numel() * items.len());
    for t in items {
        if t.shape() != first {
            return Err(Error::Contract(format!("cannot stack {} with {}", t.shape(), first)));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(
        Shape {
            n: first.n * items.len(),
            ..first
        },
        data,
    )
}

/// Records pyramid + head for `samples`; returns the full-resolution
/// disparity `(B,1,H,W)`.
pub fn record_prediction(
    tape: &mut Tape<f32>,
    net: &PyramidNet,
    params: &ParamStore<f32>,
    samples: &[&MatchSample],
    max_disp: usize,
) -> Result<Var> {
    let b = samples.len();
    let mut images: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.left).collect();
    images.extend(samples.iter().map(|s| &s.right));
    let input = tape.leaf(stack_batch(&images)?);
    let features = net.forward(tape, params, input)?;
    let finest = features
        .finest()
        .ok_or_else(|| Error::Contract("the network has no decoder output".into()))?;
    let fshape = tape.shape(finest);
    let full = tape.shape(input);
    if !full.h.is_multiple_of(fshape.h) || full.h / fshape.h != full.w / fshape.w {
        return Err(Error::Contract(format!(
            "finest features {fshape} are not an integer down-scaling of {full}"
        )));
    }
    let factor = full.h / fshape.h;
    let left = tape.slice_batch(finest, 0, b)?;
    let right = tape.slice_batch(finest, b, b)?;
    let coarse = tape.soft_argmin_disparity(left, right, max_disp.div_ceil(factor))?;
    let up = tape.bilinear_resize(coarse, full.h, full.w)?;
    tape.scale(up, factor as f32)
}

/// Smooth-L1 training loss of one batch, recorded on `tape`.
pub fn record_loss(
    tape: &mut Tape<f32>,
    net: &PyramidNet,
    params: &ParamStore<f32>,
    samples: &[&MatchSample],
    max_disp: usize,
) -> Result<Var> {
    let pred = record_prediction(tape, net, params, samples, max_disp)?;
    let target: Vec<f32> = samples.iter().flat_map(|s| s.gt_disparity.iter().copied()).collect();
    let mask: Vec<bool> = samples.iter().flat_map(|s| s.valid_mask.iter().copied()).collect();
    tape.smooth_l1(pred, target, mask)
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: ParamStore<f32>,
    /// Loss of each step, before that step's update.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }
}

/// Trains from the initialization given by `cfg.seed`.
pub fn train(net: &PyramidNet, cfg: &TrainConfig) -> Result<TrainReport> {
    let params = net.init_params_with_seed(cfg.seed)?;
    train_from(net, params, cfg)
}

pub fn train_from(net: &PyramidNet, mut params: ParamStore<f32>, cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.steps == 0 {
        return Err(Error::config("steps", "steps must be >= 1"));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::config("lr", "learning rate must be finite and >= 0"));
    }
    cfg.task.validate()?;
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    let batch = cfg.task.batch;
    for step in 0..cfg.steps {
        let samples = make_samples(&cfg.task, cfg.seed, Split::Train, (step * batch) as u64, batch)?;
        let refs: Vec<&MatchSample> = samples.iter().collect();
        let mut tape = Tape::new();
        let loss = record_loss(&mut tape, net, &params, &refs, cfg.task.max_disp)?;
        let value = tape.value(loss).item()? as f64;
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: step + 1,
                loss: value,
            });
        }
        losses.push(value);
        tape.backward(loss)?;
        params.zero_grad();
        params.absorb_grads(&tape);
        adam.step(&mut params);
    }
    Ok(TrainReport { params, losses })
}

/// Full-resolution disparity maps, one per sample.
pub fn predict(
    net: &PyramidNet,
    params: &ParamStore<f32>,
    samples: &[MatchSample],
    max_disp: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(4) {
        let refs: Vec<&MatchSample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let pred = record_prediction(&mut tape, net, params, &refs, max_disp)?;
        let plane = tape.shape(pred).plane();
        out.extend(tape.value(pred).data().chunks(plane).map(<[f32]>::to_vec));
    }
    Ok(out)
}

pub fn evaluate(
    net: &PyramidNet,
    params: &ParamStore<f32>,
    samples: &[MatchSample],
    max_disp: usize,
    boundary_distances: &[usize],
) -> Result<MetricsReport> {
    let preds = predict(net, params, samples, max_disp)?;
    evaluate_predictions(&preds, samples, boundary_distances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::{build_resfpn, PyramidConfig};

    #[test]
    fn splits_are_disjoint() {
        for i in 0..64 {
            for j in 0..64 {
                assert_ne!(sample_seed(3, Split::Train, i), sample_seed(3, Split::Eval, j));
            }
        }
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let net = build_resfpn(&PyramidConfig::default()).unwrap();
        let cfg = TrainConfig {
            steps: 2,
            lr: 0.0,
            ..Default::default()
        };
        let init = net.init_params_with_seed::<f32>(cfg.seed).unwrap();
        let report = train(&net, &cfg).unwrap();
        for ((_, a), (_, b)) in init.iter().zip(report.params.iter()) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(report.losses.len(), 2);
    }

    #[test]
    fn zero_steps_rejected() {
        let net = build_resfpn(&PyramidConfig::default()).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(matches!(train(&net, &cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let spec = crate::pyramid::ParamSpec {
            name: "w".into(),
            shape: Shape::new(1, 1, 1, 3).unwrap(),
            fan_in: Some(3),
        };
        let mut store = ParamStore::<f32>::init(&[spec], 0).unwrap();
        let before = store.get(0).data().to_vec();
        store.get_mut(0).accumulate_grad(&[2.0, -0.5, 0.0]);
        Adam::new(0.01).step(&mut store);
        let after = store.get(0).data();
        assert!((before[0] - after[0] - 0.01).abs() < 1e-6);
        assert!((after[1] - before[1] - 0.01).abs() < 1e-6);
        assert_eq!(after[2], before[2]);
    }
}
