//! Construction of FPN / ResFPN layer graphs from a [`PyramidConfig`].
//!
//! Layer names follow the usual pyramid table: `enc-i-j` for the two convs
//! of encoder level `i`, `bottleneck`, `skip-a-b` for a reshaped skip from
//! encoder level `a` into the merge point at level `b`, `dec-i-1` for the
//! up-sampled map and `dec-i-2` for the refined merge output.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::{ConvSpec, PoolSpec};
use crate::pyramid::config::{Merge, PyramidConfig, Reshape};
use crate::pyramid::params::{ParamSpec, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Element, Shape};

/// Where a layer reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

/// One primitive inside a layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Conv {
        spec: ConvSpec,
        in_channels: usize,
        weight: usize,
        bias: usize,
        activate: bool,
    },
    /// Transposed convolution, always followed by the activation.
    UpConv {
        spec: ConvSpec,
        in_channels: usize,
        weight: usize,
        bias: usize,
    },
    MaxPool(PoolSpec),
    /// Bilinear down-scaling by an integer factor.
    Bilinear {
        factor: usize,
    },
}

impl Step {
    pub fn describe(&self) -> String {
        match self {
            Step::Conv { spec, .. } => spec.describe(),
            Step::UpConv { spec, .. } => spec.describe_transposed(),
            Step::MaxPool(p) => p.to_string(),
            Step::Bilinear { factor } => format!("Bilinear(1/{factor})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// Single input run through a sequence of steps.
    Chain(Vec<Step>),
    /// Several inputs fused, then refined by a 3x3 conv (a [`Step::Conv`]).
    Merge { merge: Merge, refine: Step },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Encoder { level: usize, index: usize },
    Bottleneck,
    Skip { from: usize, to: usize },
    Upsample { level: usize },
    MergeOutput { level: usize },
    Projection { level: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub role: Role,
    pub inputs: Vec<Source>,
    pub kind: LayerKind,
}

impl Layer {
    pub fn describe(&self) -> String {
        match &self.kind {
            LayerKind::Chain(steps) => steps.iter().map(Step::describe).collect::<Vec<_>>().join(" "),
            LayerKind::Merge { merge, refine } => match merge {
                Merge::Addition => refine.describe(),
                Merge::Concatenation => format!("Concat {}", refine.describe()),
            },
        }
    }

    /// Convolution-like steps owned by this layer.
    pub fn steps(&self) -> Vec<&Step> {
        match &self.kind {
            LayerKind::Chain(steps) => steps.iter().collect(),
            LayerKind::Merge { refine, .. } => vec![refine],
        }
    }
}

/// An immutable pyramid graph description plus its parameter registry.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidNet {
    config: PyramidConfig,
    layers: Vec<Layer>,
    params: Vec<ParamSpec>,
}

/// Outputs of one forward pass, one [`Var`] per named layer.
#[derive(Clone, Debug)]
pub struct Features {
    names: Vec<String>,
    vars: Vec<Var>,
    decoder: BTreeMap<usize, Var>,
    projections: BTreeMap<usize, Var>,
}

impl Features {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| self.vars[i])
    }

    /// Refined decoder map `dec-<level>-2`.
    pub fn decoder(&self, level: usize) -> Option<Var> {
        self.decoder.get(&level).copied()
    }

    /// Highest-resolution decoder output.
    pub fn finest(&self) -> Option<Var> {
        self.decoder.values().next().copied()
    }

    pub fn projection(&self, level: usize) -> Option<Var> {
        self.projections.get(&level).copied()
    }

    pub fn decoder_levels(&self) -> Vec<usize> {
        self.decoder.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.names.iter().map(String::as_str).zip(self.vars.iter().copied())
    }
}

/// Transposed conv that up-samples exactly by `stride`.
fn upconv_spec(out_channels: usize, stride: usize) -> Result<ConvSpec> {
    match stride {
        1 => ConvSpec::new(out_channels, 3, 1, 1, 1),
        s if s % 2 == 0 => ConvSpec::new(out_channels, 2 * s, s, 1, s / 2),
        s => ConvSpec::new(out_channels, s, s, 1, 0),
    }
}

struct Builder {
    layers: Vec<Layer>,
    params: Vec<ParamSpec>,
}

impl Builder {
    fn register(&mut self, name: &str, spec: ConvSpec, in_channels: usize, transposed: bool) -> (usize, usize) {
        let k = spec.kernel;
        let (shape, fan_in) = if transposed {
            let fan = (in_channels * k * k / (spec.stride * spec.stride)).max(1);
            (
                Shape {
                    n: in_channels,
                    c: spec.out_channels,
                    h: k,
                    w: k,
                },
                fan,
            )
        } else {
            (
                Shape {
                    n: spec.out_channels,
                    c: in_channels,
                    h: k,
                    w: k,
                },
                in_channels * k * k,
            )
        };
        let weight = self.params.len();
        self.params.push(ParamSpec {
            name: format!("{name}.weight"),
            shape,
            fan_in: Some(fan_in),
        });
        self.params.push(ParamSpec {
            name: format!("{name}.bias"),
            shape: Shape {
                n: 1,
                c: spec.out_channels,
                h: 1,
                w: 1,
            },
            fan_in: None,
        });
        (weight, weight + 1)
    }

    fn conv(&mut self, name: &str, spec: ConvSpec, in_channels: usize, activate: bool) -> Step {
        let (weight, bias) = self.register(name, spec, in_channels, false);
        Step::Conv {
            spec,
            in_channels,
            weight,
            bias,
            activate,
        }
    }

    fn upconv(&mut self, name: &str, spec: ConvSpec, in_channels: usize) -> Step {
        let (weight, bias) = self.register(name, spec, in_channels, true);
        Step::UpConv {
            spec,
            in_channels,
            weight,
            bias,
        }
    }

    fn push(&mut self, name: String, role: Role, inputs: Vec<Source>, kind: LayerKind) -> Source {
        self.layers.push(Layer {
            name,
            role,
            inputs,
            kind,
        });
        Source::Layer(self.layers.len() - 1)
    }
}

/// Steps aligning a skip of depth `source_depth` to a merge target of depth
/// `target_depth` that is `factor` times coarser.
fn reshape_steps(
    b: &mut Builder,
    name: &str,
    strategy: Reshape,
    source_depth: usize,
    target_depth: usize,
    factor: usize,
) -> Result<Vec<Step>> {
    let pool = || PoolSpec::square(factor);
    let pointwise = ConvSpec::same(target_depth, 1, 1)?;
    Ok(match strategy {
        Reshape::Conv1x1ThenMaxPool => vec![b.conv(name, pointwise, source_depth, true), Step::MaxPool(pool()?)],
        Reshape::StridedConv3x3 => {
            vec![b.conv(name, ConvSpec::new(target_depth, 3, factor, 1, 1)?, source_depth, true)]
        }
        Reshape::Conv1x1ThenBilinear => vec![b.conv(name, pointwise, source_depth, true), Step::Bilinear { factor }],
        Reshape::MaxPoolThenConv1x1 => vec![Step::MaxPool(pool()?), b.conv(name, pointwise, source_depth, true)],
        Reshape::MaxPoolOnly => vec![Step::MaxPool(pool()?)],
    })
}

/// Builds the network described by `config`.
pub fn build_resfpn(config: &PyramidConfig) -> Result<PyramidNet> {
    config.validate()?;
    let depths = &config.encoder_depths;
    let top = config.levels_down;
    let mut b = Builder {
        layers: Vec::new(),
        params: Vec::new(),
    };

    // Encoder: level i produces enc-i-1 (strided) and enc-i-2.
    let mut encoder = vec![Source::Input];
    for level in 1..=top {
        let mut prev = encoder[level - 1];
        let mut in_ch = depths[level - 1];
        for index in 1..=2 {
            let name = format!("enc-{level}-{index}");
            let stride = if index == 1 { config.stride_of(level) } else { 1 };
            let step = b.conv(&name, ConvSpec::same(depths[level], 3, stride)?, in_ch, true);
            prev = b.push(
                name,
                Role::Encoder { level, index },
                vec![prev],
                LayerKind::Chain(vec![step]),
            );
            in_ch = depths[level];
        }
        encoder.push(prev);
    }

    if config.levels_up == 0 {
        return Ok(PyramidNet {
            config: config.clone(),
            layers: b.layers,
            params: b.params,
        });
    }

    let mut previous = None;
    for target in (top - config.levels_up..=top).rev() {
        let depth = depths[target];
        let mut inputs = Vec::new();
        if target == top {
            let step = b.conv("bottleneck", ConvSpec::same(depth, 1, 1)?, depth, true);
            inputs.push(b.push(
                "bottleneck".into(),
                Role::Bottleneck,
                vec![encoder[top]],
                LayerKind::Chain(vec![step]),
            ));
        } else {
            let name = format!("dec-{target}-1");
            let spec = upconv_spec(depth, config.stride_of(target + 1))?;
            let step = b.upconv(&name, spec, depths[target + 1]);
            inputs.push(b.push(
                name,
                Role::Upsample { level: target },
                vec![previous.expect("coarser merge point exists")],
                LayerKind::Chain(vec![step]),
            ));
            inputs.push(encoder[target]);
        }
        for gap in 1..=config.extra_skips.min(target) {
            let from = target - gap;
            let name = format!("skip-{from}-{target}");
            let factor = config.scale_of(target) / config.scale_of(from);
            let steps = reshape_steps(&mut b, &name, config.reshape, depths[from], depth, factor)?;
            inputs.push(b.push(
                name,
                Role::Skip { from, to: target },
                vec![encoder[from]],
                LayerKind::Chain(steps),
            ));
        }
        let refine_in = match config.merge {
            Merge::Addition => depth,
            Merge::Concatenation => inputs
                .iter()
                .map(|&s| match s {
                    Source::Input => depths[0],
                    Source::Layer(i) => layer_depth(&b.layers[i], depths),
                })
                .sum(),
        };
        let name = format!("dec-{target}-2");
        let refine = b.conv(&name, ConvSpec::same(depth, 3, 1)?, refine_in, true);
        previous = Some(b.push(
            name,
            Role::MergeOutput { level: target },
            inputs,
            LayerKind::Merge {
                merge: config.merge,
                refine,
            },
        ));
    }

    Ok(PyramidNet {
        config: config.clone(),
        layers: b.layers,
        params: b.params,
    })
}

/// Output depth of a layer, from its last depth-changing step.
fn layer_depth(layer: &Layer, depths: &[usize]) -> usize {
    let from_step = |s: &Step| match s {
        Step::Conv { spec, .. } | Step::UpConv { spec, .. } => Some(spec.out_channels),
        _ => None,
    };
    match &layer.kind {
        LayerKind::Chain(steps) => steps
            .iter()
            .rev()
            .find_map(from_step)
            .unwrap_or_else(|| match layer.role {
                Role::Skip { from, .. } => depths[from],
                _ => unreachable!("only skips are parameter free"),
            }),
        LayerKind::Merge { refine, .. } => from_step(refine).expect("refine is a conv"),
    }
}

/// The feature module matching LiteFlowNet's encoder hyper-parameters.
pub fn build_liteflownet_variant() -> Result<PyramidNet> {
    build_resfpn(&PyramidConfig::liteflownet())
}

/// Appends a 1x1 conv adapter (no activation) on the decoder output of `level`.
pub fn attach_projection(net: &PyramidNet, level: usize, out_depth: usize) -> Result<PyramidNet> {
    let source = net
        .layers
        .iter()
        .position(|l| l.role == Role::MergeOutput { level })
        .ok_or_else(|| Error::config("level", format!("level {level} has no decoder output")))?;
    let name = format!("proj-{level}");
    if net.layers.iter().any(|l| l.name == name) {
        return Err(Error::config(
            "level",
            format!("level {level} already has a projection"),
        ));
    }
    let mut b = Builder {
        layers: net.layers.clone(),
        params: net.params.clone(),
    };
    let in_ch = net.config.encoder_depths[level];
    let step = b.conv(&name, ConvSpec::same(out_depth, 1, 1)?, in_ch, false);
    b.push(
        name,
        Role::Projection { level },
        vec![Source::Layer(source)],
        LayerKind::Chain(vec![step]),
    );
    Ok(PyramidNet {
        config: net.config.clone(),
        layers: b.layers,
        params: b.params,
    })
}

fn step_shape(step: &Step, input: Shape) -> Result<Shape> {
    match step {
        Step::Conv { spec, in_channels, .. } => {
            if input.c != *in_channels {
                return Err(Error::Contract(format!(
                    "conv expects {in_channels} channels, got {input}"
                )));
            }
            spec.output_shape(input)
        }
        Step::UpConv { spec, in_channels, .. } => {
            if input.c != *in_channels {
                return Err(Error::Contract(format!(
                    "transposed conv expects {in_channels} channels, got {input}"
                )));
            }
            spec.transposed_output_shape(input)
        }
        Step::MaxPool(p) => p.output_shape(input),
        Step::Bilinear { factor } => {
            if !input.h.is_multiple_of(*factor) || !input.w.is_multiple_of(*factor) {
                return Err(Error::InvalidShape(format!(
                    "bilinear 1/{factor} needs divisible dims, got {input}"
                )));
            }
            Shape::new(input.n, input.c, input.h / factor, input.w / factor)
        }
    }
}

/// Checks merge operands and returns the fused (pre-refinement) shape.
pub fn merge_shape(merge: Merge, inputs: &[Shape]) -> Result<Shape> {
    let first = *inputs
        .first()
        .ok_or_else(|| Error::Contract("merge needs at least one input".into()))?;
    match merge {
        Merge::Addition => {
            if let Some(bad) = inputs.iter().find(|&&s| s != first) {
                return Err(Error::MergeShape(format!("addition merge of {first} and {bad}")));
            }
            Ok(first)
        }
        Merge::Concatenation => {
            if let Some(bad) = inputs.iter().find(|s| (s.n, s.h, s.w) != (first.n, first.h, first.w)) {
                return Err(Error::MergeShape(format!("concatenation of {first} and {bad}")));
            }
            Ok(first.with_channels(inputs.iter().map(|s| s.c).sum()))
        }
    }
}

impl PyramidNet {
    pub fn config(&self) -> &PyramidConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    /// Number of scalar parameters declared by the graph.
    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|p| p.shape.numel() as u64).sum()
    }

    pub fn source_name(&self, s: Source) -> &str {
        match s {
            Source::Input => "input",
            Source::Layer(i) => &self.layers[i].name,
        }
    }

    /// Levels with a refined decoder output, finest first.
    pub fn decoder_levels(&self) -> Vec<usize> {
        let mut levels: Vec<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l.role {
                Role::MergeOutput { level } => Some(level),
                _ => None,
            })
            .collect();
        levels.sort_unstable();
        levels
    }

    pub fn finest_level(&self) -> Option<usize> {
        self.decoder_levels().first().copied()
    }

    pub fn init_params<T: Element>(&self) -> Result<ParamStore<T>> {
        ParamStore::init(&self.params, self.config.seed)
    }

    pub fn init_params_with_seed<T: Element>(&self, seed: u64) -> Result<ParamStore<T>> {
        ParamStore::init(&self.params, seed)
    }

    pub fn check_input(&self, input: Shape) -> Result<()> {
        let depth = self.config.encoder_depths[0];
        if input.c != depth {
            return Err(Error::Contract(format!(
                "input has {} channels, the pyramid expects {depth}",
                input.c
            )));
        }
        let m = self.config.input_multiple();
        if !input.h.is_multiple_of(m) || !input.w.is_multiple_of(m) {
            return Err(Error::InvalidShape(format!(
                "input {input}: height and width must be divisible by {m}"
            )));
        }
        Ok(())
    }

    /// Output shape of every layer for a given input shape.
    pub fn infer_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        self.check_input(input)?;
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        let lookup = |shapes: &[Shape], s: Source| match s {
            Source::Input => input,
            Source::Layer(i) => shapes[i],
        };
        for layer in &self.layers {
            let ins: Vec<Shape> = layer.inputs.iter().map(|&s| lookup(&shapes, s)).collect();
            let out = match &layer.kind {
                LayerKind::Chain(steps) => steps.iter().try_fold(ins[0], |shape, step| step_shape(step, shape))?,
                LayerKind::Merge { merge, refine } => step_shape(refine, merge_shape(*merge, &ins)?)?,
            };
            shapes.push(out);
        }
        Ok(shapes)
    }

    /// Records the whole pyramid on `tape` for the image batch `input`.
    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, params: &ParamStore<T>, input: Var) -> Result<Features> {
        self.check_input(tape.shape(input))?;
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "parameter store has {} tensors, the network declares {}",
                params.len(),
                self.params.len()
            )));
        }
        let slope = T::of(self.config.leaky_slope);
        let mut vars: Vec<Var> = Vec::with_capacity(self.layers.len());
        let mut decoder = BTreeMap::new();
        let mut projections = BTreeMap::new();
        for layer in &self.layers {
            let ins: Vec<Var> = layer
                .inputs
                .iter()
                .map(|&s| match s {
                    Source::Input => input,
                    Source::Layer(i) => vars[i],
                })
                .collect();
            let out = match &layer.kind {
                LayerKind::Chain(steps) => steps
                    .iter()
                    .try_fold(ins[0], |x, step| apply_step(tape, params, step, x, slope))?,
                LayerKind::Merge { merge, refine } => {
                    let fused = match merge {
                        Merge::Addition => tape.add_all(&ins)?,
                        Merge::Concatenation => tape.concat(&ins)?,
                    };
                    apply_step(tape, params, refine, fused, slope)?
                }
            };
            match layer.role {
                Role::MergeOutput { level } => {
                    decoder.insert(level, out);
                }
                Role::Projection { level } => {
                    projections.insert(level, out);
                }
                _ => {}
            }
            vars.push(out);
        }
        Ok(Features {
            names: self.layers.iter().map(|l| l.name.clone()).collect(),
            vars,
            decoder,
            projections,
        })
    }
}

fn apply_step<T: Element>(tape: &mut Tape<T>, params: &ParamStore<T>, step: &Step, x: Var, slope: T) -> Result<Var> {
    match step {
        Step::Conv {
            spec,
            weight,
            bias,
            activate,
            ..
        } => {
            let w = tape.param(*weight, params.get(*weight));
            let b = tape.param(*bias, params.get(*bias));
            let y = tape.conv2d(x, w, b, *spec)?;
            if *activate {
                tape.leaky_relu(y, slope)
            } else {
                Ok(y)
            }
        }
        Step::UpConv { spec, weight, bias, .. } => {
            let w = tape.param(*weight, params.get(*weight));
            let b = tape.param(*bias, params.get(*bias));
            let y = tape.conv_transpose2d(x, w, b, *spec)?;
            tape.leaky_relu(y, slope)
        }
        Step::MaxPool(p) => tape.max_pool2d(x, *p),
        Step::Bilinear { factor } => {
            let s = tape.shape(x);
            tape.bilinear_resize(x, s.h / factor, s.w / factor)
        }
    }
}
