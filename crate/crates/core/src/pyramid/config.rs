use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ops::LEAKY_SLOPE;

/// How a merge point fuses its inputs before the 3x3 refinement conv.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Merge {
    Addition,
    Concatenation,
}

/// How a higher-resolution encoder map is aligned to a merge target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reshape {
    Conv1x1ThenMaxPool,
    StridedConv3x3,
    Conv1x1ThenBilinear,
    MaxPoolThenConv1x1,
    /// No depth projection; only valid with concatenation.
    MaxPoolOnly,
}

impl Merge {
    pub const ALL: [Merge; 2] = [Merge::Addition, Merge::Concatenation];

    pub fn key(self) -> &'static str {
        match self {
            Merge::Addition => "addition",
            Merge::Concatenation => "concatenation",
        }
    }
}

impl Reshape {
    pub const ALL: [Reshape; 5] = [
        Reshape::Conv1x1ThenMaxPool,
        Reshape::StridedConv3x3,
        Reshape::Conv1x1ThenBilinear,
        Reshape::MaxPoolThenConv1x1,
        Reshape::MaxPoolOnly,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Reshape::Conv1x1ThenMaxPool => "conv1x1_then_maxpool",
            Reshape::StridedConv3x3 => "strided_conv3x3",
            Reshape::Conv1x1ThenBilinear => "conv1x1_then_bilinear",
            Reshape::MaxPoolThenConv1x1 => "maxpool_then_conv1x1",
            Reshape::MaxPoolOnly => "maxpool_only",
        }
    }

    pub fn projects_depth(self) -> bool {
        self != Reshape::MaxPoolOnly
    }
}

impl fmt::Display for Merge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl fmt::Display for Reshape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Merge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Merge::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::config("merge", format!("unknown merge strategy `{s}`")))
    }
}

impl FromStr for Reshape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Reshape::ALL
            .into_iter()
            .find(|r| r.key() == s)
            .ok_or_else(|| Error::config("reshape", format!("unknown reshape strategy `{s}`")))
    }
}

/// Hyper-parameters of one pyramid instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidConfig {
    /// Encoder down-sampling blocks (`l_d`).
    pub levels_down: usize,
    /// Decoder up-sampling blocks (`l_u`); zero means encoder only.
    pub levels_up: usize,
    /// Sub-sampling factor `s` of every block.
    pub subsampling: usize,
    /// Stride of the first encoder block; 1 keeps level 1 at full resolution.
    pub first_stride: usize,
    /// Additional higher-resolution skips per merge point (`h`).
    pub extra_skips: usize,
    /// Depth per level, starting with the image channels (level 0).
    pub encoder_depths: Vec<usize>,
    pub merge: Merge,
    pub reshape: Reshape,
    pub leaky_slope: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            levels_down: 6,
            levels_up: 4,
            subsampling: 2,
            first_stride: 2,
            extra_skips: 2,
            encoder_depths: vec![3, 16, 32, 64, 96, 128, 196],
            merge: Merge::Addition,
            reshape: Reshape::Conv1x1ThenMaxPool,
            leaky_slope: LEAKY_SLOPE,
            seed: 0,
        }
    }
}

/// Keys accepted by [`PyramidConfig::set`].
pub const PYRAMID_KEYS: [&str; 10] = [
    "l_d",
    "l_u",
    "s",
    "first_stride",
    "h",
    "encoder_depths",
    "merge",
    "reshape",
    "leaky_slope",
    "seed",
];

pub(crate) fn parse_num<N: FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

impl PyramidConfig {
    /// Plain FPN: lateral connections only.
    pub fn fpn() -> Self {
        PyramidConfig {
            extra_skips: 0,
            ..Default::default()
        }
    }

    /// Encoder hyper-parameters matching the LiteFlowNet feature module:
    /// a full-resolution first level, five down-samplings to 1/32, decoding
    /// up to 1/2 resolution.
    pub fn liteflownet() -> Self {
        PyramidConfig {
            levels_down: 6,
            levels_up: 4,
            first_stride: 1,
            encoder_depths: vec![3, 32, 32, 64, 96, 128, 192],
            ..Default::default()
        }
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys that are
    /// not pyramid keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let value = value.trim();
        match key {
            "l_d" => self.levels_down = parse_num(key, value)?,
            "l_u" => self.levels_up = parse_num(key, value)?,
            "s" => self.subsampling = parse_num(key, value)?,
            "first_stride" => self.first_stride = parse_num(key, value)?,
            "h" => self.extra_skips = parse_num(key, value)?,
            "encoder_depths" => {
                self.encoder_depths = value
                    .split(',')
                    .map(|d| parse_num::<usize>(key, d))
                    .collect::<Result<_>>()?
            }
            "merge" => self.merge = value.parse()?,
            "reshape" => self.reshape = value.parse()?,
            "leaky_slope" => self.leaky_slope = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses flat `key=value` text; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PyramidConfig::default();
        for (key, value) in parse_key_values(text)? {
            if !config.set(&key, &value)? {
                return Err(Error::config(key, "unknown key"));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_key_values(&self) -> String {
        let depths: Vec<String> = self.encoder_depths.iter().map(|d| d.to_string()).collect();
        format!(
            "l_d={}\nl_u={}\ns={}\nfirst_stride={}\nh={}\nencoder_depths={}\nmerge={}\nreshape={}\nleaky_slope={}\nseed={}\n",
            self.levels_down,
            self.levels_up,
            self.subsampling,
            self.first_stride,
            self.extra_skips,
            depths.join(","),
            self.merge,
            self.reshape,
            self.leaky_slope,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels_down == 0 {
            return Err(Error::config("l_d", "need at least one down-sampling block"));
        }
        if self.levels_up > self.levels_down {
            return Err(Error::config(
                "l_u",
                format!("l_u = {} exceeds l_d = {}", self.levels_up, self.levels_down),
            ));
        }
        if self.subsampling < 2 {
            return Err(Error::config("s", "sub-sampling factor must be >= 2"));
        }
        if self.first_stride == 0 {
            return Err(Error::config("first_stride", "stride must be >= 1"));
        }
        if self.encoder_depths.len() != self.levels_down + 1 {
            return Err(Error::config(
                "encoder_depths",
                format!(
                    "need l_d + 1 = {} depths (image channels first), got {}",
                    self.levels_down + 1,
                    self.encoder_depths.len()
                ),
            ));
        }
        if self.encoder_depths.contains(&0) {
            return Err(Error::config("encoder_depths", "depths must be >= 1"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope", "slope must lie in (0, 1)"));
        }
        if self.reshape == Reshape::MaxPoolOnly && self.merge == Merge::Addition {
            return Err(Error::config(
                "reshape",
                "maxpool_only has no depth projection and requires merge=concatenation",
            ));
        }
        Ok(())
    }

    /// Stride of the block producing encoder level `level` (1-based).
    pub fn stride_of(&self, level: usize) -> usize {
        if level == 1 {
            self.first_stride
        } else {
            self.subsampling
        }
    }

    /// Resolution divisor of encoder level `level` relative to the input.
    pub fn scale_of(&self, level: usize) -> usize {
        (1..=level).map(|l| self.stride_of(l)).product()
    }

    /// Input height and width must be multiples of this.
    pub fn input_multiple(&self) -> usize {
        self.scale_of(self.levels_down)
    }
}

/// Names of the eight ablation variants, baseline first.
pub const VARIANT_NAMES: [&str; 8] = [
    "fpn",
    "h1",
    "concat-maxpool",
    "concat-1x1",
    "strided",
    "bilinear",
    "maxpool-1x1",
    "resfpn",
];

impl PyramidConfig {
    /// Applies the skip settings of a named ablation variant on top of `self`.
    pub fn variant(&self, name: &str) -> Result<Self> {
        let (h, reshape, merge) = match name {
            "fpn" => (0, Reshape::Conv1x1ThenMaxPool, Merge::Addition),
            "h1" => (1, Reshape::Conv1x1ThenMaxPool, Merge::Addition),
            "concat-maxpool" => (2, Reshape::MaxPoolOnly, Merge::Concatenation),
            "concat-1x1" => (2, Reshape::Conv1x1ThenMaxPool, Merge::Concatenation),
            "strided" => (2, Reshape::StridedConv3x3, Merge::Addition),
            "bilinear" => (2, Reshape::Conv1x1ThenBilinear, Merge::Addition),
            "maxpool-1x1" => (2, Reshape::MaxPoolThenConv1x1, Merge::Addition),
            "resfpn" => (2, Reshape::Conv1x1ThenMaxPool, Merge::Addition),
            _ => {
                return Err(Error::config(
                    "variant",
                    format!("unknown variant `{name}`, expected one of {}", VARIANT_NAMES.join(", ")),
                ))
            }
        };
        Ok(PyramidConfig {
            extra_skips: h,
            reshape,
            merge,
            ..self.clone()
        })
    }
}

/// Parses `key=value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line.to_string(), format!("line {}: expected key=value", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
