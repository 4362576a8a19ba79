//! Parameter and FLOP accounting for pyramid networks.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops::spec::{activation_flops, addition_flops, bilinear_flops};
use crate::pyramid::builder::{merge_shape, LayerKind, PyramidNet, Step};
use crate::pyramid::{build_resfpn, Merge, PyramidConfig};
use crate::tensor::Shape;

/// Reference resolution of the comparison tables (KITTI-like, divisible by 64).
pub const REFERENCE_HEIGHT: usize = 384;
pub const REFERENCE_WIDTH: usize = 1280;

pub fn reference_input() -> Shape {
    Shape {
        n: 1,
        c: 3,
        h: REFERENCE_HEIGHT,
        w: REFERENCE_WIDTH,
    }
}

/// Reference totals in millions of parameters, per ablation variant name.
/// Absolute values include a prediction head; only differences are comparable.
pub const REFERENCE_PARAMS_M: [(&str, f64); 8] = [
    ("fpn", 8.05),
    ("h1", 8.09),
    ("concat-maxpool", 8.67),
    ("concat-1x1", 9.03),
    ("strided", 8.74),
    ("bilinear", 8.12),
    ("maxpool-1x1", 8.12),
    ("resfpn", 8.12),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerReport {
    pub name: String,
    /// Input layer names joined with `+`.
    pub input: String,
    pub layer: String,
    pub output_shape: Shape,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub input: Shape,
    pub rows: Vec<LayerReport>,
    pub total_params: u64,
    pub total_flops: u64,
}

fn step_cost(step: &Step, input: Shape) -> Result<(u64, u64, Shape)> {
    Ok(match step {
        Step::Conv {
            spec,
            in_channels,
            activate,
            ..
        } => {
            let out = spec.output_shape(input)?;
            let act = if *activate { activation_flops(out) } else { 0 };
            (spec.param_count(*in_channels), spec.flop_count(input)? + act, out)
        }
        Step::UpConv { spec, in_channels, .. } => {
            let out = spec.transposed_output_shape(input)?;
            (
                spec.param_count(*in_channels),
                spec.transposed_flop_count(input)? + activation_flops(out),
                out,
            )
        }
        Step::MaxPool(p) => (0, p.flop_count(input)?, p.output_shape(input)?),
        Step::Bilinear { factor } => {
            let out = Shape::new(input.n, input.c, input.h / factor, input.w / factor)?;
            (0, bilinear_flops(out), out)
        }
    })
}

/// One report per layer in construction order, plus totals.
pub fn summarize(net: &PyramidNet, input: Shape) -> Result<Summary> {
    let shapes = net.infer_shapes(input)?;
    let mut rows = Vec::with_capacity(shapes.len());
    for (layer, &output_shape) in net.layers().iter().zip(&shapes) {
        let ins: Vec<Shape> = layer
            .inputs
            .iter()
            .map(|&s| match s {
                crate::pyramid::Source::Input => input,
                crate::pyramid::Source::Layer(i) => shapes[i],
            })
            .collect();
        let (mut params, mut flops) = (0, 0);
        match &layer.kind {
            LayerKind::Chain(steps) => {
                let mut shape = ins[0];
                for step in steps {
                    let (p, f, out) = step_cost(step, shape)?;
                    params += p;
                    flops += f;
                    shape = out;
                }
            }
            LayerKind::Merge { merge, refine } => {
                let fused = merge_shape(*merge, &ins)?;
                if *merge == Merge::Addition {
                    flops += addition_flops(fused, ins.len());
                }
                let (p, f, _) = step_cost(refine, fused)?;
                params += p;
                flops += f;
            }
        }
        rows.push(LayerReport {
            name: layer.name.clone(),
            input: layer
                .inputs
                .iter()
                .map(|&s| net.source_name(s))
                .collect::<Vec<_>>()
                .join("+"),
            layer: layer.describe(),
            output_shape,
            params,
            flops,
        });
    }
    Ok(Summary {
        input,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_flops: rows.iter().map(|r| r.flops).sum(),
        rows,
    })
}

fn relative_dim(out: usize, input: usize, axis: char) -> String {
    if out == input {
        axis.to_string()
    } else if input.is_multiple_of(out) {
        format!("1/{} {axis}", input / out)
    } else {
        out.to_string()
    }
}

impl Summary {
    pub fn row(&self, name: &str) -> Option<&LayerReport> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Output shape in table notation, e.g. `1/4 H x 1/4 W x 32`.
    pub fn relative_shape(&self, shape: Shape) -> String {
        format!(
            "{} x {} x {}",
            relative_dim(shape.h, self.input.h, 'H'),
            relative_dim(shape.w, self.input.w, 'W'),
            shape.c
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,out_n,out_c,out_h,out_w,params,flops\n");
        for r in &self.rows {
            let s = r.output_shape;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.name, s.n, s.c, s.h, s.w, r.params, r.flops
            );
        }
        let _ = writeln!(out, "total,,,,,{},{}", self.total_params, self.total_flops);
        out
    }

    /// Human-readable table with Name, Input, Layer and Output Shape columns.
    pub fn to_table(&self) -> String {
        let header = ["Name", "Input", "Layer", "Output Shape", "Params", "FLOPs"];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.input.clone(),
                    r.layer.clone(),
                    self.relative_shape(r.output_shape),
                    r.params.to_string(),
                    r.flops.to_string(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!("input {}\n", self.input);
        let line = |cells: &[&str]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        out.push_str(&line(&header));
        out.push('\n');
        for row in &body {
            out.push_str(&line(&row.each_ref().map(String::as_str)));
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "total params {}  total FLOPs {}",
            self.total_params, self.total_flops
        );
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub variant: String,
    pub params: u64,
    pub flops: u64,
    pub delta_params: i64,
    pub delta_flops: i64,
}

/// Totals per variant relative to the first (baseline) row.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantComparison {
    pub input: Shape,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_variants(variants: &[(String, PyramidConfig)], input: Shape) -> Result<VariantComparison> {
    if variants.is_empty() {
        return Err(Error::Contract("comparison needs at least one variant".into()));
    }
    let mut totals = Vec::with_capacity(variants.len());
    for (name, config) in variants {
        let summary = summarize(&build_resfpn(config)?, input)?;
        totals.push((name.clone(), summary.total_params, summary.total_flops));
    }
    let (_, p0, f0) = totals[0];
    Ok(VariantComparison {
        input,
        rows: totals
            .into_iter()
            .map(|(variant, params, flops)| ComparisonRow {
                variant,
                params,
                flops,
                delta_params: params as i64 - p0 as i64,
                delta_flops: flops as i64 - f0 as i64,
            })
            .collect(),
    })
}

/// Difference to the reference parameter delta that exceeds the tolerance
/// used for reproduction, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMismatch {
    pub variant: String,
    pub computed_delta: i64,
    pub reference_delta: f64,
}

impl VariantComparison {
    pub fn row(&self, variant: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,params,flops,delta_params,delta_flops\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.variant, r.params, r.flops, r.delta_params, r.delta_flops
            );
        }
        out
    }

    /// Rows whose parameter delta disagrees with the reference totals. Needs
    /// a baseline named `fpn`; rows without a reference value are skipped.
    pub fn reference_mismatches(&self) -> Vec<ReferenceMismatch> {
        let reference = |name: &str| REFERENCE_PARAMS_M.iter().find(|(n, _)| *n == name).map(|&(_, v)| v);
        let Some(base) = self
            .rows
            .first()
            .and_then(|r| (r.variant == "fpn").then(|| reference("fpn")).flatten())
        else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| {
                let p = reference(&r.variant)?;
                let expected = (p - base) * 1e6;
                let tolerance = if expected.abs() < 0.1e6 { 0.015e6 } else { 0.05e6 };
                ((r.delta_params as f64 - expected).abs() > tolerance).then(|| ReferenceMismatch {
                    variant: r.variant.clone(),
                    computed_delta: r.delta_params,
                    reference_delta: expected,
                })
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "input {}\n{:<16}{:>12}{:>18}{:>12}{:>18}\n",
            self.input, "variant", "params", "FLOPs", "d_params", "d_FLOPs"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16}{:>12}{:>18}{:>12}{:>18}",
                r.variant, r.params, r.flops, r.delta_params, r.delta_flops
            );
        }
        out
    }
}

/// The eight ablation variants built on `base`.
pub fn ablation_variants(base: &PyramidConfig) -> Result<Vec<(String, PyramidConfig)>> {
    crate::pyramid::VARIANT_NAMES
        .iter()
        .map(|&n| Ok((n.to_string(), base.variant(n)?)))
        .collect()
}
