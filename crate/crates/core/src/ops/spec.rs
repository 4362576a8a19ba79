use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Square convolution hyper-parameters. Bias is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: usize, stride: usize, dilation: usize, padding: usize) -> Result<Self> {
        if out_channels == 0 || kernel == 0 || stride == 0 || dilation == 0 {
            return Err(Error::InvalidShape(format!(
                "conv needs c, k, s, d >= 1, got c={out_channels} k={kernel} s={stride} d={dilation}"
            )));
        }
        Ok(ConvSpec {
            out_channels,
            kernel,
            stride,
            dilation,
            padding,
        })
    }

    /// Convolution padded so stride 1 preserves resolution (k=3 -> p=1, k=1 -> p=0).
    pub fn same(out_channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        Self::new(out_channels, kernel, stride, 1, (kernel - 1) / 2)
    }

    /// 4x4 transposed convolution with padding 1: exact `stride`x up-sampling for stride 2.
    pub fn upconv(out_channels: usize, stride: usize) -> Result<Self> {
        Self::new(out_channels, 4, stride, 1, 1)
    }

    pub fn extent(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |len: usize| -> Result<usize> {
            let padded = len + 2 * self.padding;
            if padded < self.extent() {
                return Err(Error::InvalidShape(format!(
                    "kernel extent {} exceeds padded input {padded}",
                    self.extent()
                )));
            }
            Ok((padded - self.extent()) / self.stride + 1)
        };
        Ok((out(h)?, out(w)?))
    }

    pub fn transposed_output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |len: usize| -> Result<usize> {
            let full = (len - 1) * self.stride + self.extent();
            if full <= 2 * self.padding {
                return Err(Error::InvalidShape(format!(
                    "transposed conv output for input {len} is empty"
                )));
            }
            Ok(full - 2 * self.padding)
        };
        Ok((out(h)?, out(w)?))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let (h, w) = self.output_hw(input.h, input.w)?;
        Shape::new(input.n, self.out_channels, h, w)
    }

    pub fn transposed_output_shape(&self, input: Shape) -> Result<Shape> {
        let (h, w) = self.transposed_output_hw(input.h, input.w)?;
        Shape::new(input.n, self.out_channels, h, w)
    }

    /// `k^2 * c_in * c + c`.
    pub fn param_count(&self, in_channels: usize) -> u64 {
        let k2 = (self.kernel * self.kernel) as u64;
        k2 * in_channels as u64 * self.out_channels as u64 + self.out_channels as u64
    }

    /// Two FLOPs per multiply-accumulate plus one add per output for the bias.
    pub fn flop_count(&self, input: Shape) -> Result<u64> {
        let out = self.output_shape(input)?;
        let k2 = (self.kernel * self.kernel) as u64;
        let outputs = out.numel() as u64;
        Ok(2 * k2 * input.c as u64 * outputs + outputs)
    }

    /// Counted as the convolution doing the same multiply-accumulates: every
    /// input element is scattered through `k^2 * c` weights.
    pub fn transposed_flop_count(&self, input: Shape) -> Result<u64> {
        let out = self.transposed_output_shape(input)?;
        let k2 = (self.kernel * self.kernel) as u64;
        let macs = k2 * input.numel() as u64 * self.out_channels as u64;
        Ok(2 * macs + out.numel() as u64)
    }

    pub fn describe(&self) -> String {
        format!(
            "Conv({},{},{},{})",
            self.out_channels, self.kernel, self.stride, self.dilation
        )
    }

    pub fn describe_transposed(&self) -> String {
        format!(
            "UpConv({},{},{},{})",
            self.out_channels, self.kernel, self.stride, self.dilation
        )
    }
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Non-overlapping max pooling window (`kernel == stride`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || kernel != stride {
            return Err(Error::InvalidShape(format!(
                "pooling needs kernel == stride >= 1, got MaxPool({kernel},{stride})"
            )));
        }
        Ok(PoolSpec { kernel, stride })
    }

    pub fn square(kernel: usize) -> Result<Self> {
        Self::new(kernel, kernel)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if !input.h.is_multiple_of(self.kernel) || !input.w.is_multiple_of(self.kernel) {
            return Err(Error::InvalidShape(format!(
                "MaxPool({k},{k}) needs spatial dims divisible by {k}, got {input}",
                k = self.kernel
            )));
        }
        Shape::new(input.n, input.c, input.h / self.kernel, input.w / self.kernel)
    }

    /// `k^2 - 1` comparisons per output element.
    pub fn flop_count(&self, input: Shape) -> Result<u64> {
        let out = self.output_shape(input)?;
        Ok(out.numel() as u64 * (self.kernel * self.kernel - 1) as u64)
    }
}

impl fmt::Display for PoolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaxPool({},{})", self.kernel, self.stride)
    }
}

/// One multiply per element.
pub fn activation_flops(shape: Shape) -> u64 {
    shape.numel() as u64
}

/// `inputs - 1` adds per output element.
pub fn addition_flops(shape: Shape, inputs: usize) -> u64 {
    shape.numel() as u64 * inputs.saturating_sub(1) as u64
}

/// Four multiplies and three adds per output element.
pub fn bilinear_flops(output: Shape) -> u64 {
    7 * output.numel() as u64
}
