//! Efficiency accounting — per-layer parameter and multiply-accumulate
//! counts — plus extraction of the fusion module's per-channel weights.
//!
//! Conventions: multiply-accumulates are counted for convolutions
//! (k_h·k_w·(C_in/groups)·C_out per output pixel) and dense layers
//! (C_in·C_out per image). Activations, additions, pooling, and softmax
//! count as zero. Backbone layers run at the low-resolution extents
//! `floor(hr/scale)`; layers after a pixel shuffle run at their actual,
//! larger extents. The flooring means an HR width not divisible by the
//! scale (e.g. 1280 at scale 3) is costed at the slightly smaller
//! reconstruction size.

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;
use crate::net::{parameter_layout, LayerCost, NetworkBase, NetworkSpec, Variant, BRANCHES};
use crate::num::Scalar;
use crate::tensor::{ConvSpec, TensorBase};

/// The HR evaluation resolution behind every headline Mult-Adds figure.
pub const DEFAULT_HR_WIDTH: usize = 1280;
pub const DEFAULT_HR_HEIGHT: usize = 720;

/// One layer's cost: element count (weights, biases, and PReLU slopes all
/// included) and multiply-accumulates at the report's resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub mult_adds: u64,
}

/// Per-layer cost table for one network configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_mult_adds: u64,
    pub hr_width: usize,
    pub hr_height: usize,
    pub lr_width: usize,
    pub lr_height: usize,
    pub scale: usize,
}

/// Builds the per-layer cost table for `spec`, costing one image whose
/// high-resolution extents are `hr_width`×`hr_height`.
pub fn cost_report(spec: &NetworkSpec, hr_width: usize, hr_height: usize) -> Result<CostReport> {
    spec.validate()?;
    let lr_width = hr_width / spec.scale;
    let lr_height = hr_height / spec.scale;
    if lr_width == 0 || lr_height == 0 {
        return Err(Error::Config(format!(
            "HR resolution {hr_width}×{hr_height} collapses to zero at scale {}",
            spec.scale
        )));
    }
    let layout = parameter_layout(spec)?;
    let mut rows = Vec::with_capacity(layout.len());
    for layer in &layout {
        let mult_adds = match &layer.cost {
            LayerCost::Conv { spec, res_scale } => {
                spec.mult_adds(lr_height * res_scale, lr_width * res_scale)
            }
            LayerCost::Dense {
                in_features,
                out_features,
            } => (*in_features as u64) * (*out_features as u64),
            LayerCost::Free => 0,
        };
        rows.push(CostRow {
            name: layer.name.clone(),
            params: layer.param_count(),
            mult_adds,
        });
    }
    let total_params = rows.iter().map(|r| r.params).sum();
    let total_mult_adds = rows.iter().map(|r| r.mult_adds).sum();
    Ok(CostReport {
        rows,
        total_params,
        total_mult_adds,
        hr_width,
        hr_height,
        lr_width,
        lr_height,
        scale: spec.scale,
    })
}

/// Cost table at the standard 1280×720 HR resolution.
pub fn default_cost_report(spec: &NetworkSpec) -> Result<CostReport> {
    cost_report(spec, DEFAULT_HR_WIDTH, DEFAULT_HR_HEIGHT)
}

impl CostReport {
    /// Aligned-text rendering with a header stating the resolution
    /// assumptions (including the floored LR extents).
    pub fn render_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max("layer".len());
        let mut out = format!(
            "costs for one {}x{} HR image (scale {}, LR {}x{} = floor(HR/scale))\n",
            self.hr_width, self.hr_height, self.scale, self.lr_width, self.lr_height
        );
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>16}\n",
            "layer", "params", "mult_adds"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_w$}  {:>12}  {:>16}\n",
                r.name, r.params, r.mult_adds
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>16}\n",
            "total", self.total_params, self.total_mult_adds
        ));
        out.push_str(&format!(
            "total: {:.1}K params, {:.3}G mult-adds\n",
            self.total_params as f64 / 1e3,
            self.total_mult_adds as f64 / 1e9
        ));
        out
    }

    /// CSV rendering: `layer,params,mult_adds` plus a closing total row.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("layer,params,mult_adds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.name, r.params, r.mult_adds));
        }
        out.push_str(&format!(
            "total,{},{}\n",
            self.total_params, self.total_mult_adds
        ));
        out
    }
}

/// Weight-only parameter counts of the three interchangeable block designs
/// at the standard widths (48-wide backbone blocks vs the 64-wide
/// two-conv residual baseline), and their ratios. Biases and PReLU slopes
/// are excluded so the ratios compare the convolution footprints alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockRatios {
    /// Standard spindle block: 1×1 extend, four 3×3 branches, 1×1 refine.
    pub spindle_weights: u64,
    /// Branch 3×3s as depthwise + 1×1 pointwise pairs.
    pub separable_weights: u64,
    /// Branch 3×3s as pure depthwise convolutions (the small preset).
    pub depthwise_weights: u64,
    /// Two-conv residual baseline at width 64.
    pub residual_weights: u64,
    pub spindle_ratio: f64,
    pub separable_ratio: f64,
    pub depthwise_ratio: f64,
}

fn block_weight_sum(spec: &NetworkSpec) -> Result<u64> {
    let layout = parameter_layout(spec)?;
    let mut sum = 0u64;
    for layer in layout {
        if !layer.name.starts_with("module.0.block.0.") {
            continue;
        }
        for p in &layer.params {
            if p.name.ends_with(".weight") {
                sum += p.numel() as u64;
            }
        }
    }
    Ok(sum)
}

/// Derives the block-versus-baseline weight ratios from the layouts
/// themselves (no hand-maintained constants).
pub fn block_weight_ratios() -> Result<BlockRatios> {
    let base = NetworkSpec::new(1, 1, 2);
    let spindle_weights = block_weight_sum(&base)?;
    let depthwise_weights = block_weight_sum(&base.with_depthwise(true))?;
    let residual_weights = block_weight_sum(&base.with_variant(Variant::ResidualBaseline))?;

    // Depthwise-separable reading of the branches: every 3×3 16→16 branch
    // convolution becomes a 3×3 depthwise plus a 1×1 pointwise.
    let standard_3x3 = ConvSpec::new(16, 16, 3, 1).weight_params() as u64;
    let dw = ConvSpec::depthwise(16, 3, 1).weight_params() as u64;
    let pw = ConvSpec::new(16, 16, 1, 0).weight_params() as u64;
    let branch_convs: u64 = (0..BRANCHES)
        .map(|b| crate::net::branch_depth(b) as u64)
        .sum();
    let separable_weights = spindle_weights - branch_convs * standard_3x3 + branch_convs * (dw + pw);

    let ratio = |n: u64| n as f64 / residual_weights as f64;
    Ok(BlockRatios {
        spindle_weights,
        separable_weights,
        depthwise_weights,
        residual_weights,
        spindle_ratio: ratio(spindle_weights),
        separable_ratio: ratio(separable_weights),
        depthwise_ratio: ratio(depthwise_weights),
    })
}

/// Runs `net` on `image` and returns the fusion module's softmax weights
/// as a levels×channels matrix (row i = module level i, each channel's
/// column summing to 1 across rows).
pub fn fusion_weight_matrix<T: Scalar>(
    net: &NetworkBase<T>,
    image: &ImagePlane,
) -> Result<Vec<Vec<T>>> {
    let rgb = image.to_tensor();
    let input = TensorBase::from_vec(
        rgb.shape(),
        rgb.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
    )?;
    let weights = net.fusion_weights(&input)?;
    let levels = net.spec().modules;
    let c = net.spec().backbone_width();
    debug_assert_eq!(weights.numel(), levels * c);
    let data = weights.data();
    Ok((0..levels)
        .map(|i| data[i * c..(i + 1) * c].to_vec())
        .collect())
}

/// CSV form of [`fusion_weight_matrix`]: header `level,ch000,...`, one row
/// per module level; each channel column sums to 1.
pub fn dump_fusion_weights<T: Scalar>(net: &NetworkBase<T>, image: &ImagePlane) -> Result<String> {
    let matrix = fusion_weight_matrix(net, image)?;
    let c = net.spec().backbone_width();
    let mut out = String::from("level");
    for j in 0..c {
        out.push_str(&format!(",ch{j:03}"));
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(&i.to_string());
        for &v in row {
            out.push_str(&format!(",{}", Scalar::to_f64(v)));
        }
        out.push('\n');
    }
    Ok(out)
}
