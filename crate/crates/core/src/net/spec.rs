use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    #[serde(rename = "2d")]
    Two,
    #[serde(rename = "3d")]
    Three,
}

impl Rank {
    /// Kernel extents for a `k×k` in-plane kernel with `depth` taps along slices.
    pub(crate) fn kernel(self, depth: usize, k: usize) -> Vec<usize> {
        match self {
            Rank::Two => vec![k, k],
            Rank::Three => vec![depth, k, k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub rank: Rank,
    pub n_down: usize,
    pub n_up: usize,
    /// In-plane extent of the down/up-sampling kernels (depth extent is 1).
    pub sampling_kernel: usize,
    pub sampling_stride: usize,
    pub dense_block_depth: usize,
    /// Extent of the dense-block kernels on every axis.
    pub dense_kernel: usize,
    pub base_filters: usize,
    pub growth_rate: usize,
    pub residual_output: bool,
}

impl GeneratorSpec {
    fn base(rank: Rank, filters: usize, growth: usize) -> Self {
        Self {
            rank,
            n_down: 4,
            n_up: 4,
            sampling_kernel: 3,
            sampling_stride: 1,
            dense_block_depth: 5,
            dense_kernel: 3,
            base_filters: filters,
            growth_rate: growth,
            residual_output: true,
        }
    }

    /// 3-D generator; filter width defaults to 32 with growth 32.
    pub fn dear3d(filters: usize) -> Self {
        Self::base(Rank::Three, filters, 32)
    }

    /// 2-D ablation with 38 filters in every layer.
    pub fn dear2d() -> Self {
        Self::base(Rank::Two, 38, 38)
    }

    /// 2-D ablation widened to 48 filters.
    pub fn dear2d_i() -> Self {
        Self::base(Rank::Two, 48, 48)
    }

    /// Smallest in-plane extent the unpadded sampling layers accept.
    pub fn min_extent(&self) -> usize {
        self.n_down * (self.sampling_kernel - 1) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_down != self.n_up {
            return Err(Error::config("generator.n_up", "must equal n_down"));
        }
        if self.n_down == 0 {
            return Err(Error::config("generator.n_down", "must be positive"));
        }
        if self.sampling_stride != 1 {
            return Err(Error::config(
                "generator.sampling_stride",
                "only stride 1 keeps encoder and decoder extents aligned",
            ));
        }
        if self.sampling_kernel == 0 {
            return Err(Error::config("generator.sampling_kernel", "must be positive"));
        }
        if self.dense_kernel.is_multiple_of(2) {
            return Err(Error::config(
                "generator.dense_kernel",
                "must be odd so zero padding preserves extents",
            ));
        }
        if self.dense_block_depth == 0 {
            return Err(Error::config("generator.dense_block_depth", "must be positive"));
        }
        if self.base_filters == 0 || self.growth_rate == 0 {
            return Err(Error::config("generator.base_filters", "filter counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub rank: Rank,
    pub conv_filters: Vec<usize>,
    pub conv_kernel: usize,
    pub stride: usize,
    pub fc_sizes: Vec<usize>,
    pub leaky_slope: f64,
    /// Input extent `[depth, height, width]`; depth is 1 for 2-D.
    pub input_extent: [usize; 3],
}

impl DiscriminatorSpec {
    pub fn new(rank: Rank, input_extent: [usize; 3]) -> Self {
        Self {
            rank,
            conv_filters: vec![64, 64, 128, 128, 256, 256],
            conv_kernel: 3,
            stride: 2,
            fc_sizes: vec![1024, 1],
            leaky_slope: 0.2,
            input_extent,
        }
    }

    /// Extents after each strided conv (ceiling division).
    pub fn trace(&self) -> Vec<[usize; 3]> {
        let mut e = self.input_extent;
        let mut out = Vec::with_capacity(self.conv_filters.len());
        for _ in &self.conv_filters {
            for (a, v) in e.iter_mut().enumerate() {
                if a > 0 || self.rank == Rank::Three {
                    *v = v.div_ceil(self.stride);
                }
            }
            out.push(e);
        }
        out
    }

    pub fn flat_features(&self) -> usize {
        let last = self.trace().last().copied().unwrap_or(self.input_extent);
        let c = self.conv_filters.last().copied().unwrap_or(1);
        c * last.iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::config("discriminator.conv_filters", "need positive filter counts"));
        }
        if self.fc_sizes.last() != Some(&1) {
            return Err(Error::config(
                "discriminator.fc_sizes",
                "final layer must emit one scalar per sample",
            ));
        }
        if self.stride == 0 || self.conv_kernel.is_multiple_of(2) {
            return Err(Error::config("discriminator.conv_kernel", "odd kernel and positive stride required"));
        }
        if self.input_extent.contains(&0) {
            return Err(Error::config("discriminator.input_extent", "extents must be positive"));
        }
        if self.rank == Rank::Two && self.input_extent[0] != 1 {
            return Err(Error::config("discriminator.input_extent", "2-D critic needs depth 1"));
        }
        if !(self.leaky_slope >= 0.0) {
            return Err(Error::config("discriminator.leaky_slope", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    Linear,
}

/// One trainable layer: weights plus a bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub kernel: Vec<usize>,
}

impl LayerDesc {
    pub fn weight_shape(&self) -> Vec<usize> {
        let mut s = match self.kind {
            LayerKind::ConvTranspose => vec![self.cin, self.cout],
            _ => vec![self.cout, self.cin],
        };
        s.extend(&self.kernel);
        s
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    pub fn n_params(&self) -> usize {
        self.fan_in() * self.cout + self.cout
    }
}

fn layer(name: String, kind: LayerKind, cin: usize, cout: usize, kernel: Vec<usize>) -> LayerDesc {
    LayerDesc {
        name,
        kind,
        cin,
        cout,
        kernel,
    }
}

pub(crate) fn dense_block_layers(
    prefix: &str,
    spec: &GeneratorSpec,
    cin: usize,
    cout: usize,
) -> Vec<LayerDesc> {
    let k = spec.rank.kernel(spec.dense_kernel, spec.dense_kernel);
    (0..spec.dense_block_depth)
        .map(|l| {
            let last = l + 1 == spec.dense_block_depth;
            layer(
                format!("{prefix}.dense{l}"),
                LayerKind::Conv,
                cin + l * spec.growth_rate,
                if last { cout } else { spec.growth_rate },
                k.clone(),
            )
        })
        .collect()
}

/// Encoder stage whose output feeds decoder stage `i`, if any.
pub(crate) fn skip_source(spec: &GeneratorSpec, i: usize) -> Option<usize> {
    spec.n_down.checked_sub(2 + i)
}

pub fn generator_layers(spec: &GeneratorSpec) -> Vec<LayerDesc> {
    let f = spec.base_filters;
    let samp = spec.rank.kernel(1, spec.sampling_kernel);
    let mut out = Vec::new();
    for i in 0..spec.n_down {
        let cin = if i == 0 { 1 } else { f };
        out.push(layer(format!("enc{i}.down"), LayerKind::Conv, cin, f, samp.clone()));
        out.extend(dense_block_layers(&format!("enc{i}"), spec, f, f));
    }
    for i in 0..spec.n_up {
        out.push(layer(format!("dec{i}.up"), LayerKind::ConvTranspose, f, f, samp.clone()));
        let cin = if skip_source(spec, i).is_some() { 2 * f } else { f };
        out.extend(dense_block_layers(&format!("dec{i}"), spec, cin, f));
    }
    out.push(layer(
        "out".into(),
        LayerKind::Conv,
        f,
        1,
        spec.rank.kernel(spec.dense_kernel, spec.dense_kernel),
    ));
    out
}

pub fn discriminator_layers(spec: &DiscriminatorSpec) -> Vec<LayerDesc> {
    let k = spec.rank.kernel(spec.conv_kernel, spec.conv_kernel);
    let mut out = Vec::new();
    let mut cin = 1;
    for (i, &c) in spec.conv_filters.iter().enumerate() {
        out.push(layer(format!("conv{i}"), LayerKind::Conv, cin, c, k.clone()));
        cin = c;
    }
    let mut fin = spec.flat_features();
    for (i, &o) in spec.fc_sizes.iter().enumerate() {
        out.push(layer(format!("fc{i}"), LayerKind::Linear, fin, o, Vec::new()));
        fin = o;
    }
    out
}

/// Exact number of trainable scalars (weights plus biases) implied by a spec.
pub fn count_parameters(spec: &GeneratorSpec) -> usize {
    generator_layers(spec).iter().map(LayerDesc::n_params).sum()
}

pub fn count_discriminator_parameters(spec: &DiscriminatorSpec) -> usize {
    discriminator_layers(spec).iter().map(LayerDesc::n_params).sum()
}
