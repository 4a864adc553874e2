use super::params::{BoundParams, NetworkParams};
use super::spec::{discriminator_layers, DiscriminatorSpec, Rank};
use crate::autodiff::{ConvGeom, Graph, Real, Var};
use crate::error::{Error, Result};

pub fn build_discriminator<T: Real>(
    spec: &DiscriminatorSpec,
    seed: u64,
) -> Result<NetworkParams<T>> {
    spec.validate()?;
    let gain = 2.0 / (1.0 + spec.leaky_slope * spec.leaky_slope);
    Ok(NetworkParams::init(&discriminator_layers(spec), seed, gain))
}

/// Critic score per sample, shape `[N, 1]`.
pub fn discriminator_forward<T: Real>(
    g: &mut Graph<T>,
    p: &BoundParams,
    spec: &DiscriminatorSpec,
    x: Var,
) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let extent = match (spec.rank, s.as_slice()) {
        (Rank::Two, &[_, 1, h, w]) => [1, h, w],
        (Rank::Three, &[_, 1, d, h, w]) => [d, h, w],
        _ => {
            return Err(Error::shape(
                "discriminator_forward",
                format!("expected a single-channel {:?} batch, got {s:?}", spec.rank),
            ))
        }
    };
    if extent != spec.input_extent {
        return Err(Error::shape(
            "discriminator_forward",
            format!(
                "input extent {extent:?} differs from the configured {:?}",
                spec.input_extent
            ),
        ));
    }
    let pad = spec.conv_kernel / 2;
    let geom = match spec.rank {
        Rank::Two => ConvGeom::new_2d(spec.stride, pad),
        Rank::Three => ConvGeom::new_3d([spec.stride; 3], [pad; 3]),
    };
    let mut h = x;
    for i in 0..spec.conv_filters.len() {
        let w = p.var(&format!("conv{i}.weight"))?;
        let b = p.var(&format!("conv{i}.bias"))?;
        let y = g.conv(h, w, Some(b), geom)?;
        h = g.leaky_relu(y, spec.leaky_slope)?;
    }
    h = g.flatten(h)?;
    let n_fc = spec.fc_sizes.len();
    for i in 0..n_fc {
        let w = p.var(&format!("fc{i}.weight"))?;
        let b = p.var(&format!("fc{i}.bias"))?;
        h = g.linear(h, w, Some(b))?;
        if i + 1 < n_fc {
            h = g.leaky_relu(h, spec.leaky_slope)?;
        }
    }
    Ok(h)
}
