use super::params::{BoundParams, NetworkParams};
use super::spec::{generator_layers, skip_source, GeneratorSpec, Rank};
use crate::autodiff::{ConvGeom, Graph, Real, Var};
use crate::error::{Error, Result};

/// Randomly initialized generator parameters.
///
/// The output conv starts at zero so the network is the identity map.
pub fn build_generator<T: Real>(spec: &GeneratorSpec, seed: u64) -> Result<NetworkParams<T>> {
    build_generator_with(spec, seed, true)
}

/// As [`build_generator`], optionally keeping a random output layer.
pub fn build_generator_with<T: Real>(
    spec: &GeneratorSpec,
    seed: u64,
    zero_output: bool,
) -> Result<NetworkParams<T>> {
    spec.validate()?;
    let mut params = NetworkParams::init(&generator_layers(spec), seed, 2.0);
    if zero_output {
        if let Some(w) = params.get_mut("out.weight") {
            w.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }
    Ok(params)
}

fn dense_geom(spec: &GeneratorSpec) -> ConvGeom {
    let p = spec.dense_kernel / 2;
    match spec.rank {
        Rank::Two => ConvGeom::new_2d(1, p),
        Rank::Three => ConvGeom::new_3d([1; 3], [p; 3]),
    }
}

fn sampling_geom(spec: &GeneratorSpec) -> ConvGeom {
    match spec.rank {
        Rank::Two => ConvGeom::new_2d(spec.sampling_stride, 0),
        Rank::Three => ConvGeom::new_3d([1, spec.sampling_stride, spec.sampling_stride], [0; 3]),
    }
}

fn conv_layer(
    g: &mut Graph<impl Real>,
    p: &BoundParams,
    name: &str,
    x: Var,
    geom: ConvGeom,
) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias"))?;
    g.conv(x, w, Some(b), geom)
}

/// Densely connected block: layer `l` sees the block input and every earlier
/// layer output, concatenated along channels.
pub fn dense_block_forward<T: Real>(
    g: &mut Graph<T>,
    p: &BoundParams,
    spec: &GeneratorSpec,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let geom = dense_geom(spec);
    let mut features = vec![x];
    let mut last = x;
    for l in 0..spec.dense_block_depth {
        let input = if l == 0 { x } else { g.concat(&features)? };
        let y = conv_layer(g, p, &format!("{prefix}.dense{l}"), input, geom)?;
        last = g.relu(y)?;
        if l > 0 {
            g.discard(input);
        }
        g.discard(y);
        features.push(last);
    }
    for &f in &features[1..features.len() - 1] {
        g.discard(f);
    }
    Ok(last)
}

fn check_input(g: &Graph<impl Real>, spec: &GeneratorSpec, x: Var) -> Result<()> {
    let s = g.shape(x);
    let rank_ok = match spec.rank {
        Rank::Two => s.len() == 4,
        Rank::Three => s.len() == 5,
    };
    if !rank_ok || s[1] != 1 {
        return Err(Error::shape(
            "generator_forward",
            format!("expected [N, 1, {}H, W], got {s:?}", if spec.rank == Rank::Three { "D, " } else { "" }),
        ));
    }
    let min = spec.min_extent();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h < min || w < min {
        return Err(Error::geometry(
            "generator_forward",
            format!("input {h}x{w} is smaller than the minimum extent {min}x{min}"),
        ));
    }
    Ok(())
}

/// Runs the generator on `x` (`[N, 1, D, H, W]` or `[N, 1, H, W]`).
///
/// On an inference graph, intermediate activations are freed as soon as they
/// are consumed.
pub fn generator_forward<T: Real>(
    g: &mut Graph<T>,
    p: &BoundParams,
    spec: &GeneratorSpec,
    x: Var,
) -> Result<Var> {
    check_input(g, spec, x)?;
    let samp = sampling_geom(spec);
    let mut h = x;
    let mut skips = Vec::with_capacity(spec.n_down);
    for i in 0..spec.n_down {
        let pre = conv_layer(g, p, &format!("enc{i}.down"), h, samp)?;
        let y = g.relu(pre)?;
        g.discard(pre);
        h = dense_block_forward(g, p, spec, &format!("enc{i}"), y)?;
        g.discard(y);
        skips.push(h);
    }
    for i in 0..spec.n_up {
        let w = p.var(&format!("dec{i}.up.weight"))?;
        let b = p.var(&format!("dec{i}.up.bias"))?;
        let pre = g.conv_transpose(h, w, Some(b), samp)?;
        g.discard(h);
        let mut y = g.relu(pre)?;
        g.discard(pre);
        if let Some(s) = skip_source(spec, i) {
            let joined = g.concat(&[y, skips[s]])?;
            g.discard(y);
            g.discard(skips[s]);
            y = joined;
        }
        h = dense_block_forward(g, p, spec, &format!("dec{i}"), y)?;
        g.discard(y);
    }
    let out = conv_layer(g, p, "out", h, dense_geom(spec))?;
    if spec.residual_output {
        g.add(out, x)
    } else {
        Ok(out)
    }
}
