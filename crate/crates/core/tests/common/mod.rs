#![allow(dead_code)]

use dearlab::autodiff::{Graph, Tensor, Var};
use dearlab::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// Values bounded away from zero, so ReLU kinks stay out of a finite-difference stencil.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = r.random_range(0.1..1.0);
        if r.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Builds a scalar from leaves. Non-scalar outputs are contracted with a fixed
/// random tensor so every output element contributes.
pub type Build<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'a;

fn scalarize(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    if g.value(y).numel() == 1 {
        return Ok(y);
    }
    let r = uniform(g.shape(y), -1.0, 1.0, seed ^ 0x5eed);
    let r = g.constant(r);
    let p = g.mul(y, r)?;
    g.sum(p)
}

pub fn eval(f: &Build, leaves: &[Tensor<f64>], seed: u64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let y = f(&mut g, &vars).expect("forward");
    let s = scalarize(&mut g, y, seed).expect("scalarize");
    g.value(s).item()
}

pub fn analytic(f: &Build, leaves: &[Tensor<f64>], seed: u64) -> Vec<Tensor<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let y = f(&mut g, &vars).expect("forward");
    let s = scalarize(&mut g, y, seed).expect("scalarize");
    let mut grads = g.backward(s).expect("backward");
    vars.iter()
        .zip(leaves)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect()
}

pub fn numeric(f: &Build, leaves: &[Tensor<f64>], seed: u64, h: f64) -> Vec<Tensor<f64>> {
    let mut work = leaves.to_vec();
    let mut out = Vec::with_capacity(leaves.len());
    for li in 0..leaves.len() {
        let mut grad = Tensor::zeros(leaves[li].shape().to_vec());
        for k in 0..leaves[li].numel() {
            let x0 = leaves[li].data()[k];
            work[li].data_mut()[k] = x0 + h;
            let fp = eval(f, &work, seed);
            work[li].data_mut()[k] = x0 - h;
            let fm = eval(f, &work, seed);
            work[li].data_mut()[k] = x0;
            grad.data_mut()[k] = (fp - fm) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish.
pub fn rel_error(a: &Tensor<f64>, n: &Tensor<f64>) -> f64 {
    let diff: f64 = a.data().iter().zip(n.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.dot(a).sqrt().max(n.dot(n).sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Largest per-leaf relative error between backprop and central differences.
pub fn gradcheck(f: &Build, leaves: &[Tensor<f64>], seed: u64) -> f64 {
    let a = analytic(f, leaves, seed);
    let n = numeric(f, leaves, seed, FD_STEP);
    a.iter().zip(&n).map(|(a, n)| rel_error(a, n)).fold(0.0, f64::max)
}

/// Asserts that backprop matches finite differences within `tol`. With
/// `every_leaf`, each leaf must also receive a non-zero gradient.
pub fn assert_gradcheck(name: &str, f: &Build, leaves: &[Tensor<f64>], tol: f64, every_leaf: bool) -> f64 {
    let a = analytic(f, leaves, 11);
    let nonzero: Vec<bool> = a.iter().map(|t| t.data().iter().any(|&v| v != 0.0)).collect();
    assert!(nonzero.iter().any(|&n| n), "{name}: all gradients vanish");
    if every_leaf {
        if let Some(i) = nonzero.iter().position(|&n| !n) {
            panic!("{name}: leaf {i} got an all-zero gradient");
        }
    }
    let err = gradcheck(f, leaves, 11);
    assert!(err < tol, "{name}: relative gradient error {err:e} exceeds {tol:e}");
    err
}

pub struct Case {
    pub name: &'static str,
    pub leaves: Vec<Tensor<f64>>,
    pub build: Box<Build<'static>>,
}

fn case(
    name: &'static str,
    leaves: Vec<Tensor<f64>>,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'static,
) -> Case {
    Case {
        name,
        leaves,
        build: Box::new(build),
    }
}

/// One case per differentiable graph op, covering 2-D and 3-D convolution
/// geometries.
pub fn op_cases() -> Vec<Case> {
    use dearlab::autodiff::ConvGeom;
    let s = [2, 3, 4];
    vec![
        case("add", vec![uniform(&s, -1.0, 1.0, 1), uniform(&s, -1.0, 1.0, 2)], |g, v| g.add(v[0], v[1])),
        case("sub", vec![uniform(&s, -1.0, 1.0, 3), uniform(&s, -1.0, 1.0, 4)], |g, v| g.sub(v[0], v[1])),
        case("mul", vec![uniform(&s, -1.0, 1.0, 5), uniform(&s, -1.0, 1.0, 6)], |g, v| g.mul(v[0], v[1])),
        case("div", vec![uniform(&s, -1.0, 1.0, 7), uniform(&s, 0.5, 1.5, 8)], |g, v| g.div(v[0], v[1])),
        case("scale", vec![uniform(&s, -1.0, 1.0, 9)], |g, v| g.scale(v[0], -2.5)),
        case("add_scalar", vec![uniform(&s, -1.0, 1.0, 10)], |g, v| {
            let y = g.add_scalar(v[0], 0.75)?;
            g.square(y)
        }),
        case("square", vec![uniform(&s, -1.0, 1.0, 11)], |g, v| g.square(v[0])),
        case("sqrt", vec![uniform(&s, 0.2, 2.0, 12)], |g, v| g.sqrt(v[0])),
        case("relu", vec![away_from_zero(&s, 13)], |g, v| g.relu(v[0])),
        case("leaky_relu", vec![away_from_zero(&s, 14)], |g, v| g.leaky_relu(v[0], 0.2)),
        case(
            "conv2d_same",
            vec![uniform(&[2, 2, 6, 7], -1.0, 1.0, 15), uniform(&[3, 2, 3, 3], -1.0, 1.0, 16), uniform(&[3], -1.0, 1.0, 17)],
            |g, v| g.conv(v[0], v[1], Some(v[2]), ConvGeom::new_2d(1, 1)),
        ),
        case(
            "conv2d_strided_valid",
            vec![uniform(&[2, 2, 7, 8], -1.0, 1.0, 18), uniform(&[2, 2, 3, 3], -1.0, 1.0, 19)],
            |g, v| g.conv(v[0], v[1], None, ConvGeom::new_2d(2, 0)),
        ),
        case(
            "conv3d_strided_padded",
            vec![uniform(&[1, 2, 4, 5, 5], -1.0, 1.0, 20), uniform(&[2, 2, 3, 3, 3], -1.0, 1.0, 21)],
            |g, v| g.conv(v[0], v[1], None, ConvGeom::new_3d([1, 2, 2], [1, 1, 0])),
        ),
        case(
            "conv3d_planar_kernel",
            vec![uniform(&[2, 1, 3, 5, 5], -1.0, 1.0, 22), uniform(&[2, 1, 1, 3, 3], -1.0, 1.0, 23), uniform(&[2], -1.0, 1.0, 24)],
            |g, v| g.conv(v[0], v[1], Some(v[2]), ConvGeom::unit()),
        ),
        case(
            "conv_transpose2d",
            vec![uniform(&[2, 2, 4, 4], -1.0, 1.0, 25), uniform(&[2, 3, 3, 3], -1.0, 1.0, 26), uniform(&[3], -1.0, 1.0, 27)],
            |g, v| g.conv_transpose(v[0], v[1], Some(v[2]), ConvGeom::unit()),
        ),
        case(
            "conv_transpose3d_strided",
            vec![uniform(&[1, 2, 2, 3, 3], -1.0, 1.0, 28), uniform(&[2, 2, 3, 3, 3], -1.0, 1.0, 29)],
            |g, v| g.conv_transpose(v[0], v[1], None, ConvGeom::new_3d([2, 2, 2], [1, 0, 1])),
        ),
        case(
            "add_bias",
            vec![uniform(&[2, 3, 2, 2], -1.0, 1.0, 30), uniform(&[3], -1.0, 1.0, 31)],
            |g, v| g.add_bias(v[0], v[1]),
        ),
        case(
            "linear",
            vec![uniform(&[3, 5], -1.0, 1.0, 32), uniform(&[4, 5], -1.0, 1.0, 33), uniform(&[4], -1.0, 1.0, 34)],
            |g, v| g.linear(v[0], v[1], Some(v[2])),
        ),
        case(
            "matmul",
            vec![uniform(&[3, 4], -1.0, 1.0, 35), uniform(&[4, 2], -1.0, 1.0, 36)],
            |g, v| g.matmul(v[0], v[1]),
        ),
        case("reshape", vec![uniform(&s, -1.0, 1.0, 37)], |g, v| {
            let r = g.reshape(v[0], vec![4, 6])?;
            let w = g.constant(uniform(&[6, 2], -1.0, 1.0, 38));
            g.matmul(r, w)
        }),
        case("flatten", vec![uniform(&[2, 2, 2, 3], -1.0, 1.0, 39)], |g, v| {
            let f = g.flatten(v[0])?;
            g.square(f)
        }),
        case(
            "concat",
            vec![uniform(&[2, 1, 3, 3], -1.0, 1.0, 40), uniform(&[2, 2, 3, 3], -1.0, 1.0, 41), uniform(&[2, 3, 3, 3], -1.0, 1.0, 42)],
            |g, v| {
                let c = g.concat(&[v[0], v[1], v[2]])?;
                g.square(c)
            },
        ),
        case("narrow", vec![uniform(&[2, 5, 3], -1.0, 1.0, 43)], |g, v| {
            let n = g.narrow(v[0], 1, 3)?;
            g.square(n)
        }),
        case("sum", vec![uniform(&s, -1.0, 1.0, 44)], |g, v| {
            let q = g.square(v[0])?;
            g.sum(q)
        }),
        case("mean", vec![uniform(&s, -1.0, 1.0, 45)], |g, v| {
            let q = g.square(v[0])?;
            g.mean(q)
        }),
        case("sum_per_sample", vec![uniform(&s, -1.0, 1.0, 46)], |g, v| {
            let q = g.square(v[0])?;
            g.sum_per_sample(q)
        }),
        case("mean_per_sample", vec![uniform(&s, -1.0, 1.0, 47)], |g, v| {
            let q = g.square(v[0])?;
            g.mean_per_sample(q)
        }),
        case("l2_norm_total", vec![uniform(&s, -1.0, 1.0, 48)], |g, v| g.l2_norm(v[0], false)),
        case("l2_norm_per_sample", vec![uniform(&s, -1.0, 1.0, 49)], |g, v| g.l2_norm(v[0], true)),
        case(
            "mse_loss",
            vec![uniform(&s, -1.0, 1.0, 50), uniform(&s, -1.0, 1.0, 51)],
            |g, v| dearlab::objectives::mse_loss(g, v[0], v[1]),
        ),
        case(
            "ssim_loss",
            vec![uniform(&[2, 1, 12, 13], 0.0, 1.0, 52), uniform(&[2, 1, 12, 13], 0.0, 1.0, 53)],
            |g, v| dearlab::objectives::ssim_loss(g, v[0], v[1], &Default::default()),
        ),
        case(
            "ssim_loss_volume",
            vec![uniform(&[1, 1, 2, 11, 12], 0.0, 1.0, 54), uniform(&[1, 1, 2, 11, 12], 0.0, 1.0, 55)],
            |g, v| dearlab::objectives::ssim_loss(g, v[0], v[1], &Default::default()),
        ),
        case(
            "double_backprop_conv_leaky",
            vec![uniform(&[2, 1, 5, 5], -1.0, 1.0, 56), uniform(&[2, 1, 3, 3], -1.0, 1.0, 57)],
            |g, v| {
                let w = v[1];
                let gx = g.input_gradient(v[0], |g, x| {
                    let y = g.conv(x, w, None, ConvGeom::new_2d(2, 1))?;
                    let a = g.leaky_relu(y, 0.2)?;
                    let q = g.square(a)?;
                    g.sum_per_sample(q)
                })?;
                g.square(gx)
            },
        ),
    ]
}

pub fn toy_generator_spec(rank: dearlab::net::Rank) -> dearlab::net::GeneratorSpec {
    dearlab::net::GeneratorSpec {
        rank,
        n_down: 2,
        n_up: 2,
        sampling_kernel: 3,
        sampling_stride: 1,
        dense_block_depth: 2,
        dense_kernel: 3,
        base_filters: 2,
        growth_rate: 2,
        residual_output: true,
    }
}

pub fn toy_critic_spec(rank: dearlab::net::Rank, extent: [usize; 3]) -> dearlab::net::DiscriminatorSpec {
    let mut spec = dearlab::net::DiscriminatorSpec::new(rank, extent);
    spec.conv_filters = vec![2, 3];
    spec.fc_sizes = vec![4, 1];
    spec
}

/// Splits parameters into names and tensors. Biases get small random values:
/// with zero biases, dead ReLU regions put pre-activations exactly on the kink,
/// where finite differences are meaningless.
fn named(params: dearlab::net::NetworkParams<f64>) -> (Vec<String>, Vec<Tensor<f64>>) {
    params
        .into_entries()
        .into_iter()
        .enumerate()
        .map(|(i, (n, t))| {
            let t = if n.ends_with(".bias") { uniform(t.shape(), -0.1, 0.1, 900 + i as u64) } else { t };
            (n, t)
        })
        .unzip()
}

fn bound(names: &[String], vars: &[Var]) -> dearlab::net::BoundParams {
    dearlab::net::BoundParams::new(names.iter().cloned().zip(vars.iter().copied()).collect())
}

/// Generator at toy size with a random output layer; leaves are the input
/// followed by every parameter.
pub fn generator_case(rank: dearlab::net::Rank) -> Case {
    use dearlab::net::{build_generator_with, generator_forward, Rank};
    let spec = toy_generator_spec(rank);
    let (names, params) = named(build_generator_with(&spec, 5, false).unwrap());
    let shape: &[usize] = match rank {
        Rank::Two => &[2, 1, 6, 7],
        Rank::Three => &[1, 1, 3, 5, 6],
    };
    let mut leaves = vec![uniform(shape, 0.0, 1.0, 60)];
    leaves.extend(params);
    let name = if rank == Rank::Two { "generator_2d" } else { "generator_3d" };
    case(name, leaves, move |g, v| {
        let p = bound(&names, &v[1..]);
        generator_forward(g, &p, &spec, v[0])
    })
}

pub fn discriminator_case(rank: dearlab::net::Rank) -> Case {
    use dearlab::net::{build_discriminator, discriminator_forward, Rank};
    let (extent, shape): ([usize; 3], &[usize]) = match rank {
        Rank::Two => ([1, 8, 8], &[2, 1, 8, 8]),
        Rank::Three => ([3, 6, 6], &[2, 1, 3, 6, 6]),
    };
    let spec = toy_critic_spec(rank, extent);
    let (names, params) = named(build_discriminator(&spec, 6).unwrap());
    let mut leaves = vec![uniform(shape, 0.0, 1.0, 61)];
    leaves.extend(params);
    let name = if rank == Rank::Two { "discriminator_2d" } else { "discriminator_3d" };
    case(name, leaves, move |g, v| {
        let p = bound(&names, &v[1..]);
        discriminator_forward(g, &p, &spec, v[0])
    })
}

/// Gradient penalty as a function of the critic parameters. Its gradient
/// needs backprop through the recorded input gradient.
pub fn gradient_penalty_case(rank: dearlab::net::Rank) -> Case {
    use dearlab::net::{build_discriminator, discriminator_forward, Rank};
    use dearlab::objectives::gradient_penalty_with_alpha;
    let (extent, shape): ([usize; 3], &[usize]) = match rank {
        Rank::Two => ([1, 8, 8], &[3, 1, 8, 8]),
        Rank::Three => ([3, 6, 6], &[2, 1, 3, 6, 6]),
    };
    let spec = toy_critic_spec(rank, extent);
    let (names, params) = named(build_discriminator(&spec, 7).unwrap());
    let real = uniform(shape, 0.0, 1.0, 62);
    let fake = uniform(shape, 0.0, 1.0, 63);
    let alpha = dearlab::objectives::sample_alpha(shape[0], 64);
    let name = if rank == Rank::Two { "gradient_penalty_2d" } else { "gradient_penalty_3d" };
    case(name, params, move |g, v| {
        let p = bound(&names, v);
        gradient_penalty_with_alpha(g, |g, x| discriminator_forward(g, &p, &spec, x), &real, &fake, &alpha)
    })
}

/// Lab configuration small enough for a full simulate, train, reconstruct and
/// eval cycle in seconds.
pub fn tiny_lab_toml(out: &std::path::Path, epochs: usize) -> String {
    format!(
        r#"seed = 3
deterministic = true
out = "{}"

[geometry]
image_n = 32
n_views = 64
n_detectors = 64

[simulation]
n_phantoms = 3
n_validation = 1
n_slices = 3
n_keep = 12

[patch]
patch = 16
stride = 16
n_slices = 3
depth_stride = 1

[generator]
n_down = 2
n_up = 2
dense_block_depth = 2
base_filters = 2
growth_rate = 2

[discriminator]
conv_filters = [2, 3]
fc_sizes = [4, 1]

[train]
batch_size = 2
epochs = {epochs}
critic_steps_per_gen = 2
lr0 = 1e-3
"#,
        out.display()
    )
}

/// Every dense-block conv must consume the block input plus the outputs of
/// all earlier layers of the same block, in order.
pub fn assert_dense_connectivity(rank: dearlab::net::Rank, depth: usize) -> usize {
    use dearlab::autodiff::Op;
    use dearlab::net::{build_generator, generator_forward, Rank};
    use std::collections::HashMap;
    let mut spec = toy_generator_spec(rank);
    spec.dense_block_depth = depth;
    let params = build_generator::<f64>(&spec, 1).unwrap();
    let mut g = Graph::new();
    let p = params.bind(&mut g, true);
    let shape: &[usize] = if rank == Rank::Two { &[1, 1, 7, 7] } else { &[1, 1, 2, 7, 7] };
    let x = g.leaf(uniform(shape, 0.0, 1.0, 5), false);
    generator_forward(&mut g, &p, &spec, x).unwrap();

    let names: HashMap<Var, String> = p.lookup().into_iter().map(|(n, v)| (v, n.to_string())).collect();
    let records: Vec<(Var, Op, Vec<Var>)> = g.records().map(|(v, op, ins)| (v, op.clone(), ins.to_vec())).collect();
    let by_var: HashMap<Var, (Op, Vec<Var>)> = records.iter().map(|(v, o, i)| (*v, (o.clone(), i.clone()))).collect();
    // Output var of each layer: the ReLU applied after conv + bias.
    let mut relu_of: HashMap<Var, Var> = HashMap::new();
    for (v, op, ins) in &records {
        if let Op::LeakyRelu(s) = op {
            if *s == 0.0 {
                if let Some((Op::AddBias, bi)) = by_var.get(&ins[0]) {
                    relu_of.insert(bi[0], *v);
                }
            }
        }
    }
    let mut block_outputs: HashMap<String, Vec<Var>> = HashMap::new();
    let mut block_inputs: HashMap<String, Var> = HashMap::new();
    let mut checked = 0;
    for (v, op, ins) in &records {
        let Op::Conv(_) = op else { continue };
        let Some(wname) = names.get(&ins[1]) else { continue };
        let Some((prefix, rest)) = wname.split_once(".dense") else { continue };
        let l: usize = rest.trim_end_matches(".weight").parse().unwrap();
        let outs = block_outputs.entry(prefix.to_string()).or_default();
        assert_eq!(outs.len(), l, "{wname}: layers visited out of order");
        if l == 0 {
            block_inputs.insert(prefix.to_string(), ins[0]);
        } else {
            let (cop, cins) = by_var.get(&ins[0]).expect("recorded input");
            assert_eq!(*cop, Op::Concat, "{wname} must read a concatenation");
            assert_eq!(cins.len(), l + 1, "{wname} concat arity");
            assert_eq!(cins[0], block_inputs[prefix], "{wname} first operand is the block input");
            assert_eq!(&cins[1..], &outs[..], "{wname} remaining operands are earlier outputs");
        }
        let expect_cin = g.shape(ins[0])[1];
        assert_eq!(g.shape(ins[1])[1], expect_cin);
        outs.push(relu_of[v]);
        checked += 1;
    }
    assert_eq!(checked, (spec.n_down + spec.n_up) * spec.dense_block_depth);
    checked
}

pub fn conv_params(cin: usize, cout: usize, taps: usize) -> usize {
    cin * cout * taps + cout
}

/// Hand sum for four down and four up stages, five-layer dense blocks with
/// `growth` channels (the last layer of each block emits `f`), 3-wide kernels
/// (1×3×3 sampling kernels in 3-D) and a final conv to one channel.
pub fn hand_generator_count(rank: dearlab::net::Rank, f: usize, growth: usize) -> usize {
    let (dense_taps, samp_taps) = match rank {
        dearlab::net::Rank::Two => (9, 9),
        dearlab::net::Rank::Three => (27, 9),
    };
    let dense = |cin: usize| {
        (0..5)
            .map(|l| conv_params(cin + l * growth, if l == 4 { f } else { growth }, dense_taps))
            .sum::<usize>()
    };
    let enc = conv_params(1, f, samp_taps) + 3 * conv_params(f, f, samp_taps) + 4 * dense(f);
    // Three decoder stages take a skip, doubling their dense-block input.
    let dec = 4 * conv_params(f, f, samp_taps) + 3 * dense(2 * f) + dense(f);
    enc + dec + conv_params(f, 1, dense_taps)
}

/// Bilinear sample on the pixel-center lattice, zero outside the grid.
fn sample(img: &ndarray::Array2<f64>, px: f64, x: f64, y: f64) -> f64 {
    let n = img.nrows() as f64;
    let col = x / px + n / 2.0 - 0.5;
    let row = n / 2.0 - 0.5 - y / px;
    let (c0, r0) = (col.floor(), row.floor());
    let (fc, fr) = (col - c0, row - r0);
    let get = |r: f64, c: f64| {
        if r < 0.0 || c < 0.0 || r >= n || c >= n {
            0.0
        } else {
            img[[r as usize, c as usize]]
        }
    };
    get(r0, c0) * (1.0 - fr) * (1.0 - fc)
        + get(r0, c0 + 1.0) * (1.0 - fr) * fc
        + get(r0 + 1.0, c0) * fr * (1.0 - fc)
        + get(r0 + 1.0, c0 + 1.0) * fr * fc
}

/// Ray-marching projector with `step_mm`, integrating over the chord of the
/// circle that encloses the interpolated image.
pub fn oracle_projection(img: &ndarray::Array2<f64>, g: &dearlab::ctsim::FanBeamGeometry, step_mm: f64) -> ndarray::Array2<f64> {
    let n = g.image_n as f64;
    let radius = (n / 2.0 + 1.0) * g.pixel_mm * 2f64.sqrt();
    let d = g.source_iso_mm;
    let mut out = ndarray::Array2::zeros((g.n_views, g.n_detectors));
    for k in 0..g.n_views {
        let beta = 2.0 * std::f64::consts::PI * k as f64 / g.n_views as f64;
        for j in 0..g.n_detectors {
            let gamma = (j as f64 - (g.n_detectors as f64 - 1.0) / 2.0) * g.detector_pitch_rad;
            let miss = d * gamma.sin();
            if miss.abs() >= radius {
                continue;
            }
            let half_chord = (radius * radius - miss * miss).sqrt();
            let (t0, t1) = (d * gamma.cos() - half_chord, d * gamma.cos() + half_chord);
            let steps = ((t1 - t0) / step_mm).ceil() as usize;
            let h = (t1 - t0) / steps as f64;
            let (sx, sy) = (d * beta.cos(), d * beta.sin());
            let (dx, dy) = (-(beta + gamma).cos(), -(beta + gamma).sin());
            let mut acc = 0.0;
            for s in 0..steps {
                let t = t0 + (s as f64 + 0.5) * h;
                acc += sample(img, g.pixel_mm, sx + t * dx, sy + t * dy);
            }
            out[[k, j]] = acc * h;
        }
    }
    out
}

pub fn rel_norm(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    diff / b.mapv(|v| v * v).sum().sqrt()
}
