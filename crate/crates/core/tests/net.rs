mod common;

use std::collections::HashMap;

use common::{assert_dense_connectivity, conv_params, hand_generator_count, toy_generator_spec, uniform};
use dearlab::autodiff::{Graph, Op, Tensor, Var};
use dearlab::net::checkpoint::{load_params, save_params};
use dearlab::net::{
    build_discriminator, build_generator, build_generator_with, count_discriminator_parameters,
    count_parameters, discriminator_forward, generator_forward, DiscriminatorSpec, GeneratorSpec, Rank,
};
use dearlab::objectives::mse_loss;
use proptest::prelude::*;

fn run_generator(spec: &GeneratorSpec, seed: u64, zero_output: bool, x: &Tensor<f64>) -> Tensor<f64> {
    let params = build_generator_with::<f64>(spec, seed, zero_output).unwrap();
    let mut g = Graph::inference();
    let p = params.bind(&mut g, false);
    let xv = g.leaf(x.clone(), false);
    let y = generator_forward(&mut g, &p, spec, xv).unwrap();
    g.value(y).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_preserves_shape_2d(n in 1usize..3, h in 5usize..12, w in 5usize..12) {
        let spec = toy_generator_spec(Rank::Two);
        let x = uniform(&[n, 1, h, w], 0.0, 1.0, (h * 31 + w) as u64);
        let y = run_generator(&spec, 3, false, &x);
        prop_assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn generator_preserves_shape_3d(d in 1usize..5, h in 5usize..10, w in 5usize..10) {
        let spec = toy_generator_spec(Rank::Three);
        let x = uniform(&[1, 1, d, h, w], 0.0, 1.0, (d * 97 + h * 31 + w) as u64);
        let y = run_generator(&spec, 4, false, &x);
        prop_assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn zero_output_layer_is_exact_identity(d in 1usize..4, h in 5usize..9, seed in 0u64..1000) {
        let spec = toy_generator_spec(Rank::Three);
        let x = uniform(&[1, 1, d, h, h + 1], -1.0, 2.0, seed);
        let y = run_generator(&spec, seed, true, &x);
        prop_assert_eq!(y, x);
    }
}

#[test]
fn full_size_generator_preserves_shape_and_identity() {
    let spec = GeneratorSpec::dear3d(4);
    let x = uniform(&[1, 1, 3, 12, 11], 0.0, 1.0, 1);
    let params = build_generator::<f32>(&spec, 0).unwrap();
    let y = dearlab::trainer::generate(&params, &spec, &x.cast()).unwrap();
    assert_eq!(y, x.cast::<f32>());
    assert_eq!(spec.min_extent(), 9);
}

#[test]
fn too_small_input_is_rejected() {
    let spec = GeneratorSpec::dear3d(4);
    let params = build_generator::<f32>(&spec, 0).unwrap();
    let err = dearlab::trainer::generate(&params, &spec, &Tensor::zeros(vec![1, 1, 3, 8, 20])).unwrap_err();
    assert!(err.to_string().contains("9x9"), "{err}");
    let err = dearlab::trainer::generate(&params, &spec, &Tensor::zeros(vec![1, 1, 12, 12])).unwrap_err();
    assert!(err.to_string().contains("expected"), "{err}");
}

/// Ceiling-division trace computed independently of `DiscriminatorSpec::trace`.
#[test]
fn discriminator_trace_on_volume_patch() {
    let spec = DiscriminatorSpec::new(Rank::Three, [9, 64, 64]);
    let mut e = [9usize, 64, 64];
    let mut expect = Vec::new();
    for _ in 0..6 {
        e = e.map(|v| v.div_ceil(2));
        expect.push(e);
    }
    assert_eq!(spec.trace(), expect);
    assert_eq!(expect.last(), Some(&[1, 1, 1]));

    let mut small = spec.clone();
    small.conv_filters = vec![2; 6];
    small.fc_sizes = vec![3, 1];
    let params = build_discriminator::<f32>(&small, 0).unwrap();
    let mut g = Graph::inference();
    let p = params.bind(&mut g, false);
    let x = g.leaf(uniform(&[2, 1, 9, 64, 64], 0.0, 1.0, 2).cast(), false);
    let y = discriminator_forward(&mut g, &p, &small, x).unwrap();
    assert_eq!(g.shape(y), &[2, 1]);
    assert_eq!(small.flat_features(), 2);
}

#[test]
fn planar_critic_keeps_unit_depth() {
    let spec = DiscriminatorSpec::new(Rank::Two, [1, 64, 64]);
    assert!(spec.trace().iter().all(|e| e[0] == 1));
    assert_eq!(spec.trace().last().unwrap()[1..], [1, 1]);
    assert_eq!(spec.flat_features(), 256);
}

#[test]
fn dense_layers_consume_all_previous_features() {
    for rank in [Rank::Two, Rank::Three] {
        assert_dense_connectivity(rank, 4);
    }
}

#[test]
fn decoder_stages_concatenate_matching_skips() {
    let spec = GeneratorSpec {
        n_down: 3,
        n_up: 3,
        ..toy_generator_spec(Rank::Two)
    };
    let params = build_generator::<f64>(&spec, 1).unwrap();
    let mut g = Graph::new();
    let p = params.bind(&mut g, true);
    let x = g.leaf(uniform(&[1, 1, 9, 9], 0.0, 1.0, 5), false);
    generator_forward(&mut g, &p, &spec, x).unwrap();
    let names: HashMap<Var, String> = p.lookup().into_iter().map(|(n, v)| (v, n.to_string())).collect();
    let records: Vec<(Op, Vec<Var>)> = g.records().map(|(_, op, ins)| (op.clone(), ins.to_vec())).collect();
    let first_dense_inputs: Vec<usize> = records
        .iter()
        .filter(|(op, ins)| matches!(op, Op::Conv(_)) && names.get(&ins[1]).is_some_and(|n| n.starts_with("dec") && n.ends_with("dense0.weight")))
        .map(|(_, ins)| g.shape(ins[0])[1])
        .collect();
    // Two skip-fed decoder stages, the last stage has no partner.
    let f = spec.base_filters;
    assert_eq!(first_dense_inputs, vec![2 * f, 2 * f, f]);
}

#[test]
fn every_parameter_receives_gradient() {
    for rank in [Rank::Two, Rank::Three] {
        let spec = toy_generator_spec(rank);
        let params = build_generator_with::<f64>(&spec, 2, false).unwrap();
        let mut g = Graph::new();
        let p = params.bind(&mut g, true);
        let shape: &[usize] = if rank == Rank::Two { &[2, 1, 7, 7] } else { &[1, 1, 3, 7, 7] };
        let x = g.leaf(uniform(shape, 0.0, 1.0, 8), false);
        let t = g.constant(uniform(shape, 0.0, 1.0, 9));
        let y = generator_forward(&mut g, &p, &spec, x).unwrap();
        let loss = mse_loss(&mut g, y, t).unwrap();
        let mut grads = g.backward(loss).unwrap();
        let gs = p.collect_grads(&params, &mut grads);
        for ((name, _), gt) in params.iter().zip(&gs) {
            assert!(gt.data().iter().any(|&v| v != 0.0), "{rank:?} {name} has zero gradient");
        }
    }
    let spec = DiscriminatorSpec {
        conv_filters: vec![2, 3],
        fc_sizes: vec![4, 1],
        ..DiscriminatorSpec::new(Rank::Three, [3, 8, 8])
    };
    let params = build_discriminator::<f64>(&spec, 2).unwrap();
    let mut g = Graph::new();
    let p = params.bind(&mut g, true);
    let x = g.leaf(uniform(&[2, 1, 3, 8, 8], 0.0, 1.0, 8), false);
    let y = discriminator_forward(&mut g, &p, &spec, x).unwrap();
    let s = g.mean(y).unwrap();
    let mut grads = g.backward(s).unwrap();
    for ((name, _), gt) in params.iter().zip(&p.collect_grads(&params, &mut grads)) {
        assert!(gt.data().iter().any(|&v| v != 0.0), "critic {name} has zero gradient");
    }
}

#[test]
fn generator_count_matches_hand_sum() {
    let spec = GeneratorSpec::dear3d(32);
    assert_eq!(count_parameters(&spec), hand_generator_count(Rank::Three, 32, 32));
    assert_eq!(build_generator::<f32>(&spec, 0).unwrap().total_elements(), count_parameters(&spec));
    assert_eq!(count_parameters(&GeneratorSpec::dear2d()), hand_generator_count(Rank::Two, 38, 38));
    assert_eq!(count_parameters(&GeneratorSpec::dear2d_i()), hand_generator_count(Rank::Two, 48, 48));
    assert_eq!(count_parameters(&GeneratorSpec::dear3d(16)), hand_generator_count(Rank::Three, 16, 32));
}

#[test]
fn discriminator_count_matches_hand_sum() {
    let spec = DiscriminatorSpec::new(Rank::Three, [9, 64, 64]);
    let convs = conv_params(1, 64, 27)
        + conv_params(64, 64, 27)
        + conv_params(64, 128, 27)
        + conv_params(128, 128, 27)
        + conv_params(128, 256, 27)
        + conv_params(256, 256, 27);
    let fcs = 256 * 1024 + 1024 + 1024 + 1;
    assert_eq!(count_discriminator_parameters(&spec), convs + fcs);
    assert_eq!(build_discriminator::<f32>(&spec, 0).unwrap().total_elements(), convs + fcs);
}

#[test]
fn initialization_is_seeded() {
    let spec = toy_generator_spec(Rank::Three);
    let a = build_generator::<f32>(&spec, 1).unwrap();
    assert_eq!(a, build_generator::<f32>(&spec, 1).unwrap());
    assert_ne!(a, build_generator::<f32>(&spec, 2).unwrap());
    assert!(a.get("out.weight").unwrap().data().iter().all(|&v| v == 0.0));
    assert!(a.get("enc0.down.bias").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn checkpoint_round_trip_and_mismatch_names_layer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = toy_generator_spec(Rank::Two);
    let params = build_generator_with::<f32>(&spec, 3, false).unwrap();
    save_params(dir.path(), &params, serde_json::json!({"note": "x"})).unwrap();
    let (back, meta) = load_params(dir.path(), &params).unwrap();
    assert_eq!(back.to_bytes(), params.to_bytes());
    assert_eq!(meta["note"], "x");

    let wider = GeneratorSpec {
        base_filters: 3,
        ..spec.clone()
    };
    let reference = build_generator::<f32>(&wider, 0).unwrap();
    let err = load_params(dir.path(), &reference).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("enc0.down.weight"), "{err}");

    let deeper = GeneratorSpec {
        dense_block_depth: 3,
        ..spec
    };
    let reference = build_generator::<f32>(&deeper, 0).unwrap();
    let err = load_params(dir.path(), &reference).unwrap_err();
    assert!(err.to_string().contains("enc0.dense2"), "{err}");
}

#[test]
fn invalid_specs_name_the_field() {
    let mut spec = GeneratorSpec::dear3d(8);
    spec.n_up = 3;
    assert!(spec.validate().unwrap_err().to_string().contains("generator.n_up"));
    let mut spec = GeneratorSpec::dear3d(8);
    spec.dense_kernel = 4;
    assert!(spec.validate().unwrap_err().to_string().contains("generator.dense_kernel"));
    let mut d = DiscriminatorSpec::new(Rank::Two, [1, 64, 64]);
    d.fc_sizes = vec![16, 2];
    assert!(d.validate().unwrap_err().to_string().contains("discriminator.fc_sizes"));
}
