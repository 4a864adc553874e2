mod common;

use std::path::Path;

use common::tiny_lab_toml;
use dearlab::data::{load_dataset, load_manifest, Role, Volume};
use dearlab::lab::{
    cmd_eval, cmd_reconstruct, cmd_simulate, cmd_train, reconstruct_volume, LabConfig, PRESETS,
};
use dearlab::net::{build_generator, GeneratorSpec, Rank};
use dearlab::objectives::METRICS_HEADER;
use dearlab::trainer::RunDir;
use ndarray::Array3;

fn tiny(out: &Path) -> LabConfig {
    LabConfig::from_toml(&tiny_lab_toml(out, 1)).unwrap()
}

#[test]
fn presets_select_network_and_losses() {
    for name in PRESETS {
        let c = LabConfig::preset(name).unwrap();
        c.validate().unwrap();
        let planar = name.starts_with("dear2d");
        assert_eq!(c.generator.rank == Rank::Two, planar, "{name}");
        assert_eq!(c.patch.n_slices == 1, planar, "{name}");
    }
    let w = |n| LabConfig::preset(n).unwrap().train.weights;
    assert_eq!((w("dear2d-mse").lambda_sl, w("dear2d-mse").lambda_al), (0.0, 0.0));
    assert_eq!((w("dear2d-mse-ssim").lambda_sl, w("dear2d-mse-ssim").lambda_al), (0.5, 0.0));
    assert_eq!(w("dear3d-no-gan").lambda_al, 0.0);
    assert_eq!(w("dear3d").lambda_al, 0.0025);
    assert_eq!(LabConfig::preset("dear2d-i").unwrap().generator.base_filters, 48);
    let err = LabConfig::preset("dear4d").unwrap_err();
    assert!(err.to_string().contains("preset") && err.is_validation());
}

#[test]
fn file_values_override_the_preset() {
    let c = LabConfig::from_toml("preset = \"dear2d-mse\"\n[train]\nepochs = 3\n").unwrap();
    assert_eq!(c.generator, GeneratorSpec::dear2d());
    assert_eq!((c.train.epochs, c.train.weights.lambda_sl), (3, 0.0));
    let c = LabConfig::from_toml_with_preset("preset = \"dear2d-mse\"\n", Some("dear3d")).unwrap();
    assert_eq!(c.generator.rank, Rank::Three);
    assert_eq!(LabConfig::from_toml("").unwrap(), LabConfig::default());
}

#[test]
fn toml_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(dir.path());
    assert_eq!(LabConfig::from_toml(&c.to_toml()).unwrap(), c);
    assert_eq!(c.generator.n_down, 2);
    assert_eq!(c.generator.sampling_kernel, 3);
}

#[test]
fn validation_names_the_offending_field() {
    let cases = [
        ("[simulation]\nn_validation = 20\n", "simulation.n_validation"),
        ("[simulation]\nn_phantoms = 0\n", "simulation.n_phantoms"),
        ("[simulation]\nn_keep = 600\n", "simulation.n_keep"),
        ("[geometry]\nimage_n = 32\n", "patch.patch"),
        ("[patch]\nn_slices = 20\n", "patch.n_slices"),
        ("preset = \"dear2d\"\n", "preset"),
        ("preset = \"dear2d-mse\"\n[patch]\nn_slices = 9\n", "patch.n_slices"),
        ("[generator]\nbase_filters = 0\n", "generator.base_filters"),
        ("[discriminator]\nfc_sizes = [8, 2]\n", "discriminator.fc_sizes"),
        ("[train]\nbatch_size = 0\n", "train.batch_size"),
        ("[train]\nlr_decay_per_epoch = 1.5\n", "train.lr_decay_per_epoch"),
        ("[train.weights]\nlambda_gp = -1.0\n", "weights.lambda_gp"),
        ("[eval]\nwindow_lo_hu = 500.0\n", "eval.window_lo_hu"),
        ("[train]\nbogus = 1\n", "bogus"),
    ];
    for (text, field) in cases {
        let err = LabConfig::from_toml(text).unwrap_err();
        assert!(err.is_validation(), "{text}: {err}");
        assert!(err.to_string().contains(field), "{text}: {err}");
    }
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = cmd_simulate(&tiny(a.path())).unwrap();
    let mb = cmd_simulate(&tiny(b.path())).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.pairs.len(), 3);
    assert!(ma.pairs.iter().all(|p| p.provenance.n_keep == 12));
    assert_eq!(ma.pairs[2].role, Role::Validation);
    assert_eq!(load_manifest(&a.path().join("dataset")).unwrap(), ma);
    let (_, pairs) = load_dataset(&a.path().join("dataset")).unwrap();
    assert_eq!(pairs[0].few_view.data.dim(), (3, 32, 32));

    let mut other = tiny(b.path());
    other.seed = 4;
    assert_ne!(cmd_simulate(&other).unwrap().pairs[0].full_sha256, ma.pairs[0].full_sha256);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cmd_simulate(&cfg).unwrap();
    let r = cmd_train(&cfg, false).unwrap();
    // Two training volumes, one 16×16 tile per 3-slice stack of a 32×32 grid: 4 patches each.
    assert_eq!((r.generator_updates, r.critic_updates), (4, 8));
    assert_eq!(r.validation.len(), 1);
    let run = RunDir { root: cfg.run_dir() };
    assert!(run.best_checkpoint().exists() && run.log_path().exists());

    let written = cmd_reconstruct(&cfg, None, None, None).unwrap();
    assert_eq!(written, vec![cfg.reconstruction_dir().join("pair_0002")]);
    let out = Volume::load(&written[0]).unwrap();
    assert_eq!(out.data.dim(), (3, 32, 32));

    let report = cmd_eval(&cfg, None).unwrap();
    assert_eq!(report.network.len(), 1);
    let csv = std::fs::read_to_string(cfg.eval_dir().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(METRICS_HEADER));
    assert_eq!(csv.lines().count(), 2);
    assert!(cfg.eval_dir().join("metrics_fbp.csv").exists());
    assert!(cfg.eval_dir().join("figures/pair_0002.png").exists());
    let summary = std::fs::read_to_string(cfg.eval_dir().join("summary.txt")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method\tPSNR\tSSIM\tRMSE");
    assert!(lines[1].starts_with("FBP\t") && lines[2].starts_with("network\t"));
    assert_eq!(lines[2].matches('±').count(), 3);

    let mut more = cfg.clone();
    more.train.epochs = 2;
    let r = cmd_train(&more, true).unwrap();
    assert_eq!(r.generator_updates, 4);
}

#[test]
fn eval_of_identical_volumes_gives_sentinels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cmd_simulate(&cfg).unwrap();
    let (_, pairs) = load_dataset(&cfg.dataset_dir()).unwrap();
    let outputs = dir.path().join("copies");
    for p in pairs.iter().filter(|p| p.role == Role::Validation) {
        p.full_view.save(&outputs.join(&p.id)).unwrap();
    }
    let r = cmd_eval(&cfg, Some(&outputs)).unwrap();
    let m = r.network[0].metrics;
    assert_eq!((m.psnr, m.ssim, m.rmse), (f64::INFINITY, 1.0, 0.0));
    let csv = std::fs::read_to_string(cfg.eval_dir().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("pair_0002,inf,1,0"));
}

#[test]
fn whole_volume_reconstruction_keeps_the_shape() {
    let spec = GeneratorSpec {
        base_filters: 4,
        growth_rate: 4,
        ..GeneratorSpec::dear3d(4)
    };
    let params = build_generator(&spec, 1).unwrap();
    let input = Volume::new(Array3::from_shape_fn((9, 128, 128), |(z, i, j)| ((z + i + j) % 7) as f64 / 7.0), 1.0);
    let out = reconstruct_volume(&params, &spec, &input).unwrap();
    assert_eq!(out.data.dim(), (9, 128, 128));
    let err = (&out.data - &input.data).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(err < 1e-6, "{err}");
}

#[test]
fn mismatched_checkpoint_and_missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let err = cmd_train(&cfg, false).unwrap_err();
    assert!(!err.is_validation());
    assert!(err.to_string().contains("dataset"), "{err}");

    cmd_simulate(&cfg).unwrap();
    cmd_train(&cfg, false).unwrap();
    let mut wider = cfg.clone();
    wider.generator.base_filters = 3;
    let err = cmd_reconstruct(&wider, None, None, None).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("enc0"), "{err}");
    assert!(cmd_train(&wider, true).unwrap_err().is_validation());
}
