use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dearlab::lab::{cmd_eval, cmd_reconstruct, cmd_simulate, cmd_train, LabConfig, PRESETS};
use dearlab::Error;

#[derive(Parser)]
#[command(name = "dearlab", version, about = "Few-view CT simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ablation preset used as the base configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs on a single worker thread.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate phantoms and write the paired few-view/full-view dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the generator (and critic) on the simulated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Run a trained generator over whole volumes.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; defaults to the best checkpoint of the run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Volume stem (`<stem>.raw` + `<stem>.json`); defaults to every validation pair.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output stem for `--input`, or output directory otherwise.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score reconstructions against the full-view references.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory of reconstructed volumes; defaults to the run's reconstructions.
        #[arg(long)]
        outputs: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> dearlab::Result<LabConfig> {
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?,
        None => String::new(),
    };
    let mut cfg = LabConfig::from_toml_with_preset(&text, c.preset.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.deterministic |= c.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(c: &Common) -> dearlab::Result<LabConfig> {
    let cfg = load_config(c)?;
    if cfg.deterministic {
        // Results do not depend on the thread count; a single worker also fixes
        // the order of any diagnostic output.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    let resolved = cfg.out.join("config.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| Error::Io {
        path: resolved,
        source: e,
    })?;
    Ok(cfg)
}

fn run(cli: Cli) -> dearlab::Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = prepare(&common)?;
            let m = cmd_simulate(&cfg)?;
            println!("wrote {} pairs to {}", m.pairs.len(), cfg.dataset_dir().display());
        }
        Command::Train { common, resume } => {
            let cfg = prepare(&common)?;
            let r = cmd_train(&cfg, resume)?;
            println!(
                "{} generator and {} critic updates",
                r.generator_updates, r.critic_updates
            );
            for v in &r.validation {
                println!(
                    "epoch {}: psnr {:.3} (input {:.3})  ssim {:.4} (input {:.4})",
                    v.epoch, v.output.psnr, v.input.psnr, v.output.ssim, v.input.ssim
                );
            }
        }
        Command::Reconstruct {
            common,
            checkpoint,
            input,
            output,
        } => {
            let cfg = prepare(&common)?;
            let written =
                cmd_reconstruct(&cfg, checkpoint.as_deref(), input.as_deref(), output.as_deref())?;
            for w in written {
                println!("{}", w.display());
            }
        }
        Command::Eval { common, outputs } => {
            let cfg = prepare(&common)?;
            let r = cmd_eval(&cfg, outputs.as_deref())?;
            print!("{}", r.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
