use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use avb::autodiff::Tensor;
use avb::experiments::{
    encode_idx_images, encode_idx_labels, evaluate_checkpoint, pgm_grid, run_experiment, synthetic4_dataset,
    two_image_fixture, ExperimentConfig,
};
use clap::{Args, Parser, Subcommand};
use flate2::write::GzEncoder;

#[derive(Parser)]
#[command(name = "avb", version, about = "Adversarial variational Bayes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Replace the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Write artifacts here instead of the configured directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replace the number of training steps.
    #[arg(long)]
    steps: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a saved checkpoint under a config and print one metrics line.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write the IDX and PGM test fixtures.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn write_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut gz = GzEncoder::new(std::fs::File::create(path)?, flate2::Compression::default());
    gz.write_all(bytes)?;
    gz.finish()?;
    Ok(())
}

fn write_fixtures(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let s4 = synthetic4_dataset();
    let files: Vec<(&str, Vec<u8>)> = vec![
        ("two-2x2-images-idx3-ubyte", two_image_fixture()),
        ("two-labels-idx1-ubyte", encode_idx_labels(&[7, 2])),
        ("empty-28x28-idx3-ubyte", encode_idx_images(0, 28, 28, &[])?),
        ("synthetic4-idx3-ubyte", encode_idx_images(4, 2, 2, &s4.to_bytes())?),
        ("black-2x2.pgm", pgm_grid(&Tensor::zeros(&[1, 4]), 2, 2, 1)?.into_bytes()),
        ("synthetic4-grid.pgm", pgm_grid(&s4.to_tensor()?, 2, 2, 2)?.into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in &files {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        written.push(p);
    }
    let gz = dir.join("two-2x2-images-idx3-ubyte.gz");
    write_gz(&gz, &two_image_fixture())?;
    written.push(gz);
    Ok(written)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let summary = run_experiment(&cfg)?;
            let last = summary.metrics.last().expect("a run always evaluates at the end");
            println!("{}", last.to_json_line()?);
            log::info!("artifacts in {}", summary.out_dir.display());
        }
        Command::Eval {
            checkpoint,
            config,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            println!("{}", evaluate_checkpoint(&cfg, &checkpoint)?.to_json_line()?);
        }
        Command::Fixtures { out_dir } => {
            for p in write_fixtures(&out_dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
