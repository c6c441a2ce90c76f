use clap::{Parser, Subcommand};
use densify_cli::synth::{write_dataset, SynthSpec};
use densify_cli::{CliError, Outcome, Pipeline, PipelineConfig, StageSummary};
use densify_gan::GanConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "densify",
    version,
    about = "Build dense colored, part-labeled point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value = "manifest.jsonl")]
    manifest: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Points sampled per mesh.
    #[arg(long, global = true, default_value_t = 40_000)]
    points: usize,
    /// Restrict every stage to one category.
    #[arg(long, global = true)]
    category: Option<String>,
    #[arg(long, global = true, default_value_t = 200)]
    epochs: usize,
    #[arg(long, global = true, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long = "lr-g", global = true, default_value_t = 1e-3)]
    lr_g: f64,
    #[arg(long = "lr-d", global = true, default_value_t = 1e-4)]
    lr_d: f64,
    #[arg(long, global = true, default_value_t = 8)]
    batch: usize,
    #[arg(long = "skip-threshold", global = true, default_value_t = 0.7)]
    skip_threshold: f64,
    /// Points kept per cloud for training.
    #[arg(long = "train-points", global = true, default_value_t = 1024)]
    train_points: usize,
    /// Generator dropout probability, active in training and colorization.
    #[arg(long, global = true, default_value_t = 0.5)]
    dropout: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample each mesh into a dense colored cloud.
    Sample,
    /// Align dense clouds onto their sparse labeled counterparts.
    Align,
    /// Label dense clouds with the best KNN classifier per pair.
    Transfer,
    /// Instance and part counts per category.
    Stats,
    /// Train one colorization model per category.
    Train,
    /// Generate colors for test-split clouds.
    Colorize,
    /// Check every produced file.
    Validate,
    /// Write a synthetic dataset and its manifest.
    Synth {
        #[arg(long, default_value_t = 2)]
        categories: usize,
        #[arg(long, default_value_t = 5)]
        objects: usize,
        #[arg(long = "sparse-points", default_value_t = 2000)]
        sparse_points: usize,
    },
}

fn config(cli: &Cli) -> PipelineConfig {
    PipelineConfig {
        seed: cli.seed,
        jobs: cli.jobs,
        points: cli.points,
        category: cli.category.clone(),
        gan: GanConfig {
            lambda_l1: cli.lambda,
            lr_g: cli.lr_g,
            lr_d: cli.lr_d,
            batch_size: cli.batch,
            epochs: cli.epochs,
            skip_threshold: cli.skip_threshold,
            dropout_p: cli.dropout,
            points: cli.train_points,
            ..GanConfig::default()
        },
        ..PipelineConfig::new(&cli.manifest, &cli.out_dir)
    }
}

fn finish(stage: &str, summary: StageSummary) -> Outcome {
    log::info!(
        "{stage}: {} processed, {} failed",
        summary.processed,
        summary.failed
    );
    if summary.failed > 0 {
        Outcome::ObjectFailures
    } else {
        Outcome::Success
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Command::Synth {
        categories,
        objects,
        sparse_points,
    } = cli.command
    {
        let spec = SynthSpec {
            categories,
            objects_per_category: objects,
            sparse_points,
            seed: cli.seed,
            ..SynthSpec::default()
        };
        let manifest = write_dataset(&cli.manifest, &spec)?;
        log::info!(
            "wrote {} records to {}",
            manifest.len(),
            cli.manifest.display()
        );
        return Ok(Outcome::Success);
    }
    let pipeline = Pipeline::new(config(cli))?;
    let mut manifest = pipeline.load_manifest()?;
    Ok(match cli.command {
        Command::Sample => finish("sample", pipeline.sample(&mut manifest)?),
        Command::Align => {
            let summary = pipeline.align(&mut manifest)?;
            print!("{}", pipeline.align_report(&manifest));
            finish("align", summary)
        }
        Command::Transfer => {
            let summary = pipeline.transfer(&mut manifest)?;
            print!("{}", pipeline.transfer_report(&manifest));
            finish("transfer", summary)
        }
        Command::Stats => {
            print!("{}", pipeline.stats(&manifest)?);
            Outcome::Success
        }
        Command::Train => finish("train", pipeline.train(&manifest)?),
        Command::Colorize => finish("colorize", pipeline.colorize(&mut manifest)?),
        Command::Validate => {
            let violations = pipeline.validate(&manifest);
            for v in &violations {
                println!("{v}");
            }
            log::info!("validate: {} violations", violations.len());
            if violations.is_empty() {
                Outcome::Success
            } else {
                Outcome::ObjectFailures
            }
        }
        Command::Synth { .. } => unreachable!("handled above"),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                Outcome::Fatal.code() as u8
            } else {
                0
            });
        }
    };
    let outcome = run(&cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Outcome::Fatal
    });
    ExitCode::from(outcome.code() as u8)
}
