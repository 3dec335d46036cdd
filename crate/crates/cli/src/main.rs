use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdiff_cli::{parse_config, CliError, Pipeline, Stage};
use qdiff_core::imaging::{image_metrics, RealImage};
use qdiff_core::io::read_real_values;
use qdiff_core::TransverseGrid;
use qdiff_core::noise::add_white_noise;

#[derive(Parser)]
#[command(name = "qdiff", version, about = "Entangled-photon diffraction imaging simulator")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for synthetic noise. Never affects the physics.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// All enabled stages, or one of them with --stage.
    Run {
        #[arg(long)]
        stage: Option<String>,
    },
    Decompose,
    Couple,
    Image,
    Farfield,
    Specresolve,
    /// Compare a real image against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        img: PathBuf,
        /// Add white noise of this power relative to the image before comparing.
        #[arg(long)]
        noise: Option<f64>,
    },
}

fn run_stages(cli: &Cli, stage: Option<Stage>) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = parse_config(path)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    let pipeline = Pipeline::new(&cfg, out);
    let (reports, manifest) = match stage {
        Some(s) => pipeline.run_stage(s)?,
        None => pipeline.run_all()?,
    };
    for r in &reports {
        let state = if r.cached { "cached" } else { "done" };
        println!("{:<12} {state:<7} {}", r.stage.name(), r.summary);
    }
    println!("{} files in {}", manifest.len(), pipeline.out().join(qdiff_cli::MANIFEST_FILE).display());
    Ok(())
}

fn metrics(reference: &Path, img: &Path, noise: Option<f64>, seed: u64) -> Result<(), CliError> {
    let stage = |e| CliError::Stage { stage: "metrics", source: e };
    // Metrics are extent-independent, so the file's N with a unit extent suffices.
    let load = |path: &Path| -> Result<RealImage, qdiff_core::Error> {
        let (n, values) = read_real_values(path)?;
        RealImage::new(TransverseGrid::new(n, 1.0)?, values)
    };
    let r = load(reference).map_err(stage)?;
    let mut i = load(img).map_err(stage)?;
    if let Some(p) = noise {
        i = add_white_noise(&i, p, seed).map_err(stage)?;
    }
    let m = image_metrics(&i, &r).map_err(stage)?;
    println!("nmse = {}", m.nmse);
    println!("pearson = {}", m.pearson);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?;
    }
    match &cli.command {
        Command::Run { stage } => {
            let stage = stage.as_deref().map(str::parse).transpose()?;
            run_stages(cli, stage)
        }
        Command::Decompose => run_stages(cli, Some(Stage::Decompose)),
        Command::Couple => run_stages(cli, Some(Stage::Couple)),
        Command::Image => run_stages(cli, Some(Stage::Image)),
        Command::Farfield => run_stages(cli, Some(Stage::Farfield)),
        Command::Specresolve => run_stages(cli, Some(Stage::Specresolve)),
        Command::Metrics { reference, img, noise } => metrics(reference, img, *noise, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
