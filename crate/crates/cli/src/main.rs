use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tta_sr::Result;
use tta_sr_cli::commands;
use tta_sr_cli::config::RunConfig;
use tta_sr_cli::exit_code;

#[derive(Parser)]
#[command(name = "tta-sr", version, about = "Test-time adaptation for super-resolution via filter-activation retrieval")]
struct Cli {
    /// Run configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "tta-sr.toml")]
    config: PathBuf,
    /// Overrides the configured seed for every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Write a default configuration file.
    InitConfig {
        #[arg(long, default_value = "tta-sr.toml")]
        out: PathBuf,
    },
    /// Generate a labeled procedural texture corpus.
    MakeCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long, default_value = "img")]
        prefix: String,
    },
    /// Train the desk feature extractor on the corpus.
    TrainExtractor,
    /// Score the corpus and write the activation index.
    BuildIndex,
    /// Train the baseline SR network.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from the saved checkpoint and optimizer state.
        #[arg(long)]
        resume: bool,
    },
    /// Adapt the baseline to one low-resolution image.
    Adapt {
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth HR image, enables per-epoch PSNR/SSIM in the trace.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Fine-tune on a random image set instead of the matched one.
        #[arg(long)]
        random_set: bool,
    },
    /// Adapt every HR image of a test set and report fidelity gains.
    Evaluate {
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Track filter correlation against the per-image ideal network.
    AnalyzeFilters {
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.output_dir {
        cfg.paths.output_dir = std::env::current_dir()?.join(dir);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.verb {
        Verb::InitConfig { out } => {
            let mut cfg = RunConfig::default();
            if let Some(seed) = cli.seed {
                cfg.set_seed(seed);
            }
            std::fs::write(out, cfg.to_toml()?)?;
            println!("{}", out.display());
        }
        Verb::MakeCorpus { out, count, size, prefix } => {
            let files = commands::cmd_make_corpus(out, prefix, *count, *size, cli.seed.unwrap_or(0))?;
            println!("wrote {} images to {}", files.len(), out.display());
        }
        Verb::TrainExtractor => println!("{}", commands::cmd_train_extractor(&load_config(&cli)?)?.display()),
        Verb::BuildIndex => println!("{}", commands::cmd_build_index(&load_config(&cli)?)?.display()),
        Verb::Train { epochs, resume } => {
            let mut cfg = load_config(&cli)?;
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            println!("{}", commands::cmd_train(&cfg, *resume)?.display());
        }
        Verb::Adapt { input, gt, epochs, random_set } => {
            let mut cfg = load_config(&cli)?;
            if let Some(e) = epochs {
                cfg.adapt.epochs = *e;
            }
            let out = commands::cmd_adapt(&cfg, input, gt.as_deref(), *random_set)?;
            println!("{}\n{}\n{}", out.initial.display(), out.activated.display(), out.trace.display());
        }
        Verb::Evaluate { testset, epochs } => {
            let mut cfg = load_config(&cli)?;
            if let Some(e) = epochs {
                cfg.adapt.epochs = *e;
            }
            let (report, out) = commands::cmd_evaluate(&cfg, testset)?;
            if let Some(m) = &report.aggregate {
                println!(
                    "{} images: PSNR {:.3} -> {:.3} dB, SSIM {:.4} -> {:.4}",
                    report.per_image.len(),
                    m.baseline_psnr,
                    m.activated_psnr,
                    m.baseline_ssim,
                    m.activated_ssim
                );
            }
            for f in &report.failures {
                eprintln!("failed: {} ({})", f.id, f.error);
            }
            println!("{}", out.report.display());
        }
        Verb::AnalyzeFilters { testset, epochs } => {
            let mut cfg = load_config(&cli)?;
            if let Some(e) = epochs {
                cfg.adapt.epochs = *e;
            }
            let (report, out) = commands::cmd_analyze_filters(&cfg, testset)?;
            if let Some(last) = report.rows.last() {
                println!(
                    "epoch {}: matched {:.4}, random {:.4}, baseline {:.4}",
                    last.epoch, last.mean_rho_matched, last.mean_rho_random, last.baseline_rho
                );
            }
            println!("{}", out.json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
