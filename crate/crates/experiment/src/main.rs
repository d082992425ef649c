use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanest_experiment::config::{Domain, ExperimentConfig};
use chanest_experiment::dataset::{generate_dataset, Dataset};
use chanest_experiment::error::{exit, Result};
use chanest_experiment::histogram::histogram_magnitudes;
use chanest_experiment::pipeline::{self, dataset_distance, write_results_csv};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chanest", version, about = "OFDM channel-estimation transfer-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Built-in profile: desk or paper.
    #[arg(long)]
    profile: Option<String>,
    /// Replace all seeds with ones derived from this value.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        let c = match (&self.config, &self.profile) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(name)) => ExperimentConfig::profile(name)?,
            (None, None) => ExperimentConfig::desk(),
        };
        Ok(match self.seed {
            Some(s) => c.with_seed(s),
            None => c,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the channels of one domain.
    Generate {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "source")]
        domain: Domain,
    },
    /// Train the configured models on a source dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fine-tune source checkpoints on a target dataset.
    Finetune {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        /// A checkpoint file or a directory of `<method>.ckpt` files.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// NMSE-vs-SNR sweep on the dataset's validation split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also score the `<method>.source.ckpt` copies as `<method>_noft`.
        #[arg(long)]
        no_finetune_baseline: bool,
    },
    /// Sinkhorn-approximated Wasserstein-1 distance between two datasets.
    Wasserstein {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Histogram of pooled channel magnitudes.
    Histogram {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        /// SNR of the LS-LI estimates to histogram; `inf` uses the true channels.
        #[arg(long, default_value = "inf")]
        snr_db: f64,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Upper edge of the last bin; defaults to the largest magnitude.
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, train, fine-tune and evaluate in one go.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the resolved config as JSON.
    PrintConfig {
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

fn load_checked(path: &Path, config: &ExperimentConfig) -> Result<Dataset> {
    let ds = Dataset::load(path)?;
    ds.check_config(config)?;
    Ok(ds)
}

fn report_missing(eval: &pipeline::Evaluation) {
    for (name, why) in &eval.missing {
        eprintln!("warning: {name} not evaluated: {why}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, out, domain } => {
            let config = cfg.load()?;
            let ds = generate_dataset(&config, domain)?;
            ds.save(&out)?;
            println!("wrote {} {domain} samples ({} in outage) to {}", ds.len(), ds.outage_count(), out.display());
        }
        Command::Train { cfg, dataset, out_dir } => {
            let config = cfg.load()?;
            let ds = load_checked(&dataset, &config)?;
            for r in pipeline::train_source(&config, &ds, &out_dir)? {
                println!("{}: final loss {:e} -> {}", r.method, r.losses.last().unwrap_or(f64::NAN), r.checkpoint.display());
            }
        }
        Command::Finetune { cfg, dataset, from, out_dir } => {
            let config = cfg.load()?;
            let ds = load_checked(&dataset, &config)?;
            for r in pipeline::finetune_target(&config, &ds, &from, &out_dir)? {
                println!("{}: final loss {:e} -> {}", r.method, r.losses.last().unwrap_or(f64::NAN), r.checkpoint.display());
            }
        }
        Command::Evaluate { cfg, dataset, ckpt_dir, out, no_finetune_baseline } => {
            let config = cfg.load()?;
            let ds = load_checked(&dataset, &config)?;
            let eval = pipeline::evaluate_sweep(&config, &ds, &ckpt_dir, no_finetune_baseline)?;
            report_missing(&eval);
            write_results_csv(&eval.rows, File::create(&out)?)?;
            println!("wrote {} rows to {}", eval.rows.len(), out.display());
        }
        Command::Wasserstein { a, b, epsilon, max_iter } => {
            let r = dataset_distance(&Dataset::load(&a)?, &Dataset::load(&b)?, epsilon, max_iter)?;
            println!("distance {:e}", r.distance);
            println!("epsilon {:e}", r.epsilon);
            println!("iterations {}", r.iterations);
            println!("converged {}", r.converged);
        }
        Command::Histogram { cfg, dataset, snr_db, bins, max, out } => {
            let config = cfg.load()?;
            let ds = Dataset::load(&dataset)?;
            let snr = (snr_db != f64::INFINITY).then_some(snr_db);
            let h = histogram_magnitudes(&config, &ds, snr, bins, max)?;
            h.write_csv(File::create(&out)?)?;
            println!("wrote {bins} bins over [0, {:e}] to {}", h.max(), out.display());
        }
        Command::Run { cfg, out_dir } => {
            let config = cfg.load()?;
            let o = pipeline::run_experiment(&config, &out_dir)?;
            report_missing(&o.source_eval);
            report_missing(&o.target_eval);
            println!("source results: {}", o.source_csv.display());
            println!("target results: {}", o.target_csv.display());
        }
        Command::PrintConfig { cfg } => println!("{}", cfg.load()?.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
