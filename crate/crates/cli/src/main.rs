use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedmrl::data::gen_synthetic;
use fedmrl::experiment::{run_experiment, ExperimentConfig};
use fedmrl::numerics::Rng;
use fedmrl::Error;

#[derive(Parser)]
#[command(
    name = "fedmrl",
    version,
    about = "Federated Matryoshka representation learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `mode` (fedmrl, standalone, no-mrl; comma list sweeps).
        #[arg(long)]
        mode: Option<String>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// `key=v1,v2,...`; may be repeated.
        #[arg(long)]
        sweep: Vec<String>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a Gaussian-blob dataset as `f0,...,f{D-1},label` CSV.
    GenSynthetic {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            sweep,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(mode) = mode {
                cfg.set("mode", &mode)?;
            }
            if let Some(seed) = seed {
                cfg.set("seed", &seed.to_string())?;
            }
            for s in &sweep {
                cfg.set_sweep(s)?;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir());
            for s in run_experiment(&cfg, &out)? {
                let acc = s
                    .final_avg_acc
                    .map_or("-".to_string(), |a| format!("{a:.4}"));
                println!(
                    "{} mode={} seed={} final_avg_acc={} uplink={} flops={} partition={}",
                    s.stem,
                    s.mode,
                    s.seed,
                    acc,
                    s.total_uplink,
                    s.total_flops,
                    &s.partition_hash[..12]
                );
            }
            Ok(())
        }
        Command::GenSynthetic {
            classes,
            dim,
            per_class,
            spread,
            seed,
            out,
        } => {
            let ds = gen_synthetic(classes, dim, per_class, spread, &mut Rng::new(seed))?;
            ds.save_csv(&out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
