use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jacprune::analysis::ScanOptions;
use jacprune::criteria::CriterionKind;
use jacprune::pipeline::{self, Overrides, PipelineError, StartFrom};

#[derive(Parser)]
#[command(name = "jacprune", version, about = "Prune, train and analyze sparse recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score the initial parameters and write the top-K mask.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sparsity: Option<f64>,
        /// jacobian | snip | foresight | random | magnitude
        #[arg(long)]
        criterion: Option<CriterionKind>,
    },
    /// Train from a mask file, a dense init, or the last checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "resume")]
        mask: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
    },
    /// Jacobian spectrum and connectivity of a checkpoint or parameter file.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory or parameter file; the initialization when omitted.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
    },
    /// Prune and train every criterion × seed cell and tabulate validation error.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "jacobian,snip,foresight,random")]
        criteria: Vec<CriterionKind>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides { seed: c.seed, out_dir: c.out.clone(), ..Default::default() }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Prune { common, sparsity, criterion } => {
            let o = Overrides { sparsity, criterion, ..overrides(&common) };
            let cfg = pipeline::load_config(&common.config, &o)?;
            let out = pipeline::cmd_prune(&cfg)?;
            let s = &out.sidecar;
            println!(
                "{}: kept {} of {} in {:.1} ms -> {}",
                s.criterion,
                s.retained,
                s.param_count,
                s.timing_ms,
                out.mask_path.display()
            );
        }
        Command::Train { common, mask, resume } => {
            let cfg = pipeline::load_config(&common.config, &overrides(&common))?;
            let start = match (mask, resume) {
                (Some(m), _) => StartFrom::Mask(m),
                (None, true) => StartFrom::Resume,
                (None, false) => StartFrom::Dense,
            };
            let out = pipeline::cmd_train(&cfg, &start)?;
            let err = out.final_val_error().map_or("-".to_string(), |e| format!("{e:.2}%"));
            println!("step {}: val error {err} -> {}", out.state.step, out.checkpoint_dir.display());
        }
        Command::Analyze { common, from, horizon } => {
            let cfg = pipeline::load_config(&common.config, &overrides(&common))?;
            let opts = ScanOptions { horizon, ..Default::default() };
            let out = pipeline::cmd_analyze(&cfg, from.as_deref(), &opts)?;
            let s = &out.spectrum.summary;
            let ir = out.connectivity.ir_ratio.map_or("inf".to_string(), |r| format!("{r:.4}"));
            println!(
                "mean sigma {:.4}, {:.1}% below {}, chi {:.4}, I/R {ir}",
                s.mean_sigma,
                100.0 * s.frac_near_zero,
                s.near_zero,
                s.chi
            );
        }
        Command::Compare { common, criteria, seeds } => {
            let cfg = pipeline::load_config(&common.config, &overrides(&common))?;
            let summary = pipeline::cmd_compare(&cfg, &criteria, &seeds)?;
            for r in &summary.rows {
                println!("{:<10} {:>3} runs  {}", r.criterion, r.runs, r.display);
            }
            for (c, s, why) in &summary.missing {
                eprintln!("missing {c} seed {s}: {why}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jacprune: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
