use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ppgrisk::pipeline::{self, Overrides, RunConfig};
use ppgrisk::Result;

#[derive(Parser)]
#[command(name = "ppgrisk", version, about = "PPG-based ten-year cardiovascular risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the simulation, encoder and evaluation seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated model names.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Non-inferiority margin on the C-statistic, absolute units.
    #[arg(long, global = true, allow_negative_numbers = true)]
    margin: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort, waveform store and truth file.
    Simulate,
    /// Train the waveform encoder and fit the embedding PCA.
    Train,
    /// Fit every Cox model and pick the ridge penalty on the tune split.
    Fit,
    /// Score the test split and write the evaluation report.
    Evaluate,
    /// Print the evaluation report as text tables.
    Report,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        models: cli.models.clone(),
        margin: cli.margin,
    });
    cfg.validate()?;
    match cli.command {
        Command::Simulate => {
            let s = pipeline::cmd_simulate(&cfg)?;
            println!(
                "simulated {} subjects ({} events) -> {}, {}",
                s.n_subjects,
                s.n_events,
                s.cohort_path.display(),
                s.waveform_path.display()
            );
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!(
                "trained on {} subjects, tuned on {}; selected epoch {}",
                s.n_train, s.n_tune, s.log.best_epoch
            );
        }
        Command::Fit => {
            for f in pipeline::cmd_fit(&cfg)? {
                println!(
                    "{:<20} lambda={:<8} n={:<6} events={:<5} tune_loglik={:.3}{}",
                    f.model,
                    f.lambda,
                    f.n_train,
                    f.n_train_events,
                    f.tune_partial_loglik,
                    if f.converged { "" } else { " (not converged)" }
                );
            }
        }
        Command::Evaluate => {
            let r = pipeline::cmd_evaluate(&cfg)?;
            println!(
                "evaluated {} models on {} test subjects -> {}",
                r.models.len(),
                r.n_subjects,
                cfg.out_dir.join(pipeline::REPORT_FILE).display()
            );
        }
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
