// Runs the file-based pipeline from simulation to the text report in a
// scratch directory.

use ppgrisk::pipeline::{cmd_evaluate, cmd_fit, cmd_report, cmd_simulate, cmd_train, RunConfig};
use ppgrisk::Result;

pub fn run_example() -> Result<()> {
    let dir = tempfile::tempdir().map_err(|e| ppgrisk::Error::io(std::env::temp_dir(), e))?;
    let mut cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    cfg.simulation.n_subjects = 1500;
    cfg.encoder.epochs = 3;
    cfg.evaluation.bootstrap_iterations = 100;
    cfg.evaluation.permutation_iterations = 100;
    cfg.validate()?;

    let sim = cmd_simulate(&cfg)?;
    println!("simulated {} subjects with {} events", sim.n_subjects, sim.n_events);
    let trained = cmd_train(&cfg)?;
    println!("encoder: {} train subjects, best epoch {}", trained.n_train, trained.log.best_epoch);
    for f in cmd_fit(&cfg)? {
        println!("fit {:<20} lambda {}", f.model, f.lambda);
    }
    cmd_evaluate(&cfg)?;
    print!("{}", cmd_report(&cfg)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
