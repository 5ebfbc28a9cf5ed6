//! `mfwno` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{Ablation, ExperimentConfig};
use super::experiment::{evaluate_run, generate_data, read_results, report, run_experiment, save_data, sweep, RESULTS_FILE};
use super::{HarnessError, Result};
use crate::mf::LfSourceKind;
use crate::problems::ProblemId;

#[derive(Debug, Parser)]
#[command(name = "mfwno", version, about = "Multi-fidelity wavelet neural operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate training, test and low-fidelity data into --out.
    GenData(RunArgs),
    /// Run one experiment: train the surrogates and evaluate them.
    Train(RunArgs),
    /// Recompute a finished run's results from its stored config, data and surrogates.
    Evaluate(OutArg),
    /// Collect the results of finished runs under --out into report.csv.
    Report(OutArg),
    /// Run one experiment per high-fidelity dataset size.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated sizes; defaults to the problem's table sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
}

#[derive(Debug, Args)]
struct OutArg {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Problem preset; required unless --config names one.
    #[arg(long, required_unless_present = "config")]
    problem: Option<ProblemId>,
    #[arg(long)]
    n_lf: Option<usize>,
    #[arg(long)]
    n_hf: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["analytic", "solver", "wno"])]
    lf_source: Option<String>,
    #[arg(long, value_enum)]
    ablation: Option<Ablation>,
    /// Load pre-generated data from this directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training epochs for every network.
    #[arg(long)]
    epochs: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, self.problem) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(p)) => ExperimentConfig::preset(p),
            (None, None) => return Err(HarnessError::Config("need --problem or --config".into())),
        };
        if let Some(p) = self.problem {
            if p != c.problem {
                return Err(HarnessError::Config(format!("--problem {p} contradicts the config's {}", c.problem)));
            }
        }
        if let Some(v) = self.n_lf {
            c.n_lf = v;
        }
        if let Some(v) = self.n_hf {
            c.n_hf = v;
        }
        if let Some(v) = self.n_test {
            c.n_test = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.lf_source {
            c.lf_source = v.parse::<LfSourceKind>().map_err(HarnessError::Config)?;
        }
        if self.ablation.is_some() {
            c.ablation = self.ablation;
        }
        if let Some(v) = &self.data_dir {
            c.data_dir = Some(v.clone());
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
            c.lf_train.epochs = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(args) => {
            let c = args.resolve()?;
            let data = generate_data(&c)?;
            save_data(&c.out, &c, &data)?;
            println!(
                "wrote {} training, {} test and {} low-fidelity samples to {}",
                data.hf.len(),
                data.test.len(),
                data.lf.as_ref().map_or(0, |d| d.len()),
                c.out.display()
            );
        }
        Command::Train(args) => {
            let c = args.resolve()?;
            let outcome = run_experiment(&c)?;
            println!("{}", super::RESULTS_HEADER);
            println!("{}", outcome.row.to_csv());
        }
        Command::Evaluate(OutArg { out }) => {
            let row = evaluate_run(&out)?;
            println!("{}", super::RESULTS_HEADER);
            println!("{}", row.to_csv());
            let stored = read_results(&out.join(RESULTS_FILE))?;
            if stored.first() != Some(&row) {
                return Err(HarnessError::Config(format!(
                    "recomputed row differs from {}",
                    out.join(RESULTS_FILE).display()
                )));
            }
        }
        Command::Report(OutArg { out }) => {
            let rows = report(&out)?;
            println!("{}", super::RESULTS_HEADER);
            for r in rows {
                println!("{}", r.to_csv());
            }
        }
        Command::Sweep { run, sizes } => {
            let c = run.resolve()?;
            let sizes = if sizes.is_empty() {
                c.problem.sweep_sizes().to_vec()
            } else {
                sizes
            };
            let rows = sweep(&c, &sizes)?;
            println!("{}", super::RESULTS_HEADER);
            for r in rows {
                println!("{}", r.to_csv());
            }
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 when a run fails and 2 for usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
