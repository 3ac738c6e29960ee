use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drrs_harness::config::{ExperimentConfig, InstanceSpec, Overrides};
use drrs_harness::suites::{self, SuiteReport};
use drrs_harness::verify::{self, VerifyReport};
use drrs_harness::{HarnessError, Runner};

/// Distributionally robust ranking and selection experiments.
#[derive(Parser)]
#[command(name = "drrs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Master seed; overrides budget.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Macro-replications per cell; overrides budget.replications.
    #[arg(long, global = true)]
    reps: Option<u64>,
    /// Worker threads (default: one per CPU). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plots: bool,
    /// Use k = 10, m = 5 for the sc and mm presets.
    #[arg(long, global = true)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured procedure over the budget grid.
    Run { config: PathBuf },
    /// Run one experiment suite.
    Suite {
        #[arg(value_enum)]
        suite: SuiteKind,
        config: PathBuf,
    },
    /// Check the AA bounds; exits with 2 if a check fails.
    Verify {
        #[arg(value_enum)]
        kind: VerifyKind,
        config: PathBuf,
    },
    /// Estimate a testbed's ground-truth means.
    Testbed {
        #[arg(value_enum)]
        kind: TestbedKind,
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteKind {
    PicsDecay,
    Allocation,
    GaaConsistency,
    Compare,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyKind {
    Bounds,
    /// Pathwise check of the best alternative's k-step count.
    #[value(alias = "lemma1")]
    KSteps,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestbedKind {
    Inventory,
    Queue,
}

enum Outcome {
    Suite(SuiteReport),
    Verify(VerifyReport),
}

fn config_error(msg: String) -> HarnessError {
    drrs_harness::ConfigError::Invalid(vec![msg]).into()
}

fn execute(cli: Cli) -> Result<Outcome, HarnessError> {
    let path = match &cli.command {
        Command::Run { config } | Command::Suite { config, .. } | Command::Verify { config, .. } | Command::Testbed { config, .. } => config,
    };
    let mut config = ExperimentConfig::load(path)?;
    let f = &cli.flags;
    config.apply(&Overrides {
        seed: f.seed,
        reps: f.reps,
        workers: f.workers,
        out: f.out.clone(),
        plots: f.plots,
        full_scale: f.full_scale,
    });
    let need_procedures = matches!(cli.command, Command::Run { .. } | Command::Suite { .. });
    config.validate(need_procedures)?;
    if let Command::Testbed { kind, .. } = cli.command {
        let matches = matches!(
            (kind, &config.instance),
            (TestbedKind::Inventory, InstanceSpec::Inventory(_)) | (TestbedKind::Queue, InstanceSpec::Queue(_))
        );
        if !matches {
            return Err(config_error("the testbed command needs an instance with the matching preset".to_string()));
        }
    }
    if matches!(cli.command, Command::Verify { .. }) && config.instance.is_testbed() {
        return Err(config_error("verify needs a normal instance (preset sc, mm or explicit)".to_string()));
    }
    let prepared = config.instance.build()?;
    let runner = Runner::new(config.budget.workers)?;
    Ok(match cli.command {
        Command::Run { .. } => {
            let out = drrs_harness::run_experiment(&config, &prepared, &runner)?;
            let lines = out
                .cells
                .iter()
                .map(|c| {
                    let e = c.estimate();
                    format!("{} N={}: PCS {:.4} (SE {:.4}, R = {})", e.procedure, e.budget, e.pcs_hat, e.se, e.replications)
                })
                .collect();
            Outcome::Suite(SuiteReport { files: out.files, lines })
        }
        Command::Suite { suite, .. } => Outcome::Suite(match suite {
            SuiteKind::PicsDecay => suites::pics_decay(&config, &prepared, &runner)?,
            SuiteKind::Allocation => suites::allocation(&config, &prepared, &runner)?,
            SuiteKind::GaaConsistency => suites::gaa_consistency(&config, &prepared, &runner)?,
            SuiteKind::Compare => suites::compare(&config, &prepared, &runner)?,
        }),
        Command::Verify { kind, .. } => Outcome::Verify(match kind {
            VerifyKind::Bounds => verify::verify_bounds(&config, &prepared, &runner)?,
            VerifyKind::KSteps => verify::verify_k_steps(&config, &prepared, &runner)?,
        }),
        Command::Testbed { .. } => {
            let reps = match &config.instance {
                InstanceSpec::Inventory(s) => s.truth_reps,
                InstanceSpec::Queue(s) => s.truth_reps,
                _ => unreachable!("checked above"),
            };
            Outcome::Suite(suites::testbed(&config, &prepared, reps)?)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(Outcome::Suite(report)) => {
            for line in &report.lines {
                println!("{line}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Ok(Outcome::Verify(report)) => {
            for c in &report.checks {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                println!("{verdict}  {}: statistic {:.6}, bound {:.6}, margin {:.6}", c.name, c.statistic, c.bound, c.margin);
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
