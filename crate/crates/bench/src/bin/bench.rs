use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modalpath_bench::output::write_grid_check_csv;
use modalpath_bench::runner::Stage;
use modalpath_bench::validate::validate;
use modalpath_bench::{emit_csv, emit_plot, parse_methods, run_benchmark, BenchConfig, BenchError, ModelKind};

#[derive(Parser)]
#[command(name = "bench", about = "Modal path estimation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trials, run the estimators and write CSV/SVG results.
    Run {
        #[arg(long, default_value = "ricker")]
        model: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 128)]
        horizon: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "amp,klf,iplf")]
        methods: String,
        #[arg(long, default_value = "./results")]
        out: PathBuf,
        /// Cross-check AMP against exact grid dynamic programming at reduced horizon.
        #[arg(long)]
        grid_check: bool,
    },
    /// Run the linear-Gaussian and grid-recursion oracle suites.
    Validate {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run {
            model,
            trials,
            horizon,
            seed,
            methods,
            out,
            grid_check,
        } => {
            let config = BenchConfig {
                model: model.parse::<ModelKind>()?,
                horizon,
                trials,
                master_seed: seed,
                methods: parse_methods(&methods)?,
                out_dir: out,
                grid_check,
                threads: None,
            };
            config.validate()?;
            let result = run_benchmark(&config)?;
            emit_csv(&result.trials, &result.summary, &config.out_dir)?;
            emit_plot(&result.summary, &config.out_dir)?;
            let s = &result.summary;
            println!(
                "{} trials ({} excluded after estimator failure), horizon {}",
                s.included_trials + s.failed_trials,
                s.failed_trials,
                s.horizon
            );
            println!("{:<6} {:>14} {:>14} {:>14} {:>14}", "method", "filter med", "filter q90", "smooth med", "smooth q90");
            for &m in &s.methods {
                println!(
                    "{:<6} {:>14.5} {:>14.5} {:>14.5} {:>14.5}",
                    m.label(),
                    s.mean_median(m, Stage::Filter),
                    s.mean_q90(m, Stage::Filter),
                    s.mean_median(m, Stage::Smoother),
                    s.mean_q90(m, Stage::Smoother)
                );
            }
            if let Some(rows) = &result.grid_check {
                write_grid_check_csv(rows, &config.out_dir.join("grid_check.csv"))?;
                let agree = rows.iter().filter(|r| r.recursions_agree).count();
                println!("grid check: recursions agree on {agree}/{} trials", rows.len());
            }
            println!("results written to {}", config.out_dir.display());
            Ok(())
        }
        Command::Validate { seed } => {
            let report = validate(seed)?;
            for c in &report.checks {
                println!("[{}] {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            report.into_result().map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
