use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netopt_core::network::{generate_er_instance, ErParams};
use netopt_harness::{fit_metrics, run_experiment, run_sweep, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "netopt",
    version,
    about = "Joint congestion control, routing and scheduling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment once per parameter value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of tau, rho, k.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Fit the linear convergence rate of a metrics CSV.
    Fit {
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Generate a seeded Erdős–Rényi instance.
    Gen {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        flows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let result = ExperimentConfig::load(&config).and_then(|cfg| run_experiment(&cfg));
            match result {
                Ok(res) => {
                    println!(
                        "{}",
                        serde_json::to_string(&res.summary).expect("summary serializes")
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let runs = match ExperimentConfig::load(&config)
                .and_then(|cfg| run_sweep(&cfg, &param, &values))
            {
                Ok(runs) => runs,
                Err(e) => return fail(&e),
            };
            // the worst exit code of the sweep wins
            let mut code = 0;
            for (value, res) in runs {
                match res {
                    Ok(res) => println!(
                        "{param}={value} {}",
                        serde_json::to_string(&res.summary).expect("summary serializes")
                    ),
                    Err(e) => {
                        eprintln!("{param}={value} error: {e}");
                        code = code.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(code as u8)
        }
        Command::Fit { metrics } => match fit_metrics(&metrics) {
            Ok((slope, r2)) => {
                println!("{}", serde_json::json!({ "slope": slope, "r2": r2 }));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Gen {
            nodes,
            p,
            flows,
            seed,
            out,
        } => {
            let res = generate_er_instance(&ErParams::new(nodes, p, flows, seed))
                .and_then(|inst| inst.save(&out));
            match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e.into()),
            }
        }
    }
}
