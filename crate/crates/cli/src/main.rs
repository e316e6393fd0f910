use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use maxmin_cli::{
    generate_instance, read_allocation, read_instance, run_gap, solve, verify, write_json,
    write_lines, CliError, GapOptions, GeneratorKind, Outcome, SolveOptions, TargetSpec,
    EXIT_BELOW_THRESHOLD, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK,
};
use maxmin_core::clp::DEFAULT_BREAKPOINT_BUDGET;
use maxmin_core::matching::EdgePolicy;
use maxmin_core::{parse_rational, Rational};

#[derive(Parser)]
#[command(
    name = "maxmin",
    version,
    about = "Restricted max-min fair allocation with exact arithmetic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    FatThinMix,
    ClusteredDesire,
}

impl From<Kind> for GeneratorKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Uniform => GeneratorKind::Uniform,
            Kind::FatThinMix => GeneratorKind::FatThinMix,
            Kind::ClusteredDesire => GeneratorKind::ClusteredDesire,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Compute T*, run the local search and print a report.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// `auto` for T*, or a rational target.
        #[arg(long, default_value = "auto")]
        target: TargetSpec,
        /// Bracket T* to this width when exact enumeration is over budget.
        /// A bare `--delta` means 1/1000.
        #[arg(long, value_parser = rational, num_args = 0..=1, default_missing_value = "1/1000")]
        delta: Option<Rational>,
        /// Write one JSON record per search step here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Use the seeded random edge policy instead of the canonical one.
        #[arg(long)]
        seed: Option<u64>,
        /// Subset sums exact T* may enumerate.
        #[arg(long, default_value_t = DEFAULT_BREAKPOINT_BUDGET)]
        budget: usize,
        /// Write the allocation here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure T*/OPT and the achieved ratio on generated instances.
    Gap {
        #[arg(long, value_enum, default_value = "uniform")]
        kind: Kind,
        #[arg(long, default_value_t = 4)]
        players: usize,
        #[arg(long, default_value_t = 8)]
        resources: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BREAKPOINT_BUDGET)]
        budget: usize,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Generate an instance.
    Gen {
        #[arg(long, value_enum, default_value = "uniform")]
        kind: Kind,
        #[arg(long)]
        players: usize,
        #[arg(long)]
        resources: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print an allocation's exact min value and compare it to a threshold.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long, value_parser = rational, default_value = "0")]
        threshold: Rational,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve {
            instance,
            target,
            delta,
            trace,
            seed,
            budget,
            out,
        } => {
            let instance = read_instance(&instance)?;
            let options = SolveOptions {
                target,
                delta,
                budget,
                policy: seed.map_or(EdgePolicy::Canonical, EdgePolicy::Seeded),
                trace: trace.is_some(),
            };
            let result = solve(&instance, &options)?;
            if let Some(path) = &trace {
                let lines: Vec<String> = result
                    .trace
                    .iter()
                    .map(|r| serde_json::to_string(r).expect("serializable"))
                    .collect();
                write_lines(path, &lines)?;
            }
            if let (Some(path), Some(allocation)) = (&out, &result.allocation) {
                write_json(path, &allocation.to_names(&instance))?;
                // Re-read what was written and check it again.
                let reread = read_allocation(path, &instance)?;
                let threshold = maxmin_core::lambda() * &result.target;
                if !verify(&instance, &reread, &threshold)?.passed {
                    return Err(CliError::SelfAudit(format!(
                        "{} fails its own guarantee",
                        path.display()
                    )));
                }
            }
            print_json(&result.report);
            Ok(match result.report.outcome {
                Outcome::Allocated => EXIT_OK,
                Outcome::CertifiedInfeasible => EXIT_INFEASIBLE,
            })
        }
        Command::Gap {
            kind,
            players,
            resources,
            trials,
            seed,
            budget,
            format,
        } => {
            let table = run_gap(&GapOptions {
                kind: kind.into(),
                players,
                resources,
                trials,
                seed,
                budget,
            })?;
            match format {
                Format::Table => print!("{}", table.to_tsv()),
                Format::Json => print_json(&table),
            }
            Ok(EXIT_OK)
        }
        Command::Gen {
            kind,
            players,
            resources,
            seed,
            out,
        } => {
            let instance = generate_instance(kind.into(), players, resources, seed)?;
            match out {
                Some(path) => write_json(&path, &instance.to_raw())?,
                None => print_json(&instance.to_raw()),
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            instance,
            allocation,
            threshold,
        } => {
            let instance = read_instance(&instance)?;
            let allocation = read_allocation(&allocation, &instance)?;
            let report = verify(&instance, &allocation, &threshold)?;
            print_json(&report);
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_BELOW_THRESHOLD
            })
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage errors exit with 2, which is taken by infeasibility.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INPUT as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
