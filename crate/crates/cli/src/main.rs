use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fris_isac::experiments::run_experiment;
use fris_isac::{parse_config, Error, ExperimentKind, SchemeKind};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

#[derive(Parser)]
#[command(name = "fris-isac", version, about = "Fluid-RIS ISAC design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// convergence, n-sweep, beampattern, ber, region-sweep or table1.
        #[arg(long)]
        experiment: Option<String>,
        /// Comma-separated subset of proposed, conven, dps, rand.
        #[arg(long, value_delimiter = ',')]
        scheme: Option<Vec<String>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn config_error(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match parse_config(&config).and_then(|(c, s)| {
            c.validate()?;
            s.validate()?;
            Ok((c, s))
        }) {
            Ok((_, spec)) => {
                println!("ok: {} experiment, {} trials", spec.kind.name(), spec.trials);
                ExitCode::SUCCESS
            }
            Err(e) => config_error(&e),
        },
        Command::Run {
            config,
            experiment,
            scheme,
            trials,
            seed,
            out,
        } => {
            let (mut config, mut spec) = match parse_config(&config) {
                Ok(parsed) => parsed,
                Err(e) => return config_error(&e),
            };
            if let Some(name) = experiment {
                let Some(kind) = ExperimentKind::parse(&name) else {
                    return config_error(&Error::Config {
                        key: "--experiment".into(),
                        message: format!("unknown experiment `{name}`"),
                    });
                };
                if kind != spec.kind {
                    // A sweep written for another experiment has different units.
                    spec.sweep.clear();
                    spec.kind = kind;
                }
            }
            if let Some(names) = scheme {
                let mut schemes = Vec::with_capacity(names.len());
                for name in names {
                    match SchemeKind::parse(name.trim()) {
                        Some(s) => schemes.push(s),
                        None => {
                            return config_error(&Error::Config {
                                key: "--scheme".into(),
                                message: format!("unknown scheme `{name}`"),
                            })
                        }
                    }
                }
                spec.schemes = schemes;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(dir) = out {
                spec.output = dir;
            }
            if let Err(e) = config.validate().and_then(|_| spec.validate()) {
                return config_error(&e);
            }

            let out_dir = spec.output.clone();
            match run_experiment(&config, &spec, &out_dir) {
                Ok(output) => {
                    println!("wrote {}", output.csv_path.display());
                    println!("wrote {}", output.manifest_path.display());
                    if output.manifest.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        for failure in &output.manifest.failures {
                            eprintln!("solver failure: {failure}");
                        }
                        ExitCode::from(EXIT_SOLVER)
                    }
                }
                Err(e @ Error::Config { .. }) => config_error(&e),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_SOLVER)
                }
            }
        }
    }
}
