use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expbound::experiments::run_experiment;
use expbound::experiments::settings::RunSettings;
use expbound::experiments::validate::{run_suite, Suite};
use expbound::models::ModelKind;
use expbound::oracle::{
    fim_closed_form, fim_quadrature, write_rician_fixture, QuadratureSpec, RICIAN_FIXTURE_REL_TOL,
};
use expbound::{Error, StochasticSystem};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Measurement-driven lower bounds on Fisher information.
#[derive(Parser)]
#[command(name = "expbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a parameter grid and write the bound curve.
    Run(Box<RunArgs>),
    /// Run a built-in property suite.
    Validate {
        /// One of tightness, conservativeness, matching, appendix_alpha,
        /// monotonicity.
        #[arg(long)]
        suite: String,
    },
    /// Print the closed-form and quadrature Fisher information of a model.
    Oracle {
        #[arg(long)]
        model: String,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Relative tolerance of the adaptive quadrature.
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
    },
    /// Regenerate the stored Rician Fisher information table.
    RegenFixtures {
        #[arg(long, default_value = "crates/core/tests/data/rician_fim.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines using the flag names below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// saleh, rician, cubic, ref:gauss-mean, ref:gauss-var, ref:exp or
    /// ref:poisson.
    #[arg(long)]
    model: Option<String>,
    /// Saleh gain, Rician angle or cubic input mean.
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Saleh saturation or cubic input variance.
    #[arg(long)]
    b: Option<f64>,
    /// Noise variance of ref:gauss-mean.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Comma-separated statistics, e.g. `z,z2,abs,logabs`.
    #[arg(long)]
    transforms: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    theta_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta_max: Option<f64>,
    #[arg(long)]
    theta_steps: Option<usize>,
    #[arg(long)]
    n_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative finite-difference step.
    #[arg(long)]
    fd_step: Option<f64>,
    /// truncated or ridge.
    #[arg(long)]
    reg_mode: Option<String>,
    #[arg(long)]
    reg_tol: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

impl RunArgs {
    fn settings(&self) -> RunSettings {
        RunSettings {
            model: self.model.clone(),
            a: self.a,
            b: self.b,
            sigma2: self.sigma2,
            transforms: self.transforms.clone(),
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            theta_steps: self.theta_steps,
            n_samples: self.n_samples,
            seed: self.seed,
            fd_step: self.fd_step,
            reg_mode: self.reg_mode.clone(),
            reg_tol: self.reg_tol,
            threads: self.threads,
            csv: self.csv.clone(),
            svg: self.svg.clone(),
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse(_) | Error::Validation(_) | Error::Domain { .. } | Error::Unsupported(_) => {
            EXIT_USAGE
        }
        _ => EXIT_FAILED,
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let base = match &args.config {
        Some(path) => RunSettings::from_file(path).map_err(|err| match err {
            Error::Io { .. } => Error::Validation(format!("cannot read config: {err}")),
            other => other,
        })?,
        None => RunSettings::default(),
    };
    let configs = base.overlay(args.settings()).resolve()?;
    let mut failure = None;
    for config in &configs {
        eprintln!("{}", config.echo().trim_end().replace('\n', "; "));
        match run_experiment(config) {
            Ok(curve) => {
                eprintln!(
                    "{} [{}]: {} points, {} flagged{}",
                    curve.label,
                    curve.fingerprint,
                    curve.points.len(),
                    curve.flagged(),
                    config
                        .csv
                        .as_ref()
                        .map(|p| format!(", csv {}", p.display()))
                        .unwrap_or_default()
                );
                if config.csv.is_none() {
                    print!("{}", expbound::experiments::output::csv_string(&curve)?);
                }
            }
            Err(err @ Error::RunFailed { .. }) => {
                eprintln!("error: {} ({})", err, config.model.name());
                failure = Some(err);
            }
            Err(err) => return Err(err),
        }
    }
    failure.map_or(Ok(()), Err)
}

fn oracle(
    model: &str,
    theta: f64,
    a: Option<f64>,
    b: Option<f64>,
    sigma2: Option<f64>,
    rel_tol: f64,
) -> Result<(), Error> {
    let settings = RunSettings {
        model: Some(model.to_string()),
        a,
        b: b.or(if model == "cubic" { Some(1.0) } else { None }),
        sigma2,
        ..Default::default()
    };
    let model = settings.models()?.remove(0);
    model.check_theta(theta)?;
    let spec = QuadratureSpec::with_rel_tol(rel_tol);
    spec.validate()?;
    let quadrature = fim_quadrature(&model, theta, &spec)?;
    print!(
        "{} theta={theta}: quadrature={quadrature:.12e}",
        model.name()
    );
    if let Ok(input) = fim_closed_form(&model, theta) {
        print!(" input_fisher={input:.12e}");
        // For the reference families the output is the input.
        if let ModelKind::Reference(_) = model.kind() {
            print!(" rel_diff={:.3e}", (quadrature / input - 1.0).abs());
        }
    }
    println!();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate { suite } => match suite.parse::<Suite>().and_then(run_suite) {
            Ok(report) => {
                print!("{report}");
                println!("worst margin {:.3e}", report.worst_margin());
                return if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_FAILED)
                };
            }
            Err(err) => Err(err),
        },
        Command::Oracle {
            model,
            theta,
            a,
            b,
            sigma2,
            rel_tol,
        } => oracle(model, *theta, *a, *b, *sigma2, *rel_tol),
        Command::RegenFixtures { out } => {
            write_rician_fixture(out, RICIAN_FIXTURE_REL_TOL).map(|()| {
                println!("wrote {}", out.display());
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if !matches!(err, Error::RunFailed { .. }) {
                eprintln!("error: {err}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
