use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use metallic::catalog::{catalog_list, parse_assignments};
use metallic::error::Result;
use metallic::immersion::DerivativeMode;
use metallic::run::{analyze, exit_code, run, RunConfig, Suite, Tolerances};

#[derive(Parser)]
#[command(name = "metallic", version, about = "Induced structures on submanifolds of metallic Riemannian manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List catalog entries with their parameters and expected classification.
    Catalog,
    /// Induced structure at sample points and slant classification.
    Analyze(RunArgs),
    /// Run verification suites.
    Verify {
        #[command(flatten)]
        args: RunArgs,
        /// Suites to run (repeatable or comma separated); default all.
        #[arg(long, value_enum, value_delimiter = ',')]
        suite: Vec<SuiteArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    #[value(alias = "fd")]
    CentralDifference,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Structure,
    Slant,
    Connection,
    Inheritance,
    All,
}

#[derive(Args)]
struct RunArgs {
    /// Catalog entry name.
    entry: String,
    /// Entry parameters as key=value.
    params: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, value_enum, default_value = "analytic")]
    mode: ModeArg,
    /// Seeded directions per sample for slant angles, beyond the frame axes.
    #[arg(long, default_value_t = 8)]
    directions: usize,
    #[arg(long)]
    tol_linear: Option<f64>,
    #[arg(long)]
    tol_analytic: Option<f64>,
    #[arg(long)]
    tol_fd: Option<f64>,
    #[arg(long)]
    tol_connection: Option<f64>,
    #[arg(long)]
    tol_angle: Option<f64>,
    #[arg(long)]
    tol_class: Option<f64>,
    #[arg(long)]
    tol_oracle: Option<f64>,
    #[arg(long)]
    tol_inheritance: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, suites: &[SuiteArg]) -> Result<RunConfig> {
        let mut t = Tolerances::default();
        let overrides = [
            (&mut t.linear, self.tol_linear),
            (&mut t.analytic, self.tol_analytic),
            (&mut t.fd, self.tol_fd),
            (&mut t.connection, self.tol_connection),
            (&mut t.angle, self.tol_angle),
            (&mut t.class, self.tol_class),
            (&mut t.oracle, self.tol_oracle),
            (&mut t.inheritance, self.tol_inheritance),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let suites = if suites.iter().any(|s| matches!(s, SuiteArg::All)) {
            Vec::new()
        } else {
            suites
                .iter()
                .map(|s| match s {
                    SuiteArg::Structure => Suite::Structure,
                    SuiteArg::Slant => Suite::Slant,
                    SuiteArg::Connection => Suite::Connection,
                    SuiteArg::Inheritance => Suite::Inheritance,
                    SuiteArg::All => unreachable!(),
                })
                .collect()
        };
        let config = RunConfig {
            entry: self.entry.clone(),
            params: parse_assignments(&self.params)?,
            samples: self.samples,
            seed: self.seed,
            mode: match self.mode {
                ModeArg::Analytic => DerivativeMode::Analytic,
                ModeArg::CentralDifference => DerivativeMode::CentralDifference,
            },
            tolerances: t,
            suites,
            extra_directions: self.directions,
            out: self.out.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Catalog => {
            print!("{}", catalog_list());
            Ok(true)
        }
        Command::Analyze(args) => {
            let report = analyze(&args.config(&[])?)?;
            println!("{} {:?}", report.metadata.entry, report.metadata.parameters);
            println!("pointwise classes: {:?}", report.pointwise_classes);
            println!(
                "classification: {:?} (mean angle {:.12}, spread {:e}, lambda {:.12})",
                report.slant.classification, report.slant.mean_theta, report.slant.max_deviation, report.slant.lambda_hat
            );
            if args.out.is_none() {
                print!("{}", report.to_json());
            }
            Ok(true)
        }
        Command::Verify { args, suite } => {
            let report = run(&args.config(&suite)?)?;
            print!("{}", report.summary());
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

