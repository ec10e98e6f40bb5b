use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tubecalc::cli::{self, Format};
use tubecalc::quadrature::Levels;
use tubecalc::validation::{format_table, summarize, ValidationLevel, ValidationOptions};

#[derive(Parser)]
#[command(name = "tubecalc", version, about = "Thick distributions on tubular neighbourhoods")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Run the built-in acceptance suite.
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        level: LevelArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Restrict to these criteria (repeatable).
        #[arg(long = "criterion")]
        criteria: Vec<u8>,
        #[arg(long)]
        sigma_level: Option<usize>,
        #[arg(long)]
        fiber_level: Option<usize>,
        #[arg(long)]
        radial_points: Option<usize>,
    },
}

fn fail(e: &tubecalc::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(cli::error_code(e) as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = cli::init_threads() {
        return fail(&e);
    }
    match args.command {
        Command::Run { scenario, out, format } => {
            let sc = match std::fs::read_to_string(&scenario)
                .map_err(|e| tubecalc::Error::schema("(file)", format!("cannot read {}: {e}", scenario.display())))
                .and_then(|t| cli::parse_scenario(&t))
            {
                Ok(sc) => sc,
                Err(e) => return fail(&e),
            };
            let format = format.map(Format::from).unwrap_or(sc.output.format);
            let path = out.or_else(|| sc.output.path.clone());
            let result = cli::execute(&sc);
            let report = match &result {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = cli::emit_report(report, format, path.as_deref()) {
                return fail(&e);
            }
            ExitCode::from(cli::exit_code(&result) as u8)
        }
        Command::Validate {
            level,
            out,
            format,
            criteria,
            sigma_level,
            fiber_level,
            radial_points,
        } => {
            let level = match level {
                LevelArg::Quick => ValidationLevel::Quick,
                LevelArg::Full => ValidationLevel::Full,
            };
            let base = level.levels();
            let overridden = sigma_level.is_some() || fiber_level.is_some() || radial_points.is_some();
            let opts = ValidationOptions {
                level,
                levels: overridden.then(|| Levels {
                    sigma_level: sigma_level.unwrap_or(base.sigma_level),
                    fiber_level: fiber_level.unwrap_or(base.fiber_level),
                    radial_points: radial_points.unwrap_or(base.radial_points),
                }),
            };
            let (rows, report) = cli::validate(&opts, &criteria);
            print!("{}", format_table(&rows));
            for (c, title, pass, total) in summarize(&rows) {
                println!("criterion {c} ({title}): {pass}/{total}");
            }
            if let Some(path) = out {
                if let Err(e) = cli::emit_report(&report, format.map(Format::from).unwrap_or_default(), Some(&path)) {
                    return fail(&e);
                }
            }
            ExitCode::from(if report.all_pass() { cli::EXIT_OK } else { cli::EXIT_NUMERICAL } as u8)
        }
    }
}
