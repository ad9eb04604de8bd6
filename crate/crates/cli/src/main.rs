use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatbound::doubling;
use heatbound::run::{self, Format, RunConfig, Suite};
use heatbound::{Error, ModelSpace, QuadratureSpec};

/// Numerical verification of heat-kernel inequalities on model manifolds.
#[derive(Debug, Parser)]
#[command(name = "heatbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run check suites and write the report.
    Verify(VerifyArgs),
    /// Print the doubling constants for dimensions 1..=nmax.
    Constants {
        #[arg(long, default_value_t = 8)]
        nmax: usize,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// List every check with the suite that runs it.
    List,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Model space, e.g. euclidean:2, sphere:2:1, torus:1,2, hyperbolic3. Repeatable.
    #[arg(long = "space")]
    spaces: Vec<String>,
    /// Suite to run: cd, liyau, entropy, doubling, constants. Repeatable.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Quadrature and series tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long, env = "HEATBOUND_OUT")]
    out: Option<PathBuf>,
    /// Comma separated output formats.
    #[arg(long, value_delimiter = ',')]
    format: Vec<String>,
    /// Seed for random spot points.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Do not print the per-check summary.
    #[arg(long)]
    quiet: bool,
}

fn build_config(args: &VerifyArgs) -> Result<RunConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig { quadrature: QuadratureSpec::default(), ..Default::default() },
    };
    if !args.spaces.is_empty() {
        config.spaces = args
            .spaces
            .iter()
            .map(|s| match s.parse::<ModelSpace>() {
                Err(Error::Config(m)) => Err(Error::Config(m)),
                other => other.map_err(|e| Error::Config(e.to_string())),
            })
            .collect::<Result<_, _>>()?;
    }
    if !args.suites.is_empty() {
        config.suites = args.suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?;
    }
    if let Some(tol) = args.tol {
        config.quadrature.tol = tol;
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    if !args.format.is_empty() {
        config.formats = args.format.iter().map(|s| s.parse::<Format>()).collect::<Result<_, _>>()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    // The constants suite needs no model, but the config contract asks for one.
    if config.spaces.is_empty() && config.suites == [Suite::Constants] {
        config.spaces.push(ModelSpace::euclidean(1)?);
    }
    config.validate()?;
    Ok(config)
}

fn verify(args: &VerifyArgs) -> ExitCode {
    let config = match build_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run::run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if !args.quiet {
        out(&run::format_summary(&report));
    }
    match run::emit(&report, &config.output, &config.formats) {
        Ok(paths) => {
            eprintln!("wrote {} file(s) under {} in {:.2?}", paths.len(), config.output.display(), report.wall_time);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}

fn constants(nmax: usize, json: bool) -> ExitCode {
    if nmax == 0 {
        eprintln!("error: nmax must be at least 1");
        return ExitCode::from(2);
    }
    match doubling::constants_table(nmax, &QuadratureSpec::default()) {
        Ok(rows) => {
            if json {
                match serde_json::to_string_pretty(&rows) {
                    Ok(s) => out(&format!("{s}\n")),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
            } else {
                out(&run::format_constants(&rows));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn list() -> ExitCode {
    let text: String = run::catalog()
        .iter()
        .map(|e| format!("{:<10} {:<30} {}\n", e.suite.as_str(), e.name, e.applies_to))
        .collect();
    out(&text);
    ExitCode::SUCCESS
}

/// Writes to stdout, ignoring a closed pipe.
fn out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify(args) => verify(&args),
        Command::Constants { nmax, json } => constants(nmax, json),
        Command::List => list(),
    }
}
