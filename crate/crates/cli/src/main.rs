//! `jointsa`: fit joint mean/dispersion metamodels, estimate Sobol indices
//! and run the Ishigami benchmark.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jointsa::{Error, Result};

use commands::{BenchArgs, BenchName, FitArgs, SobolArgs};
use config::{load_config, DistsConfig};

#[derive(Parser)]
#[command(name = "jointsa", version, about = "Joint metamodels and Sobol indices for stochastic computer codes")]
struct Cli {
    /// TOML file with [fit], [sobol] and [bench] sections; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a joint model to a CSV file and write model.jsa plus a summary.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Response column (default: last column).
        #[arg(long)]
        response: Option<String>,
        #[arg(long, value_parser = ["glm", "gam", "gp"])]
        engine: Option<String>,
        /// e.g. "1 + x1 + s(x1) + s(x2)".
        #[arg(long)]
        mean_terms: Option<String>,
        /// e.g. "1 + s(x1)".
        #[arg(long)]
        disp_terms: Option<String>,
        /// gaussian, gamma, poisson or binomial.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        max_outer_iter: Option<usize>,
        /// Fit the dispersion to leave-one-out residuals.
        #[arg(long)]
        loo: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate Sobol indices of a fitted joint model.
    Sobol {
        #[arg(long)]
        model: Option<PathBuf>,
        /// e.g. "x1=U(-pi,pi); x2=U(-pi,pi)".
        #[arg(long)]
        dists: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated labels: S1, S12, S3_14, ST_eps.
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<String>>,
        /// Empirical output variance used as the denominator.
        #[arg(long)]
        total_variance: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an Ishigami sample (x1, x2, y; X3 withheld) as CSV.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an Ishigami benchmark recipe.
    Bench {
        which: Which,
        #[arg(long)]
        seed: Option<u64>,
        /// Rows per pick-freeze sample.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Table1,
    Table2,
    Table3,
    Convergence,
    Figure3,
}

fn required<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required setting `{what}`")))
}

fn run(cli: Cli) -> Result<String> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Fit { input, response, engine, mean_terms, disp_terms, family, max_outer_iter, loo, seed, out } => {
            let f = cfg.fit;
            let args = FitArgs {
                input: required(input.or(f.input), "input")?,
                response: response.or(f.response),
                engine: commands::parse_engine(&required(engine.or(f.engine), "engine")?)?,
                mean_terms: required(mean_terms.or(f.mean_terms), "mean_terms")?,
                disp_terms: disp_terms.or(f.disp_terms).unwrap_or_else(|| "1".into()),
                family: commands::parse_family(&family.or(f.family).unwrap_or_else(|| "gaussian".into()))?,
                max_outer_iter: max_outer_iter.or(f.max_outer_iter).unwrap_or(10),
                loo: loo || f.loo.unwrap_or(false),
                seed: seed.or(f.seed).unwrap_or(0),
                out: out.or(f.out).unwrap_or_else(|| PathBuf::from(".")),
            };
            let (path, report) = commands::cmd_fit(&args)?;
            Ok(format!("{}model written to {}\n", report.to_text(), path.display()))
        }
        Command::Sobol { model, dists, n, reps, seed, indices, total_variance, out } => {
            let s = cfg.sobol;
            let args = SobolArgs {
                model: required(model.or(s.model), "model")?,
                dists: required(dists.map(DistsConfig::Text).or(s.dists), "dists")?,
                n: n.or(s.n).unwrap_or(10_000),
                reps: reps.or(s.reps).unwrap_or(100),
                seed: seed.or(s.seed).unwrap_or(0),
                indices: indices.or(s.indices),
                total_variance: total_variance.or(s.total_variance),
                dispersion_threshold: s.dispersion_threshold.unwrap_or(0.05),
                out: out.or(s.out),
            };
            Ok(commands::cmd_sobol(&args)?.to_text())
        }
        Command::Simulate { n, seed, out } => {
            let sample = jointsa::ishigami::simulate(n, seed)?;
            jointsa::design::write_csv(&sample.data, &out)?;
            Ok(format!("{n} rows written to {}\n", out.display()))
        }
        Command::Bench { which, seed, n, reps, out } => {
            let b = cfg.bench;
            let which = match which {
                Which::Table1 => BenchName::Table1,
                Which::Table2 => BenchName::Table2,
                Which::Table3 => BenchName::Table3,
                Which::Convergence => BenchName::Convergence,
                Which::Figure3 => BenchName::Figure3,
            };
            let args = BenchArgs {
                which,
                seed: seed.or(b.seed).unwrap_or(2024),
                n: n.or(b.n),
                reps: reps.or(b.reps),
                out: out.or(b.out).unwrap_or_else(|| PathBuf::from(".")),
            };
            Ok(commands::cmd_bench(&args)?.to_text())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
