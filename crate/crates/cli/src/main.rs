//! `invlasso`: simulate Table-1 cells, fit data sets, and inspect Gram matrices.
//!
//! On failure the last line on stderr is `error kind=<kind> message="<text>"` and the exit
//! code is 1 (2 for usage errors). `INVLASSO_THREADS` sets the worker count for replicates.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use invlasso::diagnostics::{compatibility_report, KappaRequest};
use invlasso::harness::plot::emit_plot_data;
use invlasso::harness::solve::fit_dataset;
use invlasso::harness::table::{write_replicates_csv, write_table_csv};
use invlasso::harness::{load_dir, run_table, CellContext, ExperimentConfig, SetupCache};
use invlasso::inversion::{weights, WeightModel, WeightVector};
use invlasso::io as csvio;
use invlasso::{Error, Result};

const THREADS_VAR: &str = "INVLASSO_THREADS";

#[derive(Parser)]
#[command(name = "invlasso", version, about = "Weighted-Lasso inversion of Laplace-type equations")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of one cell and print its summary rows.
    Simulate {
        config: PathBuf,
        /// Write per-replicate rows to this file.
        #[arg(long)]
        replicates: Option<PathBuf>,
        /// Write plot data for the first replicate into this directory.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Run all cells found in a directory of configs.
    Table1 {
        config_dir: PathBuf,
        /// Write per-replicate rows to this file.
        #[arg(long)]
        replicates: Option<PathBuf>,
    },
    /// Fit one data set (`x,y` CSV) and print the lasso path.
    Solve {
        /// CSV with `x` and `y` columns; `-` reads stdin.
        data: PathBuf,
        /// Grid and dictionary settings; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Noise level used by cross-validation; defaults to the config's `sigma`.
        #[arg(long)]
        sigma: Option<f64>,
        /// Write `x,f_hat` at the cross-validated penalty.
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Write `j,l,b,beta_hat,nu`.
        #[arg(long)]
        beta: Option<PathBuf>,
    },
    /// Compatibility diagnostics for a headerless Gram matrix CSV.
    Diagnose {
        gram: PathBuf,
        #[arg(long, default_value_t = 3)]
        s: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 3.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        c_ups: f64,
        /// Estimate κ² on this comma-separated support, with unit weights.
        #[arg(long, value_delimiter = ',')]
        support: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        n_dirs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute inverse images and weights; prints `j,l,b,residual,nu`.
    Invert {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Weights::Observational)]
        weights: Weights,
        /// Write ψ on the range grid.
        #[arg(long)]
        psi: Option<PathBuf>,
        /// Write the dictionary on the domain grid.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        /// Write the Gram matrix.
        #[arg(long)]
        gram: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    WhiteNoise,
    Observational,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn configure_threads() -> Result<()> {
    // Sized explicitly so that rayon's own environment variable is never consulted.
    let n = match std::env::var(THREADS_VAR) {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cache = SetupCache::new();
    let stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate { config, replicates, plot_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reports = run_table(&cache, std::slice::from_ref(&cfg))?;
            write_table_csv(stdout, &reports)?;
            if let Some(p) = replicates {
                write_replicates_csv(create(&p)?, &reports)?;
            }
            if let Some(dir) = plot_dir {
                let setup = cache.get(&cfg)?;
                let ctx = CellContext::new(&setup, &cfg)?;
                emit_plot_data(&setup, &ctx, &cfg, 0, &dir)?;
            }
        }
        Command::Table1 { config_dir, replicates } => {
            let cfgs = load_dir(&config_dir)?;
            let reports = run_table(&cache, &cfgs)?;
            write_table_csv(stdout, &reports)?;
            if let Some(p) = replicates {
                write_replicates_csv(create(&p)?, &reports)?;
            }
        }
        Command::Solve { data, config, sigma, estimate, beta } => {
            let (x, y) = if data.as_os_str() == "-" {
                csvio::read_xy(std::io::stdin().lock())?
            } else {
                csvio::read_xy(File::open(&data)?)?
            };
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::cell(invlasso::forward::TestFunctionId::F1, 0.0, x.len()),
            };
            cfg.n_obs = x.len();
            let sigma = sigma.unwrap_or(cfg.sigma);
            let setup = cache.get(&cfg)?;
            let fit = fit_dataset(&setup, &cfg, &x, &y, sigma)?;
            csvio::write_path(stdout, &fit.path, None)?;
            if let Some(p) = estimate {
                csvio::write_table(create(&p)?, &["x", "f_hat"], &[fit.f_hat.grid().nodes(), fit.f_hat.values()])?;
            }
            if let Some(p) = beta {
                csvio::write_beta(create(&p)?, setup.dictionary.labels(), &fit.beta.beta_hat, &fit.nu.nu)?;
            }
            log::info!("cross-validation chose k = {}", fit.cv_index + 1);
        }
        Command::Diagnose { gram, s, m, mu, c_ups, support, n_dirs, seed } => {
            let phi = csvio::read_gram(File::open(&gram)?)?;
            let nu = WeightVector::ones(phi.p());
            let kappa = (!support.is_empty()).then(|| KappaRequest {
                nu: &nu,
                support: &support,
                n_dirs,
                seed,
            });
            let report = compatibility_report(&phi, s, m, mu, c_ups, kappa)?;
            let mut out = BufWriter::new(stdout);
            writeln!(out, "key,value")?;
            for line in report.to_key_value().lines() {
                if let Some((k, v)) = line.split_once('=') {
                    writeln!(out, "{k},{v}")?;
                }
            }
            out.flush()?;
        }
        Command::Invert { config, weights: kind, psi, dictionary, gram } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = cache.get(&cfg)?;
            let nu = match kind {
                Weights::WhiteNoise => weights(&setup.inverse, WeightModel::WhiteNoise)?,
                Weights::Observational => {
                    let obs = invlasso::grid::Grid::right_end(0.0, cfg.t_max, cfg.n_obs)?;
                    weights(&setup.inverse, WeightModel::Observational(&obs))?
                }
            };
            let labels = setup.dictionary.labels();
            csvio::write_residual_report(stdout, &setup.inverse, labels, &nu)?;
            if let Some(p) = psi {
                csvio::write_inverse_images(create(&p)?, &setup.inverse, labels)?;
            }
            if let Some(p) = dictionary {
                csvio::write_dictionary(create(&p)?, &setup.dictionary)?;
            }
            if let Some(p) = gram {
                csvio::write_gram(create(&p)?, &setup.gram)?;
            }
            let bad = setup.inverse.violations();
            if !bad.is_empty() {
                log::warn!("{} columns exceed the inversion residual threshold", bad.len());
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error kind={kind} message={:?}", message)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", error_line("usage", e.kind().as_str().unwrap_or("invalid arguments")));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
