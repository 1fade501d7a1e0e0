//! `dexpsim`: simulate compartment models with delayed removal processes.
//!
//! Two command families:
//!
//! - `simulate` runs the stochastic ensemble and/or the deterministic
//!   delay-differential solution of a model (built-in preset or TOML config)
//!   and writes CSV files;
//! - `dexp eval|sample|validate` works directly with the delay exponential
//!   distribution.
//!
//! Exit codes: 0 success, 1 invalid configuration or domain error, 2 runtime
//! invariant breach inside the stochastic engine.

mod output;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dexpsim::dde;
use dexpsim::dexp;
use dexpsim::model::{self, config, default_grid, ModelSpec, DEFAULT_GRID_POINTS};
use dexpsim::ssa::{self, SsaError};
use dexpsim::{DexpParams, DexpQuantileTable, RngStream};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dexpsim", version, about = "Delay compartment model simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model and write CSV results.
    Simulate(SimulateArgs),
    /// Work directly with the delay exponential distribution.
    Dexp {
        #[command(subcommand)]
        command: DexpCommand,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Stochastic,
    Deterministic,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in model preset (`pk` or `sis`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Model configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    mode: Mode,
    /// Number of replica paths in the ensemble.
    #[arg(long, default_value_t = 2000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step size for the deterministic solver.
    #[arg(long, default_value_t = 0.005)]
    step: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Ensemble worker threads (0 = all cores). Does not affect results.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    /// Override the model horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of evenly spaced recording points over the horizon.
    #[arg(long)]
    grid: Option<usize>,
    /// Additionally write the first N replica paths as `path_<r>.csv`.
    #[arg(long, default_value_t = 0)]
    sample_paths: usize,

    // Pharmacokinetic preset parameters.
    /// [pk] transport rate out of the dosing compartment.
    #[arg(long)]
    k: Option<f64>,
    /// [pk] clearance scale (clearance rate over volume).
    #[arg(long)]
    mu: Option<f64>,
    /// [pk|sis] delay of the delayed removal process.
    #[arg(long)]
    tau: Option<f64>,
    /// [pk] initial dose.
    #[arg(long)]
    x0: Option<u64>,

    // SIS preset parameters.
    /// [sis] birth rate.
    #[arg(long)]
    b: Option<f64>,
    /// [sis] death rate.
    #[arg(long)]
    d: Option<f64>,
    /// [sis] infection contact coefficient (defaults to 2 / population).
    #[arg(long)]
    lambda: Option<f64>,
    /// [sis] recovery scale of the delayed re-susceptibility.
    #[arg(long)]
    gamma: Option<f64>,
    /// [sis] total initial population.
    #[arg(long)]
    pop: Option<u64>,
    /// [sis] initially infected count.
    #[arg(long)]
    i0: Option<u64>,
}

#[derive(Subcommand)]
enum DexpCommand {
    /// Tabulate the survival function on an even grid (CSV).
    Eval {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 5.0)]
        tmax: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw waiting-time samples (CSV, one per line).
    Sample {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: f64,
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report distribution validity and the characteristic roots.
    Validate {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outcomes; anything else is a
            // configuration error.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let breach = err
                .chain()
                .any(|c| matches!(c.downcast_ref::<SsaError>(), Some(e) if is_breach(e)));
            ExitCode::from(if breach { 2 } else { 1 })
        }
    }
}

fn is_breach(err: &SsaError) -> bool {
    match err {
        SsaError::InvariantBreach { .. } => true,
        SsaError::Replica { source, .. } => is_breach(source),
        _ => false,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Dexp { command } => dexp_command(command),
    }
}

fn build_spec(args: &SimulateArgs) -> Result<ModelSpec> {
    let mut spec = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        config::from_toml_str(&text)?
    } else {
        match args.preset.as_deref() {
            Some("pk") => model::preset_pk(
                args.k.unwrap_or(1.0),
                args.mu.unwrap_or(1.0),
                args.tau.unwrap_or(0.2),
                args.x0.unwrap_or(100),
            )?,
            Some("sis") => {
                let pop = args.pop.unwrap_or(100);
                let i0 = args.i0.unwrap_or(5);
                if i0 > pop {
                    bail!("i0 = {i0} exceeds the total population {pop}");
                }
                model::preset_sis(
                    args.b.unwrap_or(0.1),
                    args.d.unwrap_or(0.1),
                    args.lambda.unwrap_or(2.0 / pop as f64),
                    args.gamma.unwrap_or(1.0),
                    args.tau.unwrap_or(0.2),
                    pop - i0,
                    i0,
                )?
            }
            Some(other) => bail!("unknown preset '{other}'; valid presets: pk, sis"),
            None => bail!("either --preset or --config is required"),
        }
    };
    if let Some(h) = args.horizon {
        spec = spec.with_horizon(h);
    }
    if let Some(points) = args.grid {
        if points < 2 {
            bail!("--grid needs at least 2 points");
        }
        spec = spec.with_grid(default_grid(spec.horizon, points));
    } else if args.horizon.is_some() {
        spec = spec.with_grid(default_grid(spec.horizon, DEFAULT_GRID_POINTS));
    }
    let diags = spec.validate();
    if !diags.is_empty() {
        let listing = diags
            .iter()
            .map(|d| format!("  {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        bail!("model failed validation:\n{listing}");
    }
    Ok(spec)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let spec = build_spec(&args)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    if matches!(args.mode, Mode::Deterministic | Mode::Both) {
        let sys = dde::build_dde(&spec)?;
        let solution = dde::solve(&sys, spec.horizon, args.step)?;
        let path = args.out.join("deterministic.csv");
        output::write_deterministic(&path, &spec, &solution)?;
        println!("wrote {}", path.display());
    }

    if matches!(args.mode, Mode::Stochastic | Mode::Both) {
        if args.paths == 0 {
            bail!("--paths must be at least 1");
        }
        let summary = run_with_threads(args.parallel, || {
            ssa::run_ensemble(&spec, args.paths, args.seed)
        })??;
        let path = args.out.join("ensemble.csv");
        output::write_ensemble(&path, &spec, &summary)?;
        println!("wrote {} ({} paths)", path.display(), summary.n_paths());
        for c in &spec.compartments {
            println!(
                "extinction fraction {}: {}",
                c.name,
                summary.extinction_fraction(c.index)
            );
        }
        for r in 0..args.sample_paths {
            let traj = ssa::run_path(&spec, RngStream::new(args.seed, r as u64))?;
            let path = args.out.join(format!("path_{r}.csv"));
            output::write_path(&path, &spec, &traj)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Run inside a dedicated rayon pool of the requested size (0 = default).
/// The reduction is exact integer arithmetic, so the pool size cannot change
/// any output byte.
fn run_with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| anyhow!("building thread pool: {e}"))?;
    Ok(pool.install(job))
}

fn dexp_command(command: DexpCommand) -> Result<()> {
    match command {
        DexpCommand::Eval { mu, tau, tmax, points, out } => {
            let p = DexpParams::new(mu, tau)?;
            if !(tmax > 0.0) || points < 2 {
                bail!("need tmax > 0 and at least 2 points");
            }
            let rows = (0..points).map(|i| {
                let t = tmax * i as f64 / (points - 1) as f64;
                (t, dexp::eval(t, &p))
            });
            output::write_csv(out.as_deref(), "t,survival", rows.map(|(t, v)| format!("{t},{v}")))
        }
        DexpCommand::Sample { mu, tau, count, seed, out } => {
            let p = DexpParams::new(mu, tau)?;
            let table = DexpQuantileTable::new(p)?;
            let mut rng = RngStream::new(seed, 0);
            let rows = (0..count).map(move |_| {
                let draw = dexpsim::sampler::sample_dexp(&mut rng, &table);
                format!("{draw}")
            });
            output::write_csv(out.as_deref(), "sample", rows)
        }
        DexpCommand::Validate { mu, tau } => {
            let p = DexpParams::new(mu, tau)?;
            let mu_tau = mu * tau;
            if p.is_distribution_valid() {
                println!("valid: mu*tau = {mu_tau} <= 1/e ({:.5})", dexp::INV_E);
            } else {
                println!("invalid: mu*tau = {mu_tau} > 1/e ({:.5})", dexp::INV_E);
            }
            match dexp::characteristic_roots(&p) {
                Ok(roots) => {
                    println!("lambda_0 = {}", roots.lambda0);
                    println!("lambda_-1 = {}", roots.lambda_neg1);
                }
                Err(_) => {
                    println!("characteristic roots: undefined (need tau > 0 and mu*tau < 1/e)");
                }
            }
            Ok(())
        }
    }
}
