//! Command-line front end: scheme runs, parameter sweeps, convergence
//! traces, and the channel-knowledge robustness experiment.  All outputs are
//! headered CSV, byte-identical for a given seed at any thread count.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use manoma::benchmarks::{fri_experiment, run_scheme, Scheme};
use manoma::channel::sample_scenario;
use manoma::config::SimConfig;
use manoma::stochastic::RngStream;
use manoma::Result;

#[derive(Parser)]
#[command(name = "manoma", version, about = "Movable-antenna NOMA downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    /// small sizes for quick runs
    Desk,
    /// full-size defaults
    Full,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML config file; overrides the profile entirely
    #[arg(long)]
    config: Option<PathBuf>,
    /// built-in parameter set used when no config file is given
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// master random seed (overrides config)
    #[arg(long)]
    seed: Option<u64>,
    /// schemes to run; defaults to all six
    #[arg(long = "scheme", value_parser = parse_scheme)]
    schemes: Vec<Scheme>,
    /// independent scenario draws (overrides config)
    #[arg(long)]
    trials: Option<usize>,
    /// worker threads; defaults to all cores
    #[arg(long)]
    threads: Option<usize>,
    /// output CSV path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    s.parse()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepAxis {
    /// transmit power budget, dBm
    Power,
    /// transmit antennas
    Antennas,
    /// users
    Users,
    /// propagation paths
    Paths,
    /// movable-region side, wavelengths
    Region,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected scheme on independent scenario draws
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one parameter axis over a list of values
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// comma-separated axis values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Trace the position-search best rate over iterations for one draw
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-score frozen solutions on channels with imperfect knowledge
    Fri {
        #[command(flatten)]
        common: CommonArgs,
        /// comma-separated virtual-angle error spreads
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// comma-separated path-gain error variances
        #[arg(long, value_delimiter = ',', required = true)]
        nu: Vec<f64>,
    },
}

fn load_config(common: &CommonArgs) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None => match common.profile {
            Profile::Desk => SimConfig::desk(),
            Profile::Full => SimConfig::full(),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selected_schemes(common: &CommonArgs) -> Vec<Scheme> {
    if common.schemes.is_empty() {
        Scheme::all().to_vec()
    } else {
        common.schemes.clone()
    }
}

fn init_threads(common: &CommonArgs) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| manoma::Error::Parse(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn open_output(common: &CommonArgs) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn apply_axis(cfg: &SimConfig, axis: SweepAxis, value: f64) -> Result<SimConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Power => c.p_max_dbm = value,
        SweepAxis::Antennas => c.n_antennas = value as usize,
        SweepAxis::Users => c.n_users = value as usize,
        SweepAxis::Paths => c.n_paths = value as usize,
        SweepAxis::Region => c.region_wavelengths = value,
    }
    c.validate()?;
    Ok(c)
}

/// One scenario draw scored by every selected scheme.  The stream is keyed
/// by `(axis index, trial)` so rows do not depend on scheduling.
fn trial_rates(
    cfg: &SimConfig,
    schemes: &[Scheme],
    axis_idx: u64,
    trial: u64,
) -> Result<Vec<(Scheme, f64)>> {
    let base = RngStream::new(cfg.seed, 0).derive(axis_idx).derive(trial);
    let sc = sample_scenario(&cfg.scenario_params(), &mut base.derive(0))?;
    let params = cfg.bench_params();
    schemes
        .iter()
        .enumerate()
        .map(|(si, &scheme)| {
            let mut rng = base.derive(1 + si as u64);
            Ok((scheme, run_scheme(&sc, scheme, &params, &mut rng)?.rate))
        })
        .collect()
}

fn cmd_run(common: &CommonArgs) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes = selected_schemes(common);
    let rows: Vec<_> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| trial_rates(&cfg, &schemes, 0, t).map(|r| (t, r)))
        .collect::<Result<_>>()?;
    let mut out = csv::Writer::from_writer(open_output(common)?);
    out.write_record(["trial", "scheme", "rate_bps_hz"])
        .map_err(csv_err)?;
    for (t, per_scheme) in rows {
        for (scheme, rate) in per_scheme {
            out.write_record([t.to_string(), scheme.to_string(), format!("{rate:.9}")])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_sweep(common: &CommonArgs, axis: SweepAxis, values: &[f64]) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes = selected_schemes(common);
    let jobs: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|vi| (0..cfg.trials as u64).map(move |t| (vi, t)))
        .collect();
    let rows: Vec<_> = jobs
        .into_par_iter()
        .map(|(vi, t)| {
            let c = apply_axis(&cfg, axis, values[vi])?;
            trial_rates(&c, &schemes, vi as u64, t).map(|r| (vi, t, r))
        })
        .collect::<Result<_>>()?;
    let axis_name = format!("{axis:?}").to_lowercase();
    let mut out = csv::Writer::from_writer(open_output(common)?);
    out.write_record(["axis", "value", "trial", "scheme", "rate_bps_hz"])
        .map_err(csv_err)?;
    for (vi, t, per_scheme) in rows {
        for (scheme, rate) in per_scheme {
            out.write_record([
                axis_name.clone(),
                format!("{}", values[vi]),
                t.to_string(),
                scheme.to_string(),
                format!("{rate:.9}"),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_convergence(common: &CommonArgs) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes: Vec<Scheme> = selected_schemes(common)
        .into_iter()
        .filter(|s| s.is_movable())
        .collect();
    let params = cfg.bench_params();
    let rows: Vec<_> = schemes
        .par_iter()
        .map(|&scheme| {
            let base = RngStream::new(cfg.seed, 0);
            let sc = sample_scenario(&cfg.scenario_params(), &mut base.derive(0))?;
            let mut rng = base.derive(1);
            let r = run_scheme(&sc, scheme, &params, &mut rng)?;
            Ok((scheme, r.ho_history.unwrap_or_default()))
        })
        .collect::<Result<_>>()?;
    let mut out = csv::Writer::from_writer(open_output(common)?);
    out.write_record(["scheme", "iteration", "best_rate_bps_hz"])
        .map_err(csv_err)?;
    for (scheme, history) in rows {
        for (i, rate) in history.iter().enumerate() {
            out.write_record([scheme.to_string(), i.to_string(), format!("{rate:.9}")])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_fri(common: &CommonArgs, mus: &[f64], nus: &[f64]) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes = selected_schemes(common);
    let params = cfg.bench_params();
    let rows: Vec<_> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let base = RngStream::new(cfg.seed, 0).derive(0).derive(t);
            let sc = sample_scenario(&cfg.scenario_params(), &mut base.derive(0))?;
            let mut per_cell = Vec::new();
            for (si, &scheme) in schemes.iter().enumerate() {
                let mut rng = base.derive(1 + si as u64);
                let solved = run_scheme(&sc, scheme, &params, &mut rng)?;
                for (mi, &mu) in mus.iter().enumerate() {
                    for (ni, &nu) in nus.iter().enumerate() {
                        let mut prng = base
                            .derive(0x1000 + si as u64)
                            .derive(mi as u64)
                            .derive(ni as u64);
                        let rate = fri_experiment(&sc, &solved, mu, nu, &mut prng)?;
                        per_cell.push((scheme, mu, nu, rate));
                    }
                }
            }
            Ok((t, per_cell))
        })
        .collect::<Result<_>>()?;
    let mut out = csv::Writer::from_writer(open_output(common)?);
    out.write_record(["trial", "scheme", "mu", "nu", "rate_bps_hz"])
        .map_err(csv_err)?;
    for (t, cells) in rows {
        for (scheme, mu, nu, rate) in cells {
            out.write_record([
                t.to_string(),
                scheme.to_string(),
                format!("{mu}"),
                format!("{nu}"),
                format!("{rate:.9}"),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> manoma::Error {
    manoma::Error::Parse(format!("csv write: {e}"))
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common } => init_threads(common).and_then(|()| cmd_run(common)),
        Command::Sweep {
            common,
            axis,
            values,
        } => init_threads(common).and_then(|()| cmd_sweep(common, *axis, values)),
        Command::Convergence { common } => {
            init_threads(common).and_then(|()| cmd_convergence(common))
        }
        Command::Fri { common, mu, nu } => init_threads(common).and_then(|()| cmd_fri(common, mu, nu)),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
