use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ehsched_core::harness::{load_sweep_spec, run_sweep, svg, write_sweep_csv};
use ehsched_core::inner::solve_inner;
use ehsched_core::oracle::{brute_force_inner, random_instance, GridSpec};
use ehsched_core::scenario::load_params;
use ehsched_core::{run_simulation, RunOptions, SchedulerKind, SolveOptions, SystemParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "ehsched",
    version,
    about = "Downlink scheduling for an energy-harvesting base station"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scheduler and write per-slot metrics as CSV.
    Run {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "stochastic")]
        scheduler: SchedulerKind,
        #[arg(long, default_value_t = 50_000)]
        slots: u64,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
        /// Keep the battery full every slot.
        #[arg(long)]
        grid_power: bool,
        /// Also write rate and battery charts.
        #[arg(long)]
        svg: bool,
    },
    /// Run a parameter sweep and write one summary row per point.
    Sweep {
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
        /// Base config; defaults to the spec's `config` key, then the reference.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Compare the solver with a brute-force grid on random instances.
    OracleCheck {
        #[arg(long, default_value_t = 2)]
        users: usize,
        /// `<power points>x<code points>` per user.
        #[arg(long, default_value = "200x41")]
        grid: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        n_max: f64,
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<SystemParams> {
    match path {
        None => Ok(SystemParams::reference()),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_params(&text).with_context(|| format!("in {}", path.display()))
        }
    }
}

fn parse_grid(text: &str) -> Result<GridSpec> {
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n >= 2);
    match text.split_once('x').map(|(p, c)| (parse(p), parse(c))) {
        Some((Some(power_points), Some(code_points))) => Ok(GridSpec {
            power_points,
            code_points,
        }),
        _ => bail!("grid `{text}` must look like 200x41 with at least 2 points per axis"),
    }
}

fn run(
    config: Option<&Path>,
    scheduler: SchedulerKind,
    slots: u64,
    seed: Option<u64>,
    out: &Path,
    grid_power: bool,
    charts: bool,
) -> Result<()> {
    let params = load_config(config)?;
    let seed = seed.unwrap_or(params.seed);
    let options = RunOptions {
        scheduler,
        num_slots: slots,
        seed,
        grid_power,
    };
    let log = run_simulation(&params, &options)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = format!("{scheduler}_seed{seed}");
    let path = out.join(format!("{stem}.csv"));
    log.save_csv(&path)?;
    if charts {
        svg::write_run_charts(&log, out, &stem)?;
    }
    let s = log.summary(params.burn_in_fraction)?;
    let kbps: Vec<String> = s.final_avg_rates.iter().map(|r| format!("{:.3}", r / 1e3)).collect();
    println!("wrote {}", path.display());
    println!("average rates [Kbps]: {}", kbps.join(" "));
    println!(
        "jain {:.6}  outage slots {}  dropped voice {}  unconverged {}",
        s.jain, s.outage_slots, s.dropped_voice_total, s.unconverged_slots
    );
    Ok(())
}

fn sweep(spec_path: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = load_sweep_spec(&text).with_context(|| format!("in {}", spec_path.display()))?;
    let from_spec = spec
        .config
        .as_ref()
        .map(|c| spec_path.parent().unwrap_or(Path::new(".")).join(c));
    let params = load_config(config.or(from_spec.as_deref()))?;
    let rows = run_sweep(&spec, &params, seed.unwrap_or(params.seed))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("sweep_{}.csv", spec.variable.name()));
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_sweep_csv(spec.variable, &rows, file)?;
    println!("wrote {} ({} points)", path.display(), rows.len());
    Ok(())
}

fn oracle_check(users: usize, grid: &str, trials: usize, seed: u64, n_max: f64, config: Option<&Path>) -> Result<()> {
    let params = load_config(config)?;
    let grid = parse_grid(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    println!("trial,solver,oracle,gap");
    for trial in 0..trials {
        let instance = random_instance(&params, users, n_max, &mut rng)?;
        let solved = solve_inner(&instance, &SolveOptions::default())?;
        let oracle = brute_force_inner(&instance, &grid)?;
        let gap = (oracle.objective - solved.objective) / oracle.objective.max(f64::MIN_POSITIVE);
        worst = worst.max(gap);
        println!("{trial},{},{},{gap:e}", solved.objective, oracle.objective);
    }
    println!("worst relative gap (oracle over solver): {worst:e}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            scheduler,
            slots,
            seed,
            out,
            grid_power,
            svg,
        } => run(config.as_deref(), *scheduler, *slots, *seed, out, *grid_power, *svg),
        Command::Sweep {
            spec,
            config,
            seed,
            out,
        } => sweep(spec, config.as_deref(), *seed, out),
        Command::OracleCheck {
            users,
            grid,
            trials,
            seed,
            n_max,
            config,
        } => oracle_check(*users, grid, *trials, *seed, *n_max, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(
            parse_grid("200x41").unwrap(),
            GridSpec {
                power_points: 200,
                code_points: 41
            }
        );
        assert!(parse_grid("200").is_err());
        assert!(parse_grid("1x41").is_err());
        assert!(parse_grid("ax4").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
