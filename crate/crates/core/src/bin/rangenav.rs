use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rangenav::harness::{monte_carlo, run_scenario, HarnessError, Scenario};
use rangenav::select::SelectionPolicy;
use rangenav::validate::run_checks;

#[derive(Parser, Debug)]
#[command(name = "rangenav", version, about = "IMU + single-range EKF with greedy anchor selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario JSON file. Defaults to the bundled five-anchor flight.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Override the scenario's selection policy (`run` only).
    #[arg(long, global = true, value_enum)]
    policy: Option<PolicyArg>,

    /// Number of Monte Carlo runs (`compare` only).
    #[arg(long, global = true, default_value_t = 20)]
    runs: usize,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Suppress the printed summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fly one scenario and write timeseries.csv and streams.csv.
    Run,
    /// Fly both policies over paired seeds and write summary.csv.
    Compare,
    /// Cross-check the filter and selector against dense arithmetic.
    Validate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Sequential,
    Greedy,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{0} oracle check(s) failed")]
    Checks(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Harness(e) => e.exit_code() as u8,
            _ => 2,
        }
    }

    fn output(path: &Path, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            source: Box::new(source),
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario, HarnessError> {
    let mut scenario = match &cli.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::bundled(),
    };
    if let Some(seed) = cli.seed {
        scenario = scenario.with_seed(seed);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::output(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run => {
            let mut scenario = load_scenario(cli)?;
            match cli.policy {
                Some(PolicyArg::Greedy) => scenario = scenario.with_policy(SelectionPolicy::Greedy),
                Some(PolicyArg::Sequential) => scenario = scenario.with_policy(scenario.sequential_policy()),
                None => {}
            }
            let (metrics, log) = run_scenario(&scenario)?;
            let (path, w) = create(&cli.out, "timeseries.csv")?;
            log.write_timeseries(w).map_err(|e| CliError::output(&path, e))?;
            let (path, w) = create(&cli.out, "streams.csv")?;
            log.write_streams(w).map_err(|e| CliError::output(&path, e))?;
            if !cli.quiet {
                println!("policy      {}", scenario.policy.name());
                println!("seed        {}", scenario.seed);
                println!("rmse pos    {:.4} m", metrics.rmse_position);
                println!("rmse vel    {:.4} m/s", metrics.rmse_velocity);
                println!("rmse att    {:.3} deg", metrics.rmse_attitude);
                let hist: Vec<String> = metrics
                    .anchor_histogram
                    .iter()
                    .map(|(id, n)| format!("{id}:{n}"))
                    .collect();
                println!("anchors     {}", hist.join(" "));
            }
        }
        Command::Compare => {
            let scenario = load_scenario(cli)?;
            let summary = monte_carlo(&scenario, cli.runs)?;
            let (path, w) = create(&cli.out, "summary.csv")?;
            summary.write_csv(w).map_err(|e| CliError::output(&path, e))?;
            for failure in &summary.failures {
                log::warn!("{failure}");
            }
            if !cli.quiet {
                print!("{summary}");
            }
        }
        Command::Validate => {
            let seed = cli.seed.unwrap_or(0);
            let results = run_checks(seed);
            if !cli.quiet {
                for r in &results {
                    println!("{r}");
                }
            }
            let failed = results.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(CliError::Checks(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
