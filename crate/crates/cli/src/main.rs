use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use metagrad::harness::checks::{run_suite, Suite, SuiteOptions};
use metagrad::harness::experiment::{
    run_experiment, ComparatorSpec, EnvSpec, ExperimentConfig, LearnerSpec,
};
use metagrad::{Error, Variant};

const EXIT_SUITE_FAILURE: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "metagrad",
    version,
    about = "Run online-learning experiments and property suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV and JSON summary.
    Run {
        /// fixed-absolute, stochastic-absolute, hinge-sphere or random-linear.
        #[arg(long)]
        env: String,
        /// metagrad, adagrad, ogd, ons or constant.
        #[arg(long)]
        learner: String,
        #[arg(long = "T")]
        horizon: u64,
        #[arg(long = "d", default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; the summary is written beside it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        variant: Variant,
        /// auto, origin, hindsight, or comma-separated coordinates.
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        comparator: ComparatorSpec,
        /// Probability of the `+1/2` outcome for stochastic-absolute.
        #[arg(long)]
        p_plus: Option<f64>,
    },
    /// Run every config in a JSON list, in parallel, printing the summaries.
    Sweep {
        config: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a named property suite; exits with status 1 if it fails.
    Check {
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long = "T")]
        horizon: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        cases: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            env,
            learner,
            horizon,
            dim,
            seed,
            out,
            variant,
            comparator,
            p_plus,
        } => run(
            env, learner, horizon, dim, seed, out, variant, comparator, p_plus,
        ),
        Command::Sweep { config, jobs } => sweep(config, jobs),
        Command::Check {
            suite,
            seeds,
            horizon,
            samples,
            cases,
        } => {
            let mut opts = SuiteOptions::full(suite);
            opts.seeds = seeds.unwrap_or(opts.seeds);
            opts.horizon = horizon.unwrap_or(opts.horizon);
            opts.samples = samples.unwrap_or(opts.samples);
            opts.cases = cases.unwrap_or(opts.cases);
            check(suite, &opts)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG_ERROR)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    env: String,
    learner: String,
    horizon: u64,
    dim: usize,
    seed: u64,
    out: PathBuf,
    variant: Variant,
    comparator: ComparatorSpec,
    p_plus: Option<f64>,
) -> Result<ExitCode, Error> {
    let mut env = EnvSpec::from_name(&env)?;
    if let (EnvSpec::StochasticAbsolute { p_plus: p }, Some(q)) = (&mut env, p_plus) {
        *p = q;
    }
    let config = ExperimentConfig {
        env,
        learner: LearnerSpec::from_name(&learner, variant)?,
        horizon,
        dim,
        seed,
        comparator,
        output: Some(out),
    };
    let artifact = run_experiment(&config)?;
    println!("{}", serde_json::to_string_pretty(&artifact.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn sweep(path: PathBuf, jobs: Option<usize>) -> Result<ExitCode, Error> {
    let configs: Vec<ExperimentConfig> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for c in &configs {
        c.validate()?;
    }
    let jobs = jobs
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<_, Error>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let outcome = run_experiment(config).map(|a| a.summary);
                results.lock().expect("no worker panicked")[i] = Some(outcome);
            });
        }
    });
    let mut summaries = Vec::with_capacity(configs.len());
    for outcome in results.into_inner().expect("no worker panicked") {
        summaries.push(outcome.expect("every config was run")?);
    }
    println!("{}", serde_json::to_string_pretty(&summaries)?);
    Ok(ExitCode::SUCCESS)
}

fn check(suite: Suite, opts: &SuiteOptions) -> Result<ExitCode, Error> {
    let report = run_suite(suite, opts)?;
    for line in &report.details {
        println!("{line}");
    }
    for line in &report.failures {
        println!("FAIL {line}");
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {} ({} checks, {} failed)",
        suite.as_str(),
        report.cases,
        report.failures.len()
    );
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SUITE_FAILURE)
    })
}
