use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sgmus_cli::{
    run, run_all, CliError, CliResult, Context, PipelineConfig, Stage, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(
    name = "sgmus",
    version,
    about = "Score-model initialized umbrella sampling pipeline"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root for relative output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a scalar field, e.g. `--set train.batch_size=256`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate unbiased trajectories into a dataset.
    Simulate(StageArgs),
    /// Label the dataset by the slow coordinate or by diffusion maps.
    Label(StageArgs),
    /// Train the conditional score network.
    Train(StageArgs),
    /// Generate samples at the configured labels.
    Generate(StageArgs),
    /// Run umbrella windows from generated initial states.
    Couple(StageArgs),
    /// Compare estimates with the analytic densities.
    Analyze(StageArgs),
    /// Run every stage in order.
    All(StageArgs),
    /// Print the default config.
    DefaultConfig,
}

fn context(args: &StageArgs, root: Option<&PathBuf>) -> CliResult<Context> {
    let config = PipelineConfig::load(&args.config, &args.overrides)?;
    Context::new(config, root.map(PathBuf::as_path))
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let root = cli.output_root.as_ref();
    let (args, stage) = match &cli.command {
        Command::DefaultConfig => {
            println!(
                "{}",
                serde_json::to_string_pretty(&sgmus_cli::config::default_config_value())
                    .expect("config serializes")
            );
            return Ok(());
        }
        Command::All(a) => {
            run_all(&context(a, root)?)?;
            return Ok(());
        }
        Command::Simulate(a) => (a, Stage::Simulate),
        Command::Label(a) => (a, Stage::Label),
        Command::Train(a) => (a, Stage::Train),
        Command::Generate(a) => (a, Stage::Generate),
        Command::Couple(a) => (a, Stage::Couple),
        Command::Analyze(a) => (a, Stage::Analyze),
    };
    let manifest = run(&context(args, root)?, stage)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
