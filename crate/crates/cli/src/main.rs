mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use atomgraph::data::Split;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use error::{Category, CliError, CliResult, EXIT_CODES, EXIT_USAGE};
use manifest::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "atomgraph", version, about = "Atomistic graph learning: encode, train, search, evaluate", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config holding model, train, hpo, encoder and lri sections plus dataset paths.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Thread count for encoders, HPO trials and gradient replicas.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for artifacts and manifest.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Graph file; overrides `data` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArg,
    /// Model checkpoint; overrides `checkpoint` in the config.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute encodings, drop invalid graphs, write the augmented dataset and a discard report.
    Encode(DataArg),
    /// Train one model; writes checkpoints, loss traces, test metrics and parity.
    Train(DataArg),
    /// Random search over the conditional space, then retrain the best configuration.
    Hpo {
        #[command(flatten)]
        data: DataArg,
        /// Number of trials; overrides `hpo.budget`.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Evaluate a checkpoint on one split; writes metrics.txt and parity.csv.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Generate the synthetic long-range dataset from the `lri` section.
    GenLri,
    /// Human-readable summary of a checkpoint on every split, plus test parity.
    Report(ModelArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Encode(_) => "encode",
            Command::Train(_) => "train",
            Command::Hpo { .. } => "hpo",
            Command::Eval { .. } => "eval",
            Command::GenLri => "gen-lri",
            Command::Report(_) => "report",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.global.workers {
        cfg.workers = Some(w);
    }
    let workers = cfg.workers.unwrap_or(1);
    if workers == 0 {
        return Err(CliError::new(Category::Config, "workers must be at least 1"));
    }
    cfg.train.seed = cfg.seed;
    cfg.train.workers = workers;
    cfg.lri.seed = cfg.seed;
    let set_data = |cfg: &mut RunConfig, d: &DataArg| {
        if let Some(p) = &d.data {
            cfg.data = Some(p.clone());
        }
    };
    let set_model = |cfg: &mut RunConfig, m: &ModelArgs| {
        set_data(cfg, &m.data);
        if let Some(p) = &m.checkpoint {
            cfg.checkpoint = Some(p.clone());
        }
    };
    match &cli.command {
        Command::Encode(d) | Command::Train(d) => set_data(&mut cfg, d),
        Command::Hpo { data, budget } => {
            set_data(&mut cfg, data);
            if let Some(b) = budget {
                cfg.hpo.budget = *b;
            }
        }
        Command::Eval { model, .. } | Command::Report(model) => set_model(&mut cfg, model),
        Command::GenLri => {}
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::new(Category::Run, format!("cannot start worker pool: {e}")))?;

    let mut art = Artifacts::start(cli.command.name(), cli.global.config.as_deref(), cfg.seed, &cli.global.out)?;
    match &cli.command {
        Command::Encode(_) => commands::encode(&cfg, &mut art)?,
        Command::Train(_) => commands::train(&cfg, &mut art)?,
        Command::Hpo { .. } => commands::hpo(&cfg, &mut art)?,
        Command::Eval { split, .. } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
            };
            commands::eval(&cfg, split, &mut art)?
        }
        Command::GenLri => commands::gen_lri(&cfg, &mut art)?,
        Command::Report(_) => commands::report(&cfg, &mut art)?,
    }
    let manifest = art.finish()?;
    eprintln!(
        "{}: {} artifacts in {} (config {})",
        manifest.command,
        manifest.artifacts.len(),
        manifest.out.display(),
        commands::config_path_display(manifest.config.as_deref())
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atomgraph: {e}");
            e.exit_code()
        }
    }
}
