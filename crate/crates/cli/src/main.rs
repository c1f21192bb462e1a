use std::path::PathBuf;
use std::process::ExitCode;

use cascade_core::pipeline::{run_subcommand, RunConfig, CONFIG_KEYS};
use cascade_core::synthetic::{generate_synthetic, FriendTopology, SyntheticConfig};
use cascade_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

fn config_help() -> String {
    let defaults = RunConfig::default();
    let mut out = String::from(
        "Configuration keys (config file lines `key = value`, or --set key=value; flags win over the file):\n",
    );
    for (key, doc) in CONFIG_KEYS {
        let value = defaults.get(key).unwrap_or_default();
        let shown = if value.is_empty() { "unset".to_string() } else { value };
        out.push_str(&format!("  {key:<20} {doc} [default: {shown}]\n"));
    }
    out.push_str("\nExit status: 0 success, 1 configuration error, 2 missing prerequisite stage, 3 data error.");
    out
}

#[derive(Parser)]
#[command(name = "cascades", version, about = "Yelp information cascade analysis", after_long_help = config_help())]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Directory with business.json, user.json, review.json and tip.json.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    /// Stage output directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the dataset into the ingest cache.
    Ingest,
    /// Extract cascades per business.
    BuildCascades,
    /// Size percentiles and the size distribution per city.
    Summary,
    /// Most frequent topologies per city.
    Census,
    /// Exact-isomorphism purity of census buckets.
    Purity,
    /// Power-law fit of cascade sizes per city.
    Fit,
    /// Longest cascades per city.
    Longest,
    /// Graphviz files for the longest (or `dot_ids`) cascades.
    ExportDot,
    /// Label, balance and extract prefix features.
    Features,
    /// Fit the classifiers on every included city.
    Train,
    /// Cross-validated accuracy, ROC and feature importance.
    Evaluate,
    /// Every stage in dependency order.
    All,
    /// Write a synthetic dataset with ground-truth influence edges.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    users: usize,
    #[arg(long, default_value_t = 10)]
    businesses: usize,
    #[arg(long, default_value_t = 200)]
    events: usize,
    /// Probability that two users are friends.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Probability that a friend follows an actor.
    #[arg(long, default_value_t = 0.3)]
    influence: f64,
    #[arg(long, default_value_t = 2)]
    cities: usize,
    /// Friendships form disjoint paths of this many users instead of a random graph.
    #[arg(long)]
    chains: Option<usize>,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::BuildCascades => "build-cascades",
            Command::Summary => "summary",
            Command::Census => "census",
            Command::Purity => "purity",
            Command::Fit => "fit",
            Command::Longest => "longest",
            Command::ExportDot => "export-dot",
            Command::Features => "features",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::All => "all",
            Command::Generate(_) => "generate",
        }
    }
}

fn load_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(key, value)?;
    }
    if let Some(d) = &args.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(d) = &args.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Generate(g) => {
            let synth = SyntheticConfig {
                users: g.users,
                businesses: g.businesses,
                events: g.events,
                friendship_density: g.density,
                influence_probability: g.influence,
                cities: g.cities,
                topology: g.chains.map_or(FriendTopology::Random, |length| FriendTopology::Chains { length }),
                seed: cfg.seed,
            };
            if synth.users == 0 || synth.businesses == 0 {
                return Err(Error::Config("users and businesses must be positive".into()));
            }
            generate_synthetic(&synth).write_to(&g.out)?;
            Ok(())
        }
        cmd => run_subcommand(cmd.stage(), &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
