use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};
use offtersim::config;
use offtersim::export::write_terrain;
use offtersim::rollout::{rollout, PolicyKind, RolloutOptions, RolloutSummary};
use offtersim::server::Server;
use offtersim::{CliError, ExitCode};
use offtersim_core::terrain::sample_terrain;
use offtersim_core::{ActionMode, AggregateReport, ObservationMode};

#[derive(Parser)]
#[command(name = "offtersim", version, about = "Headless seed-deterministic off-road trail simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve environments over newline-delimited JSON on TCP.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value_t = 32)]
        max_envs: usize,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Run episodes, write a JSONL log and print the metrics table.
    Rollout(RunArgs),
    /// Like `rollout` but prints only the metrics row; the log is optional.
    Eval(RunArgs),
    /// Export the heightmap of a seed as PGM16 plus JSON sidecars.
    Terrain {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long, value_enum, default_value_t = PolicyKind::Expert)]
    policy: PolicyKind,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_shield: bool,
    #[arg(long, value_enum)]
    obs_mode: Option<ObsMode>,
    #[arg(long)]
    discrete_n: Option<usize>,
    /// Server address for `--policy remote`.
    #[arg(long, default_value = "127.0.0.1:7878")]
    server: String,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ObsMode {
    Privileged,
    Depth,
    Both,
}

impl RunArgs {
    fn options(self) -> Result<RolloutOptions, CliError> {
        let mut config = config::load()?;
        if self.no_shield {
            config.shield.enabled = false;
        }
        if let Some(m) = self.obs_mode {
            config.observation_mode = match m {
                ObsMode::Privileged => ObservationMode::Privileged,
                ObsMode::Depth => ObservationMode::Depth,
                ObsMode::Both => ObservationMode::Both,
            };
        }
        if let Some(n) = self.discrete_n {
            config.action_mode = ActionMode::Discrete { n };
        }
        config.validate()?;
        Ok(RolloutOptions {
            seed: self.seed,
            episodes: self.episodes,
            policy: self.policy,
            out: self.out,
            server: self.server,
            config,
        })
    }
}

fn finish(summary: &RolloutSummary) -> Result<(), CliError> {
    if summary.faulted {
        return Err(CliError::Fault("an episode ended on a simulation fault".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { port, max_envs, host } => {
            let base = config::load()?;
            let server = Server::bind((host.as_str(), port), max_envs, base)?;
            eprintln!("offtersim listening on {}", server.local_addr()?);
            server.run()?;
            Ok(())
        }
        Command::Rollout(args) => {
            if args.out.is_none() {
                return Err(CliError::Config("rollout needs --out".into()));
            }
            let summary = rollout(&args.options()?)?;
            for (k, r) in summary.reports.iter().enumerate() {
                println!(
                    "episode {k}: collisions {} collision_time {:.2} progress {:.2} unevenness {:.3} violations {}",
                    r.n_collisions, r.collision_time, r.progress, r.cumulative_unevenness, r.n_cbf_violations
                );
            }
            println!("{}", AggregateReport::table_header());
            println!("{}", summary.aggregate.table_row(&summary.label));
            finish(&summary)
        }
        Command::Eval(args) => {
            let summary = rollout(&args.options()?)?;
            println!("{}", summary.aggregate.table_row(&summary.label));
            finish(&summary)
        }
        Command::Terrain { seed, out } => {
            let config = config::load()?;
            let terrain = sample_terrain(seed, &config.terrain)?;
            for p in write_terrain(&terrain, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("offtersim: {e}");
        process::exit(e.exit_code() as i32);
    }
    process::exit(ExitCode::Ok as i32);
}
