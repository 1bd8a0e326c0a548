use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deva_fuse::pipeline::Mode;
use deva_fuse_cli::commands::{format_table, EvalArgs, InspectArgs, RunArgs, SynthArgs};
use deva_fuse_cli::config::parse_windows;
use deva_fuse_cli::{
    cmd_eval, cmd_inspect, cmd_run, cmd_synth, CliError, CliResult, Config, PropagatorSpec,
};

#[derive(Parser)]
#[command(
    name = "deva-fuse",
    version,
    about = "Decoupled video segmentation fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no --config is given (e.g. `table6`).
    #[arg(long, conflicts_with = "config")]
    profile: Option<String>,
    /// Worker threads for per-video parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> CliResult<Config> {
        match self.profile.as_deref() {
            Some("table6") => Ok(Config::table6()),
            Some(other) => Err(CliError::Usage(format!("unknown profile `{other}`"))),
            None => Config::load_or_default(self.config.as_deref()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline mode over every video of an input directory.
    Run {
        /// Bundle or directory of videos holding per-frame segmentations.
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        /// identity, oracle or external:<cmd>
        #[arg(long, default_value = "identity")]
        propagator: PropagatorSpec,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth and print a VPQ/STQ table.
    Eval {
        /// Prediction directory: videos directly, or one subdirectory per mode.
        pred: PathBuf,
        gt: PathBuf,
        /// VPQ windows, e.g. 1,2,4,6,8,10,inf
        #[arg(long)]
        ks: Option<String>,
        /// Report path (default: <pred>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic benchmark bundle.
    Synth {
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        videos: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the consensus computation for one clip of segmentations.
    Inspect {
        clip: PathBuf,
        /// identity or external:<cmd>
        #[arg(long, default_value = "identity")]
        propagator: PropagatorSpec,
        #[command(flatten)]
        common: Common,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            input,
            out,
            mode,
            propagator,
            seed,
            common,
        } => {
            let mut config = common.load()?;
            if let Some(m) = mode {
                config.pipeline.mode = m;
                if m == Mode::Online {
                    config.pipeline.clip_size = 1;
                }
            }
            let dir = cmd_run(&RunArgs {
                input,
                out,
                config,
                propagator,
                seed,
                jobs: common.jobs,
            })?;
            println!("{}", dir.display());
        }
        Command::Eval {
            pred,
            gt,
            ks,
            report,
            common,
        } => {
            let config = common.load()?;
            let windows = match ks {
                Some(list) => parse_windows(&list),
                None => config.windows(),
            }
            .map_err(CliError::Usage)?;
            let out = report.unwrap_or_else(|| pred.join("report.json"));
            let report = cmd_eval(&EvalArgs {
                pred,
                gt,
                windows,
                options: config.metric_options(),
                jobs: common.jobs,
                out: Some(out),
            })?;
            print!("{}", format_table(&report));
        }
        Command::Synth {
            out,
            seed,
            videos,
            common,
        } => {
            let names = cmd_synth(&SynthArgs {
                out: out.clone(),
                config: common.load()?,
                seed,
                videos,
                jobs: common.jobs,
            })?;
            println!("{} videos written to {}", names.len(), out.display());
        }
        Command::Inspect {
            clip,
            propagator,
            common,
        } => {
            let text = cmd_inspect(&InspectArgs {
                clip,
                config: common.load()?,
                propagator,
            })?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEVA_FUSE_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
