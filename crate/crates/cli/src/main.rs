use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hcot_core::config::{parse_config, GeneratorKind, TrackerConfig};
use hcot_core::io::{self, FORMAT_VERSION};
use hcot_core::pipeline::worker_count;
use hcot_core::synthgen::{confident_error_scenario, standard_suite};

#[derive(Parser, Debug)]
#[command(name = "hcot", about = "Hyperspectral camouflaged-object tracking", disable_version_flag = true)]
struct Cli {
    /// Print the dataset format version and exit.
    #[arg(short = 'V', long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Standard,
    /// The single scripted decoy-crossing scenario.
    ConfidentError,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Generator {
    SpdanToy,
    SpectralCorrelation,
}

impl From<Generator> for GeneratorKind {
    fn from(g: Generator) -> Self {
        match g {
            Generator::SpdanToy => GeneratorKind::SpdanToy,
            Generator::SpectralCorrelation => GeneratorKind::SpectralCorrelation,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[arg(long, value_enum, default_value = "standard")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track every sequence of a dataset.
    Track {
        #[arg(long)]
        data: PathBuf,
        /// JSON config; defaults to the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_dam: bool,
        #[arg(long)]
        rgb_only: bool,
        #[arg(long, value_enum)]
        generator: Option<Generator>,
    },
    /// Score tracking runs against a dataset.
    Eval {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// DAM on/off and spectral/false-color runs with a delta table.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<TrackerConfig> {
    match path {
        None => Ok(TrackerConfig::desk_scale()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_config(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.version {
        println!("{}", serde_json::json!({ "format_version": FORMAT_VERSION, "version": env!("CARGO_PKG_VERSION") }));
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no command given; see --help");
    };
    match command {
        Command::Generate { suite, seed, out } => {
            let specs = match suite {
                Suite::Standard => standard_suite(seed),
                Suite::ConfidentError => vec![confident_error_scenario(seed)],
            };
            let manifest = io::write_suite(&specs, &out)?;
            println!("wrote {} sequences to {}", manifest.sequences.len(), out.display());
        }
        Command::Track {
            data,
            config,
            out,
            no_dam,
            rgb_only,
            generator,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if no_dam {
                cfg.use_dam = false;
            }
            if rgb_only {
                cfg.rgb_only = true;
            }
            if let Some(g) = generator {
                cfg.response_generator = g.into();
            }
            let runs = io::track_dataset(&data, &cfg, &out, worker_count())?;
            println!("tracked {} sequences into {}", runs.len(), out.display());
        }
        Command::Eval { runs, data, out } => {
            let runs = io::read_runs(&runs)?;
            if runs.is_empty() {
                bail!("no runs found");
            }
            let (summary, results) = io::evaluate_runs(&runs, &data)?;
            io::write_eval(&out, &summary, &results)?;
            println!("auc {:.4} dp20 {:.4}", summary.auc, summary.dp20);
        }
        Command::Ablate { data, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let rows = io::ablate_dataset(&data, &cfg, worker_count())?;
            io::write_ablation(&out, &rows)?;
            print!("{}", io::ablation_csv(&rows));
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<hcot_core::Error>().map(|e| e.kind()))
        .unwrap_or("error")
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), format!("{e:#}")),
    }
}
