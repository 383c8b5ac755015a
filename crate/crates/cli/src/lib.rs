//! Library side of the `hypsam` binary, so commands can be driven from tests.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hypsam_core::data::{load_sample, RgbtSample};
use hypsam_core::SaliencyMap;
use rayon::prelude::*;
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"), "-g", env!("HYPSAM_GIT_REV"));

/// Folder inside `--out` that holds the written maps.
pub const MAPS_DIR: &str = "maps";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "hypsam", version = VERSION, about = "RGB-thermal salient object detection")]
pub struct Cli {
    /// TOML run configuration; defaults are used for anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory with pretrained weights (else $HYPSAM_CACHE, else ./weights).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=3`.
    /// `--train.epochs 3` is accepted as well.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the fusion network.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Train on N generated samples instead of `data.train_split`.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
    },
    /// Write coarse saliency maps for a split.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine coarse maps with the promptable segmenter.
    Refine {
        /// Folder of coarse maps named after the samples.
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Exit 0 even when the backend cannot be loaded and maps are copied through.
        #[arg(long)]
        allow_fallback: bool,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        split: Option<String>,
        /// Method name written into the report (defaults to the folder name).
        #[arg(long)]
        method: Option<String>,
        /// Also report per-attribute scores from `<root>/attributes.csv`.
        #[arg(long)]
        attributes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlay precision-recall curves of several reports.
    PlotPr {
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Pulls `--section.key value` and `--section.key=value` tokens out of `args`
/// and returns them as overrides together with the remaining arguments.
pub fn split_dotted_args(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let body = match arg.strip_prefix("--") {
            Some(b) => b,
            None => {
                rest.push(arg);
                continue;
            }
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_owned())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.next() {
                Some(v) => v,
                None => {
                    // Let the config loader report the missing value.
                    String::new()
                }
            },
        };
        overrides.push((key.to_owned(), value));
    }
    (rest, overrides)
}

fn parse_set(items: &[String]) -> CliResult<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))
        })
        .collect()
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let (rest, dotted) = split_dotted_args(args);
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli, dotted) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, dotted: Vec<(String, String)>) -> CliResult<()> {
    let mut overrides = parse_set(&cli.set)?;
    overrides.extend(dotted);
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let cache = hypsam_backends::cache_dir(cli.cache.as_deref());
    match cli.command {
        Command::Train { out, synthetic } => {
            let summary = commands::train::run(&cfg, &out, synthetic, &cache)?;
            println!(
                "trained {} steps; final loss {:.4}; checkpoints in {}",
                summary.steps,
                summary.final_loss,
                out.join(commands::train::CHECKPOINT_DIR).display()
            );
        }
        Command::Infer {
            checkpoint,
            split,
            out,
        } => {
            let split = split.unwrap_or_else(|| cfg.data.test_split.clone());
            let n = commands::infer::run(&cfg, &checkpoint, &split, &out)?;
            println!("wrote {n} maps to {}", out.join(MAPS_DIR).display());
        }
        Command::Refine {
            coarse,
            split,
            out,
            allow_fallback,
        } => {
            let split = split.unwrap_or_else(|| cfg.data.test_split.clone());
            let summary =
                commands::refine::run(&cfg, &coarse, &split, &out, &cache, allow_fallback)?;
            println!(
                "refined {} maps ({} fell back to the coarse map) into {}",
                summary.images,
                summary.fallbacks,
                out.join(MAPS_DIR).display()
            );
        }
        Command::Eval {
            pred,
            split,
            method,
            attributes,
            out,
        } => {
            let split = split.unwrap_or_else(|| cfg.data.test_split.clone());
            let out = out.unwrap_or_else(|| cfg.eval.report_dir.clone());
            let report =
                commands::eval::run(&cfg, &pred, &split, method.as_deref(), attributes, &out)?;
            println!("{}", hypsam_core::metrics::format_table(&report));
        }
        Command::PlotPr {
            reports,
            out,
            title,
        } => {
            let path = commands::plot::run(&cfg, &reports, &out, title.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    version: &'a str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
    #[serde(flatten)]
    extra: serde_json::Value,
}

/// Writes `manifest.json` and the resolved `config.toml` into `out`.
pub fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    seed: u64,
    extra: serde_json::Value,
) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let m = RunManifest {
        version: VERSION,
        command,
        config_sha256: cfg.sha256(),
        seed,
        extra,
    };
    std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)?)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

/// Loads the named samples of a split in parallel.
pub fn load_samples(root: &Path, split: &str, names: &[String]) -> CliResult<Vec<RgbtSample>> {
    names
        .par_iter()
        .map(|n| load_sample(root, split, n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

pub fn save_map(path: &Path, map: &SaliencyMap) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    map.to_gray()
        .save(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
