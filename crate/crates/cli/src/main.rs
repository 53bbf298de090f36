//! `tscrl`: pre-training, training, evaluation, forecasting, ANOVA reports and plots.

mod commands;
mod config;
mod failure;
mod manifest;
mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::failure::{Failure, EXIT_FAILURE};
use crate::manifest::{config_hash, hash_file, Invocation, Manifest};

#[derive(Debug, Parser)]
#[command(name = "tscrl", version, about = "Multi-agent traffic signal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON run configuration; defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Controller for `train` and `eval`: ours, ippo or fixed.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Re-run the command recorded in a manifest and compare its outputs.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the EHH influence model from random-policy rollouts.
    Pretrain,
    /// Train a controller and write its learning curve.
    Train,
    /// Greedy evaluation of a checkpoint, or of fixed-time control with `--method fixed`.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Multi-horizon forecasting on a CSV series or the synthetic generator.
    Forecast,
    /// ANOVA importances and influence weights of a pre-trained EHH model.
    Anova,
    /// SVG comparison figures from learning-curve CSVs.
    Plot { files: Vec<PathBuf> },
}

fn invocation(command: &Command, method: Option<String>) -> Invocation {
    let (name, checkpoint, episodes, files) = match command {
        Command::Pretrain => ("pretrain", None, None, vec![]),
        Command::Train => ("train", None, None, vec![]),
        Command::Eval { checkpoint, episodes } => ("eval", checkpoint.clone(), *episodes, vec![]),
        Command::Forecast => ("forecast", None, None, vec![]),
        Command::Anova => ("anova", None, None, vec![]),
        Command::Plot { files } => ("plot", None, None, files.clone()),
    };
    Invocation { command: name.into(), method, checkpoint, episodes, files }
}

fn set_workers(workers: usize) {
    if workers > 0 {
        // only fails if a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn execute(inv: &Invocation, cfg: &RunConfig, out: &Path) -> Result<Manifest, Failure> {
    set_workers(cfg.workers);
    let start = std::time::Instant::now();
    let record = commands::run(inv, cfg, out)?;
    let mut outputs = BTreeMap::new();
    for name in &record.outputs {
        outputs.insert(name.clone(), hash_file(&out.join(name))?);
    }
    let mut inputs = BTreeMap::new();
    for path in &record.inputs {
        inputs.insert(path.clone(), hash_file(path)?);
    }
    let mut durations_s = record.durations_s;
    durations_s.insert("total".into(), start.elapsed().as_secs_f64());
    let manifest = Manifest {
        tool: "tscrl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        config_sha256: config_hash(cfg),
        inputs,
        outputs,
        durations_s,
    };
    let path = manifest.write(out)?;
    for name in manifest.outputs.keys() {
        println!("{}", out.join(name).display());
    }
    println!("{}", path.display());
    Ok(manifest)
}

fn replay(cli: &Cli, path: &Path) -> Result<(), Failure> {
    if cli.command.is_some() || cli.config.is_some() || cli.seed.is_some() || cli.method.is_some() {
        return Err(Failure::config("--manifest replays a recorded run; only --out and --workers may be given with it"));
    }
    let recorded = Manifest::load(path)?;
    let changed = recorded.changed_inputs()?;
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        return Err(Failure::data(format!("inputs changed since the manifest was written: {}", list.join(", "))));
    }
    let out = cli.out.clone().unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("replay"));
    let mut cfg = recorded.config.clone();
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let fresh = execute(&recorded.invocation, &cfg, &out)?;
    let diff = recorded.differences(&fresh);
    if diff.is_empty() {
        println!("reproduced {} output file(s) bit-identically", fresh.outputs.len());
        Ok(())
    } else {
        Err(Failure::new(EXIT_FAILURE, format!("outputs differ from {}: {}", path.display(), diff.join("; "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(path) = &cli.manifest {
        return replay(&cli, path);
    }
    let Some(command) = &cli.command else {
        return Err(Failure::config("no subcommand given; see `tscrl --help`"));
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let mut cfg = cfg.resolve()?;
    let mut inv = invocation(command, cli.method.clone());
    commands::resolve_invocation(&mut inv, &mut cfg)?;
    let out = cfg.out.clone();
    execute(&inv, &cfg, &out).map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
