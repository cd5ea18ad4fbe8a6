// SPDX-License-Identifier: Apache-2.0

//! `tribranch` command line.
//!
//! Exit codes: 0 ok, 1 config error, 2 I/O error, 3 frame error.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use tribranch::config::{validate_config, ConfigError, PipelineConfig, Preset, Stage};
use tribranch::consistency::{loss_breakdown, CfProposals, FocalParams, StageOneLosses};
use tribranch::pipeline::{run_pipeline, PipelineError, RunOptions};
use tribranch::synthetic::{write_corpus, SceneParams};
use tribranch::{Proposal, SampleSeed};

#[derive(Parser)]
#[command(name = "tribranch", version, about = "Multi-view LiDAR point cloud preprocessing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every frame of a directory into three views.
    Run(RunArgs),
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
    },
    /// Print a preset's fully resolved config as TOML.
    Config {
        #[arg(long, default_value = "kitti")]
        preset: Preset,
    },
    /// Write a synthetic labeled corpus (`.bin` + `.txt` per frame).
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 50)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the consistency and total losses from a JSON request
    /// (file path or `-` for stdin).
    Losses {
        #[arg(long, default_value = "-")]
        input: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; the preset alone is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the config's `output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated subset of pv1,pv2,pv3,ckps.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    keep_going: bool,
    #[arg(long)]
    emit_stats: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("{}", err.record());
    ExitCode::from(err.exit_code() as u8)
}

fn resolve(args: &RunArgs) -> Result<(PipelineConfig, PathBuf), PipelineError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_path(path, args.preset)?,
        None => {
            let preset = args.preset.unwrap_or_default();
            PipelineConfig::preset(preset).ok_or_else(|| {
                ConfigError::Invalid(vec!["preset custom requires --config".to_string()])
            })?
        }
    };
    if let Some(stages) = &args.stages {
        cfg.stages = stages.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.emit_stats {
        cfg.emit_stats = true;
    }
    let output = args
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| ConfigError::Invalid(vec!["no output directory (--output or `output`)".to_string()]))?;
    Ok((cfg.validate()?, output))
}

fn run(args: RunArgs) -> ExitCode {
    let (cfg, output) = match resolve(&args) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let opts = RunOptions {
        workers: args.workers,
        keep_going: args.keep_going,
    };
    match run_pipeline(&cfg, &args.input, &output, opts) {
        Ok(summary) => {
            let line = serde_json::json!({
                "frames": summary.manifest.frames.len(),
                "skipped": summary.manifest.skipped.len(),
                "config_hash": summary.manifest.config_hash,
                "output": output,
            });
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LossRequest {
    views: [Vec<Proposal>; 3],
    #[serde(default = "three")]
    n_mv: usize,
    #[serde(default)]
    stage: StageOneLosses,
    #[serde(default = "default_lambdas")]
    lambdas: [f64; 3],
    #[serde(default)]
    focal: Option<FocalParams>,
}

fn three() -> usize {
    3
}

fn default_lambdas() -> [f64; 3] {
    [1.0, 2.0, 0.2]
}

fn read_input(source: &str) -> std::io::Result<String> {
    if source == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(source)
    }
}

fn error_line(kind: &str, code: u8, message: String) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "exit_code": code, "message": message })
    );
    ExitCode::from(code)
}

fn losses(input: &str) -> ExitCode {
    let text = match read_input(input) {
        Ok(t) => t,
        Err(e) => return error_line("io", 2, format!("{input}: {e}")),
    };
    let req: LossRequest = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(e) => return error_line("config", 1, e.to_string()),
    };
    if req.views.iter().any(|v| v.len() != req.views[0].len()) {
        return error_line("config", 1, "views must hold the same number of proposals".into());
    }
    let cf = CfProposals::from_views(req.views);
    match loss_breakdown(&cf, req.n_mv, &req.stage, req.lambdas, &req.focal.unwrap_or_default()) {
        Ok(b) => {
            println!("{}", serde_json::to_string_pretty(&b).expect("breakdown serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => error_line("config", 1, e.to_string()),
    }
}

fn synth(output: &Path, frames: usize, seed: u64) -> ExitCode {
    match write_corpus(output, SampleSeed(seed), frames, &SceneParams::default()) {
        Ok(ids) => {
            println!("{}", serde_json::json!({ "frames": ids.len(), "output": output }));
            ExitCode::SUCCESS
        }
        Err(e) => error_line("io", 2, format!("{}: {e}", output.display())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config, preset } => {
            let report = validate_config(&config, preset);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Config { preset } => match PipelineConfig::preset(preset) {
            Some(cfg) => {
                print!("{}", cfg.to_toml_string());
                ExitCode::SUCCESS
            }
            None => error_line("config", 1, "preset custom has no defaults".into()),
        },
        Command::Synth {
            output,
            frames,
            seed,
        } => synth(&output, frames, seed),
        Command::Losses { input } => losses(&input),
    }
}
