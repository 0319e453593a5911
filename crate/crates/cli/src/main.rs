use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use panoptic_core::geo::Role;
use panoptic_core::pipeline::{
    self, EvalOptions, EvalTask, JobConfig, PipelineError, EXIT_INPUT, EXIT_OK, EXIT_POLICY,
};
use panoptic_core::tiler::OverlapPolicy;

/// Compile georeferenced rasters and point files into a COCO panoptic dataset,
/// and score predictions against it.
#[derive(Parser)]
#[command(name = "panoptic", version)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut tiles around every point and write the dataset.
    Convert {
        /// Job configuration (TOML).
        #[arg(short, long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Fail before writing when validation or test tiles overlap.
        #[arg(long)]
        fail_on_overlap: bool,
        /// Also write semantic PNGs with all thing classes merged.
        #[arg(long)]
        merged_semantic: bool,
        /// Worker threads (0 = all CPUs).
        #[arg(short, long)]
        workers: Option<usize>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check a written dataset; exits 1 when anything is wrong.
    Validate {
        root: PathBuf,
        /// Treat overlapping training tiles as violations too.
        #[arg(long)]
        forbid_train_overlap: bool,
        #[arg(long)]
        json: bool,
    },
    /// Score predictions against one split of a dataset.
    Evaluate {
        #[arg(long, value_enum)]
        task: Task,
        /// Dataset root written by `convert`.
        #[arg(long)]
        gt: PathBuf,
        /// Prediction: PNG directory (semantic), results JSON (instance) or panoptic JSON.
        #[arg(long)]
        pred: PathBuf,
        /// Split to score: train, valid or test.
        #[arg(long, default_value = "test")]
        set: Role,
        /// Directory of predicted panoptic PNGs.
        #[arg(long)]
        pred_png_dir: Option<PathBuf>,
        /// Merge all thing classes into one before semantic scoring.
        #[arg(long)]
        merge_things: bool,
        /// Ground-truth label to leave out of semantic scoring (default: void).
        #[arg(long)]
        ignore_label: Option<u32>,
        /// Row label in the summary tables.
        #[arg(long, default_value = "model")]
        name: String,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Per-category and per-split counts of a dataset.
    Stats {
        root: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Semantic,
    Instance,
    Panoptic,
}

impl From<Task> for EvalTask {
    fn from(t: Task) -> Self {
        match t {
            Task::Semantic => EvalTask::Semantic,
            Task::Instance => EvalTask::Instance,
            Task::Panoptic => EvalTask::Panoptic,
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Convert {
            config,
            output,
            force,
            fail_on_overlap,
            merged_semantic,
            workers,
            json,
        } => {
            let mut cfg = JobConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            cfg.force |= force;
            cfg.fail_on_overlap |= fail_on_overlap;
            cfg.merged_semantic |= merged_semantic;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let summary = pipeline::convert(&cfg)?;
            if json {
                println!("{}", to_json(&summary)?);
            } else {
                print!("{}", summary.to_text());
            }
            log::info!(
                "wrote {} files to {}",
                summary.files_written,
                cfg.output.display()
            );
            Ok(EXIT_OK)
        }
        Command::Validate {
            root,
            forbid_train_overlap,
            json,
        } => {
            let report = pipeline::validate(
                &root,
                OverlapPolicy {
                    train_may_overlap: !forbid_train_overlap,
                },
            )?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(if report.is_ok() { EXIT_OK } else { EXIT_POLICY })
        }
        Command::Evaluate {
            task,
            gt,
            pred,
            set,
            pred_png_dir,
            merge_things,
            ignore_label,
            name,
            out,
            json,
        } => {
            let report = pipeline::evaluate(
                &gt,
                &EvalOptions {
                    task: task.into(),
                    set,
                    prediction: pred,
                    pred_png_dir,
                    merge_things,
                    ignore_label,
                    name,
                },
            )?;
            if let Some(out) = out {
                std::fs::write(&out, report.to_json())
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(EXIT_OK)
        }
        Command::Stats { root, json } => {
            let report = pipeline::stats(&root)?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(EXIT_INPUT, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
