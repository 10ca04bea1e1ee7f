//! Operator entry points: ask one question, run a benchmark, regenerate
//! reports. Exit codes: 0 ok, 1 config, 2 pipeline, 3 io.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::audit::write_audit;
use crate::config::AppConfig;
use crate::eval::{
    load_dataset, render_report, report_from_files, run_eval, sample_per_type, EvalOptions,
    Judge, ReportFormat, RunnerError,
};
use crate::gateway::Gateway;
use crate::orchestrator::{Pipeline, PipelineError};
use crate::prompts::PromptRegistry;
use crate::task::{ImageRef, VqaTask};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("pipeline error: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Pipeline(_) => EXIT_PIPELINE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        match e {
            RunnerError::Pipeline(p) => CliError::Pipeline(p),
            RunnerError::WouldClobber => CliError::Config(e.to_string()),
            RunnerError::Eval(inner) => CliError::Io(inner.to_string()),
            RunnerError::Io(inner) => CliError::Io(inner.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "argus",
    about = "Agentic visual question answering over pluggable vision-language backends"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question about one image and write the audit trail.
    Ask {
        /// Image file (png, jpeg, webp or bmp).
        image: PathBuf,
        /// The question to answer.
        question: String,
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's eval.output_dir, else ./argus-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the configured dataset: sample per type, run the pipeline
    /// per record, judge predictions, and emit report tables.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated question types to evaluate (default: all).
        #[arg(long)]
        types: Option<String>,
        /// Evaluate at most this many records.
        #[arg(long)]
        limit: Option<usize>,
        /// Continue into an existing output dir, skipping scored records.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Regenerate report tables from persisted verdict/runtime files.
    Report {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        runtimes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        label: Option<String>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ask {
            image,
            question,
            config,
            out,
        } => cmd_ask(&image, &question, &config, out.as_deref()),
        Command::Eval {
            config,
            out,
            types,
            limit,
            resume,
            seed,
            concurrency,
        } => cmd_eval(&config, out.as_deref(), types, limit, resume, seed, concurrency),
        Command::Report {
            verdicts,
            runtimes,
            out,
            label,
        } => cmd_report(&verdicts, &runtimes, &out, label),
    }
}

struct App {
    config: AppConfig,
    registry: Arc<PromptRegistry>,
    gateway: Arc<Gateway>,
    pipeline: Pipeline,
}

fn build_app(config_path: &Path) -> Result<App, CliError> {
    let config = AppConfig::load(config_path).map_err(|e| CliError::Config(e.to_string()))?;
    let parts = config.build().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(App {
        config,
        registry: parts.registry,
        gateway: parts.gateway,
        pipeline: parts.pipeline,
    })
}

fn output_dir(app: &App, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| app.config.eval.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("argus-out"))
}

fn cmd_ask(
    image_path: &Path,
    question: &str,
    config_path: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let app = build_app(config_path)?;
    let image = ImageRef::from_path(image_path).map_err(|e| CliError::Config(e.to_string()))?;
    let task_id = format!(
        "ask-{}",
        app.gateway.clock().now().format("%Y%m%dT%H%M%S%.3f")
    );
    let task = VqaTask::new(task_id.clone(), image, question)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let result = app.pipeline.run_task(task)?;

    let out_dir = output_dir(&app, out).join("audits");
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let audit_path = out_dir.join(format!("{task_id}.jsonl"));
    let file = std::fs::File::create(&audit_path).map_err(|e| CliError::Io(e.to_string()))?;
    write_audit(&result.memory, &result.final_answer, file)
        .map_err(|e| CliError::Io(e.to_string()))?;

    println!("{}", result.final_answer);
    println!("audit: {}", audit_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config_path: &Path,
    out: Option<&Path>,
    types: Option<String>,
    limit: Option<usize>,
    resume: bool,
    seed: Option<u64>,
    concurrency: Option<usize>,
) -> Result<(), CliError> {
    let app = build_app(config_path)?;
    let judge_cfg = app
        .config
        .pipeline
        .judge
        .clone()
        .ok_or_else(|| CliError::Config("eval requires a [pipeline.judge] backend".into()))?;
    let dataset_path = app
        .config
        .eval
        .dataset_path
        .clone()
        .ok_or_else(|| CliError::Config("eval requires eval.dataset_path".into()))?;

    let records = load_dataset(&dataset_path).map_err(|e| CliError::Io(e.to_string()))?;
    let sampled = sample_per_type(
        &records,
        app.config.eval.sample_n,
        seed.unwrap_or(app.config.eval.seed),
    );

    let opts = EvalOptions {
        types_filter: types.map(|t| t.split(',').map(|s| s.trim().to_string()).collect()),
        limit,
        resume,
        concurrency: concurrency.unwrap_or(app.config.eval.concurrency_limit),
        label: app.config.label.clone(),
    };
    let judge = Judge::new(&app.gateway, &app.registry, judge_cfg);
    let out_dir = output_dir(&app, out);
    let outcome = run_eval(&app.pipeline, &judge, &sampled, &out_dir, &opts)?;

    println!(
        "evaluated {} records ({} resumed), {} types",
        outcome.evaluated,
        outcome.skipped,
        outcome.report.per_type_accuracy.len()
    );
    print!("{}", render_report(&outcome.report, ReportFormat::TableText));
    for path in &outcome.report_paths {
        println!("report: {}", path.display());
    }
    println!("verdicts: {}", outcome.verdicts_path.display());
    Ok(())
}

fn cmd_report(
    verdicts: &Path,
    runtimes: &Path,
    out: &Path,
    label: Option<String>,
) -> Result<(), CliError> {
    let label = label.unwrap_or_else(|| "run".into());
    let report =
        report_from_files(verdicts, runtimes, &label).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(e.to_string()))?;
    for format in [ReportFormat::TableText, ReportFormat::Csv, ReportFormat::Structured] {
        let path = out.join(format!("report.{}", format.extension()));
        std::fs::write(&path, render_report(&report, format))
            .map_err(|e| CliError::Io(e.to_string()))?;
        println!("report: {}", path.display());
    }
    print!("{}", render_report(&report, ReportFormat::TableText));
    Ok(())
}
