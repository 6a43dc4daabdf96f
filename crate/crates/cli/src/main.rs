macro_rules! outln {
    ($o:expr) => {
        $o.push('\n')
    };
    ($o:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        writeln!($o, $($arg)*).expect("formatting into a String")
    }};
}

macro_rules! outw {
    ($o:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        write!($o, $($arg)*).expect("formatting into a String")
    }};
}

mod analyze;
mod config;
mod run;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use remask_core::harness::{
    gen_signal_task, sweep, write_csv, SignalTaskParams, SweepGrid, TaskSet,
};

use crate::config::ConfigArgs;

#[derive(Parser)]
#[command(
    name = "remask",
    version,
    about = "Masked-diffusion block decoding with token-to-mask remasking"
)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one scenario or task instance and report the outcome.
    Run(run::RunArgs),
    /// Run the 109-point strategy grid over a task set and write a CSV.
    Sweep(SweepArgs),
    /// Generate a synthetic signal-model task set.
    GenTask(GenTaskArgs),
    /// Offline analyses: trajectory diffs, stuck sets, context quality.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Task set produced by `gen-task`.
    #[arg(long)]
    task: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, short = 'j', default_value_t = default_jobs())]
    jobs: usize,
    /// Overrides applied to the task set's base configuration.
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(clap::Args)]
struct GenTaskArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Response length in tokens.
    #[arg(long, default_value_t = 16)]
    length: usize,
    #[arg(long, default_value_t = 64)]
    vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    prompt_len: usize,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha1: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha2: f64,
    #[arg(long, default_value_t = 2.5)]
    bias_spread: f64,
    /// Wrong alternatives per position.
    #[arg(long, default_value_t = 1)]
    distractors: usize,
    /// Seed for task generation (decoding uses --seed).
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(text),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.task)
        .with_context(|| format!("reading {}", args.task.display()))?;
    let mut tasks: TaskSet =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.task.display()))?;
    tasks.config = args.config.apply(tasks.config);
    let grid = SweepGrid::standard();
    let base_dir = args.task.parent().map(PathBuf::from);
    let started = std::time::Instant::now();
    let rows = sweep(&grid, &tasks, args.jobs, base_dir.as_deref())?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    write_or_print(args.out.as_ref(), &String::from_utf8(buf)?)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    eprintln!(
        "{} configurations x {} instances in {:.1}s ({failed} failed)",
        rows.len(),
        tasks.instances.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_gen_task(args: GenTaskArgs) -> Result<ExitCode> {
    let params = SignalTaskParams {
        vocab_size: args.vocab_size,
        prompt_len: args.prompt_len,
        alpha0: args.alpha0,
        alpha1: args.alpha1,
        alpha2: args.alpha2,
        bias_spread: args.bias_spread,
        distractors: args.distractors,
    };
    let base = args.config.apply(Default::default());
    let tasks = gen_signal_task(args.instances, args.length, &params, &base, args.task_seed)?;
    let mut text = serde_json::to_string_pretty(&tasks)?;
    text.push('\n');
    write_or_print(args.out.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::GenTask(a) => cmd_gen_task(a),
        Command::Analyze(a) => analyze::cmd_analyze(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
