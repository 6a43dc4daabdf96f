use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use remask_core::harness::{run_spec, write_run, TaskSet};
use remask_core::oracle::{load_scenario, RemoteOracle};
use remask_core::{generate, Generation, Oracle, Slot, Strategy};
use serde_json::json;

use crate::config::ConfigArgs;

#[derive(Args)]
pub struct RunArgs {
    /// Scenario fixture (tabular oracle plus prompt and expectations).
    #[arg(long, conflicts_with = "task", required_unless_present = "task")]
    scenario: Option<PathBuf>,
    /// Task set produced by `gen-task`; pick an entry with --instance.
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "task")]
    instance: usize,
    #[arg(long, default_value = "t2t_replace")]
    strategy: Strategy,
    /// Score with a remote oracle server instead of the local one.
    #[arg(long, env = "REMASK_ORACLE_URL")]
    oracle_url: Option<String>,
    /// Directory for `<stem>.trajectory.jsonl` and `<stem>.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File stem for --out; defaults to `<name>.<strategy>`.
    #[arg(long)]
    stem: Option<String>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Exit with status 1 when the scenario's expectations or probes fail.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn remote(url: &str) -> Result<RemoteOracle> {
    log::info!("connecting to {url}");
    RemoteOracle::connect(url).with_context(|| format!("connecting to oracle at {url}"))
}

fn save(args: &RunArgs, name: &str, generation: &Generation) -> Result<()> {
    if let Some(dir) = &args.out {
        let stem = args
            .stem
            .clone()
            .unwrap_or_else(|| format!("{name}.{}", args.strategy));
        let (traj, summary) = write_run(dir, &stem, generation)?;
        eprintln!("wrote {} and {}", traj.display(), summary.display());
    }
    Ok(())
}

pub fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    match (&args.scenario, &args.task) {
        (Some(path), _) => run_scenario(&args, path),
        (None, Some(path)) => run_task(&args, path),
        (None, None) => bail!("one of --scenario or --task is required"),
    }
}

fn run_scenario(args: &RunArgs, path: &PathBuf) -> Result<ExitCode> {
    let local = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    let spec = local.spec();
    let config = args.config.apply(spec.config.clone());
    let (report, generation) = match &args.oracle_url {
        Some(url) => run_spec(spec, &remote(url)?, args.strategy, Some(&config))?,
        None => run_spec(spec, &local, args.strategy, Some(&config))?,
    };
    save(args, &spec.name, &generation)?;
    let mut o = String::new();
    if args.json {
        outln!(o, "{}", serde_json::to_string_pretty(&report)?);
    } else {
        let s = &report.summary;
        outln!(o, "scenario   {}", report.scenario);
        outln!(o, "strategy   {}", report.strategy);
        outln!(o, "answer     {}", report.answer_text);
        if let Some(outcome) = report.outcome {
            outln!(o, "outcome    {outcome:?}");
        }
        outln!(
            o,
            "counts     fills={} edits={} remasks={} iters={} blocks={} converged={}",
            s.fills,
            s.edits,
            s.remasks,
            s.inner_iters,
            s.blocks,
            s.converged
        );
        if let Some(e) = &report.expectation {
            outln!(o, "expected   {}", if e.passed { "ok" } else { "MISMATCH" });
        }
        for p in &report.probes {
            outln!(
                o,
                "probe {:<4} {} {}",
                p.index,
                if p.passed { "ok" } else { "FAIL" },
                p.detail
            );
        }
    }
    crate::emit(&o)?;
    Ok(if args.check && !report.passed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn run_task(args: &RunArgs, path: &PathBuf) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tasks: TaskSet =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    tasks.validate()?;
    let Some(inst) = tasks.instances.get(args.instance) else {
        bail!(
            "instance {} out of range (task set has {})",
            args.instance,
            tasks.instances.len()
        );
    };
    let config = args.config.apply(tasks.config.clone());
    let prompt: Vec<Slot> = inst.prompt.iter().map(|t| Some(*t)).collect();
    let run = |oracle: &dyn Oracle| {
        generate(&prompt, oracle, args.strategy, &config).map_err(|f| f.error)
    };
    let generation = match &args.oracle_url {
        Some(url) => run(&remote(url)?)?,
        None => {
            let base = path.parent();
            let oracles = TaskSet {
                config: tasks.config.clone(),
                instances: vec![inst.clone()],
            }
            .oracles(base)?;
            run(oracles[0].as_ref())?
        }
    };
    save(args, &format!("instance{}", inst.id), &generation)?;
    let correct = generation.answer == inst.reference;
    let summary = generation.summary();
    let mut o = String::new();
    if args.json {
        let value = json!({
            "instance": inst.id,
            "strategy": args.strategy,
            "correct": correct,
            "reference": inst.reference,
            "summary": summary,
        });
        outln!(o, "{}", serde_json::to_string_pretty(&value)?);
    } else {
        let ids = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        outln!(o, "instance   {}", inst.id);
        outln!(o, "strategy   {}", args.strategy);
        outln!(o, "answer     {}", ids(&summary.answer_tokens));
        outln!(
            o,
            "reference  {}",
            ids(&inst.reference.iter().map(|t| t.0).collect::<Vec<_>>())
        );
        outln!(o, "correct    {correct}");
        outln!(
            o,
            "counts     fills={} edits={} remasks={} iters={} blocks={} converged={}",
            summary.fills,
            summary.edits,
            summary.remasks,
            summary.inner_iters,
            summary.blocks,
            summary.converged
        );
    }
    crate::emit(&o)?;
    Ok(if args.check && !correct {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
