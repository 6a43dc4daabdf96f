use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use remask_core::analysis::{
    context_quality, precision_sweep, trajectory_diff, verify_prop_stuck, ContextQualityInput,
    StuckParams,
};
use remask_core::oracle::load_scenario;
use remask_core::trajectory::read_jsonl;
use remask_core::{BlockPosterior, Slot, Token, Trajectory};
use serde::Deserialize;

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Align two trajectory files position by position.
    Diff(DiffArgs),
    /// Check a posterior snapshot for stuck positions and which detectors catch them.
    Stuck(StuckArgs),
    /// Expected context quality under random versus targeted remasking.
    Quality(QualityArgs),
}

#[derive(Args)]
pub struct DiffArgs {
    a: PathBuf,
    b: PathBuf,
    /// Take prompt length, block length and token labels from a scenario.
    #[arg(long, conflicts_with_all = ["prompt_len", "block_len"])]
    scenario: Option<PathBuf>,
    #[arg(long, required_unless_present = "scenario")]
    prompt_len: Option<usize>,
    #[arg(long, required_unless_present = "scenario")]
    block_len: Option<usize>,
    /// Exit with status 1 when the trajectories differ.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
pub struct StuckArgs {
    /// JSON file holding `{"posterior": ..., "committed": {"pos": token}}`.
    input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.9)]
    tau_t2t: f64,
    #[arg(long, default_value_t = 0.3)]
    tau_lp: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
pub struct QualityArgs {
    /// Correct tokens in the context.
    #[arg(long)]
    n_c: u64,
    /// Erroneous tokens in the context.
    #[arg(long)]
    n_e: u64,
    /// Signal contributed by a correct token.
    #[arg(long, allow_hyphen_values = true)]
    s_plus: f64,
    /// Signal contributed by an erroneous token (usually negative).
    #[arg(long, allow_hyphen_values = true)]
    s_minus: f64,
    /// Fraction of positions remasked.
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    /// Comma-separated detector precisions to sweep.
    #[arg(long, value_delimiter = ',')]
    precision: Vec<f64>,
    /// Positions removed in the precision sweep; defaults to sigma * (n_c + n_e).
    #[arg(long)]
    removed: Option<f64>,
    #[arg(long)]
    json: bool,
}

pub fn cmd_analyze(cmd: AnalyzeCommand) -> Result<ExitCode> {
    match cmd {
        AnalyzeCommand::Diff(a) => diff(a),
        AnalyzeCommand::Stuck(a) => stuck(a),
        AnalyzeCommand::Quality(a) => quality(a),
    }
}

fn load_trajectory(path: &Path, prompt_len: usize, block_len: usize) -> Result<Trajectory> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let events =
        read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    Ok(Trajectory {
        prompt_len,
        block_len,
        events,
    })
}

fn diff(args: DiffArgs) -> Result<ExitCode> {
    let (prompt_len, block_len, labels) = match &args.scenario {
        Some(path) => {
            let oracle =
                load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
            let spec = oracle.spec().clone();
            (spec.prompt.len(), spec.config.block_len, Some(spec))
        }
        None => match (args.prompt_len, args.block_len) {
            (Some(p), Some(b)) => (p, b, None),
            _ => bail!("--prompt-len and --block-len are required without --scenario"),
        },
    };
    let a = load_trajectory(&args.a, prompt_len, block_len)?;
    let b = load_trajectory(&args.b, prompt_len, block_len)?;
    let d = trajectory_diff(&a, &b)?;
    let mut o = String::new();
    let label = |s: Slot| match &labels {
        Some(spec) => spec.label(s),
        None => s.map_or_else(|| "[M]".to_string(), |t| t.0.to_string()),
    };
    outw!(o, "{}", d.to_table(&label));
    crate::emit(&o)?;
    Ok(if args.check && !d.is_identical() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Deserialize)]
struct StuckInput {
    posterior: BlockPosterior,
    committed: BTreeMap<usize, Token>,
}

fn stuck(args: StuckArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let input: StuckInput =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    let params = StuckParams::new(args.epsilon, args.tau_t2t)?;
    let report = verify_prop_stuck(&input.posterior, &input.committed, &params, args.tau_lp)?;
    let mut o = String::new();
    if args.json {
        outln!(o, "{}", serde_json::to_string_pretty(&report)?);
    } else {
        outln!(
            o,
            "epsilon={} tau_t2t={} tau_lp={}  stuck positions: {}",
            report.epsilon,
            report.tau_t2t,
            report.tau_lp,
            report.positions.len()
        );
        outln!(
            o,
            "{:>5} {:>10} {:>10} {:>5} {:>8}",
            "pos",
            "current_p",
            "top1_p",
            "t2t",
            "lowprob"
        );
        for c in &report.positions {
            outln!(
                o,
                "{:>5} {:>10.4} {:>10.4} {:>5} {:>8}",
                c.pos,
                c.current_p,
                c.top1_p,
                c.t2t_fires,
                c.lowprob_fires
            );
        }
        outln!(o, "{}", if report.pass { "PASS" } else { "FAIL" });
    }
    crate::emit(&o)?;
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn quality(args: QualityArgs) -> Result<ExitCode> {
    let q = context_quality(&ContextQualityInput {
        n_c: args.n_c,
        n_e: args.n_e,
        s_plus: args.s_plus,
        s_minus: args.s_minus,
        sigma: args.sigma,
    })?;
    let sweep = if args.precision.is_empty() {
        Vec::new()
    } else {
        let removed = args
            .removed
            .unwrap_or(args.sigma * (args.n_c + args.n_e) as f64);
        precision_sweep(
            args.n_c,
            args.n_e,
            args.s_plus,
            args.s_minus,
            removed,
            &args.precision,
        )?
    };
    let mut o = String::new();
    if args.json {
        let value = serde_json::json!({ "quality": q, "precision": sweep });
        outln!(o, "{}", serde_json::to_string_pretty(&value)?);
        crate::emit(&o)?;
        return Ok(ExitCode::SUCCESS);
    }
    outln!(o, "q_random   {:.6}", q.q_random);
    outln!(o, "q_targeted {:.6}", q.q_targeted);
    outln!(o, "advantage  {:.6}", q.advantage);
    if !sweep.is_empty() {
        outln!(o);
        outln!(
            o,
            "{:>9} {:>9} {:>12} {:>12} {:>10}",
            "precision",
            "base",
            "q_detector",
            "q_random",
            "gain"
        );
        for p in &sweep {
            outln!(
                o,
                "{:>9.3} {:>9.3} {:>12.4} {:>12.4} {:>10.4}",
                p.precision,
                p.base_rate,
                p.q_detector,
                p.q_random,
                p.gain
            );
        }
    }
    crate::emit(&o)?;
    Ok(ExitCode::SUCCESS)
}
