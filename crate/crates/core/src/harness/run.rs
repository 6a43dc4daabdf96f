//! Runs a scripted scenario and checks its declared expectations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::StrategyConfig;
use crate::engine::{generate, Generation, RunSummary, Strategy};
use crate::error::HarnessError;
use crate::oracle::scenario::{Matcher, Outcome};
use crate::oracle::{load_scenario, BlockQuery, Oracle, ScenarioSpec};
use crate::state::{Slot, Token};

const PROBE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub expected_answer: Option<Vec<u32>>,
    pub expected_outcome: Option<Outcome>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub index: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub strategy: Strategy,
    pub summary: RunSummary,
    pub answer_text: String,
    pub outcome: Option<Outcome>,
    pub expectation: Option<ExpectationCheck>,
    pub probes: Vec<ProbeCheck>,
    pub passed: bool,
}

/// Loads `path` and runs it with its own tabular oracle. `config` replaces
/// the scenario's configuration when given.
pub fn run_scenario(
    path: &Path,
    strategy: Strategy,
    config: Option<&StrategyConfig>,
) -> Result<(ScenarioReport, Generation), HarnessError> {
    let oracle = load_scenario(path)?;
    run_spec(oracle.spec(), &oracle, strategy, config)
}

/// Runs a scenario's prompt against any oracle (e.g. a remote one serving
/// the same file).
pub fn run_spec<O: Oracle + ?Sized>(
    spec: &ScenarioSpec,
    oracle: &O,
    strategy: Strategy,
    config: Option<&StrategyConfig>,
) -> Result<(ScenarioReport, Generation), HarnessError> {
    if spec.prompt.is_empty() {
        return Err(HarnessError::NoPrompt);
    }
    let config = config.unwrap_or(&spec.config);
    let prompt: Vec<Slot> = spec.prompt.iter().map(|t| Some(*t)).collect();
    let generation = generate(&prompt, oracle, strategy, config).map_err(|f| f.error)?;

    let outcome = spec.reference.as_ref().map(|r| {
        if &generation.answer == r {
            Outcome::Fixed
        } else {
            Outcome::Unfixed
        }
    });
    let expectation = spec.expect.get(strategy.name()).map(|e| {
        let answer_ok = e.answer.as_ref().is_none_or(|a| {
            a.iter()
                .map(|&id| Token(id))
                .eq(generation.answer.iter().copied())
        });
        let outcome_ok = e.outcome.is_none_or(|o| Some(o) == outcome);
        ExpectationCheck {
            expected_answer: e.answer.clone(),
            expected_outcome: e.outcome,
            passed: answer_ok && outcome_ok,
        }
    });
    let probes = check_probes(spec, oracle, config.block_len)?;
    let passed = expectation.as_ref().is_none_or(|e| e.passed) && probes.iter().all(|p| p.passed);
    let answer_text = generation
        .answer
        .iter()
        .map(|t| spec.label(Some(*t)))
        .collect::<Vec<_>>()
        .join(" ");
    let report = ScenarioReport {
        scenario: spec.name.clone(),
        strategy,
        summary: generation.summary(),
        answer_text,
        outcome,
        expectation,
        probes,
        passed,
    };
    Ok((report, generation))
}

/// Scores every probe state on the first response block and compares the
/// declared numbers.
pub fn check_probes<O: Oracle + ?Sized>(
    spec: &ScenarioSpec,
    oracle: &O,
    block_len: usize,
) -> Result<Vec<ProbeCheck>, HarnessError> {
    let prompt_len = spec.prompt.len();
    let start = (prompt_len / block_len) * block_len;
    let mut checks = Vec::new();
    for (index, probe) in spec.probes.iter().enumerate() {
        let mut visible: Vec<Slot> = spec.prompt[..start].iter().map(|t| Some(*t)).collect();
        visible.extend(probe.block.iter().map(|m| m.as_slot().flatten()));
        let end = visible.len();
        let current: BTreeMap<usize, Token> = (start.max(prompt_len)..end)
            .filter_map(|i| visible[i].map(|t| (i, t)))
            .collect();
        let query = BlockQuery::new(visible, start..end, current)?;
        let post = oracle.score_block(&query)?;
        let pos = start + probe.pos;
        let scores = post.get(pos);
        let mut problems = Vec::new();
        let top = scores.map(|s| s.top.as_slice()).unwrap_or_default();
        if let Some(want) = probe.top1 {
            let got = top.first().map(|c| c.token.0);
            if got != Some(want) {
                problems.push(format!("top1 {got:?}, expected {want}"));
            }
        }
        for (tok, want) in &probe.p {
            let got = tok
                .parse::<u32>()
                .ok()
                .and_then(|id| top.iter().find(|c| c.token.0 == id))
                .map(|c| c.prob);
            if got.is_none_or(|g| (g - want).abs() > PROBE_TOL) {
                problems.push(format!("p({tok}) {got:?}, expected {want}"));
            }
        }
        if let Some(want) = probe.current_p {
            let got = scores.and_then(|s| s.current_p);
            if got.is_none_or(|g| (g - want).abs() > PROBE_TOL) {
                problems.push(format!("current_p {got:?}, expected {want}"));
            }
        }
        let state: Vec<String> = probe.block.iter().map(Matcher::to_string).collect();
        checks.push(ProbeCheck {
            index,
            passed: problems.is_empty(),
            detail: if problems.is_empty() {
                format!("[{}] @{} ok", state.join(","), probe.pos)
            } else {
                format!(
                    "[{}] @{}: {}",
                    state.join(","),
                    probe.pos,
                    problems.join("; ")
                )
            },
        });
    }
    Ok(checks)
}

/// Writes `<stem>.trajectory.jsonl` and `<stem>.summary.json` into `dir`.
pub fn write_run(
    dir: &Path,
    stem: &str,
    generation: &Generation,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let traj = dir.join(format!("{stem}.trajectory.jsonl"));
    fs::write(&traj, generation.trajectory.to_jsonl()).map_err(io(&traj))?;
    let summary = dir.join(format!("{stem}.summary.json"));
    let mut text = serde_json::to_string_pretty(&generation.summary())?;
    text.push('\n');
    fs::write(&summary, text).map_err(io(&summary))?;
    Ok((traj, summary))
}
