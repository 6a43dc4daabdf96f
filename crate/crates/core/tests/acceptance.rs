mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remask_core::analysis::{
    context_quality, stuck_set, verify_prop_stuck, ContextQualityInput, StuckParams,
};
use remask_core::engine::{detect_lowprob, detect_t2t_trigger, t2t_edit_step};
use remask_core::harness::{
    gen_signal_task, run_scenario, sweep, write_csv, SignalTaskParams, SweepGrid, TaskSet,
};
use remask_core::{
    generate, BlockPosterior, BlockQuery, Candidate, Oracle, Phase, PositionScores, Strategy,
    StrategyConfig, Token, Trajectory,
};

use common::{state_with, NoiseOracle};

type Outcome = Result<String, String>;
type Suite<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

fn ids(t: &[Token]) -> Vec<u32> {
    t.iter().map(|t| t.0).collect()
}

fn stuck_suite() -> Outcome {
    let started = Instant::now();
    let (eps, tau_t2t, tau_lp) = (0.01, 0.5, 0.3);
    let params = StuckParams::new(eps, tau_t2t).map_err(|e| e.to_string())?;
    let cfg = StrategyConfig {
        tau_t2t,
        tau_lp,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut positions, mut edits, mut flagged) = (0usize, 0usize, 0usize);
    for case in 0..1000 {
        let len = rng.random_range(2..=16usize);
        let block: Vec<Option<u32>> = (0..len)
            .map(|_| rng.random_bool(0.7).then(|| rng.random_range(2..64)))
            .collect();
        let mut block = block;
        if block.iter().all(Option::is_none) {
            block[0] = Some(5);
        }
        let state = state_with(&block);
        let start = state.block_start();
        let post = BlockPosterior {
            positions: block
                .iter()
                .enumerate()
                .map(|(i, slot)| {
                    let n = rng.random_range(1..=8usize);
                    let mut top: Vec<Candidate> = (0..n)
                        .map(|j| Candidate {
                            token: Token(64 + j as u32),
                            prob: rng.random_range(0.0..(tau_t2t / n as f64).min(1.0 / n as f64)),
                        })
                        .collect();
                    top.sort_by(|a, b| b.prob.total_cmp(&a.prob));
                    PositionScores {
                        pos: start + i,
                        top,
                        current_p: slot.map(|_| rng.random_range(0.0..eps)),
                    }
                })
                .collect(),
        };
        let committed = state.current_tokens();
        let set = stuck_set(&post, &committed, &params).map_err(|e| e.to_string())?;
        ensure(
            set == committed.keys().copied().collect::<BTreeSet<_>>(),
            || format!("case {case}: stuck set {set:?} differs from committed positions"),
        )?;
        let e = t2t_edit_step(&state, &post, &cfg).map_err(|e| e.to_string())?;
        let f = detect_lowprob(&state, &post, tau_lp).map_err(|e| e.to_string())?;
        let report =
            verify_prop_stuck(&post, &committed, &params, tau_lp).map_err(|e| e.to_string())?;
        ensure(report.pass, || {
            format!("case {case}: analysis check failed")
        })?;
        positions += committed.len();
        edits += e.len();
        flagged += f.len();
    }
    let elapsed = started.elapsed();
    ensure(edits == 0, || {
        format!("{edits} T2T edits on stuck positions")
    })?;
    ensure(flagged == positions, || {
        format!("LowProb flagged {flagged}/{positions}")
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "1000 posteriors, {positions} stuck positions: 0 edits, 100% flagged, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn dominance_suite() -> Outcome {
    let sigmas = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n_c = rng.random_range(1..=40u64);
        let n_e = rng.random_range(1..=40u64);
        let s_plus = rng.random_range(0.01..3.0);
        let s_minus = -rng.random_range(0.01..3.0);
        for &sigma in &sigmas {
            let q = context_quality(&ContextQualityInput {
                n_c,
                n_e,
                s_plus,
                s_minus,
                sigma,
            })
            .map_err(|e| e.to_string())?;
            ensure(q.advantage > 0.0, || {
                format!("case {case} sigma {sigma}: advantage {}", q.advantage)
            })?;
            let gap = (q.advantage - (q.q_targeted - q.q_random)).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-12, || {
                format!("case {case} sigma {sigma}: identity off by {gap:e}")
            })?;
        }
    }
    Ok(format!(
        "200 inputs x {} sigmas: advantage > 0 everywhere, max identity gap {worst:.1e}",
        sigmas.len()
    ))
}

fn scenario_suite() -> Outcome {
    let run = |name: &str, s: Strategy| {
        run_scenario(&fixture(name), s, None).map_err(|e| format!("{name}: {e}"))
    };

    let (_, a) = run("drop160", Strategy::T2tReplace)?;
    let (_, b) = run("drop160", Strategy::T2mLowProb)?;
    ensure(ids(&a.answer) == [6, 5, 7], || {
        format!("drop160 t2t answered {:?}", ids(&a.answer))
    })?;
    ensure(ids(&b.answer) == [8, 5, 7], || {
        format!("drop160 t2m answered {:?}", ids(&b.answer))
    })?;
    let find = |t: &Trajectory, phase: Phase, step: usize| {
        t.events
            .iter()
            .find(|e| e.phase == phase && e.step == step && e.pos == 4)
            .map(|e| e.prob)
    };
    ensure(find(&a.trajectory, Phase::Edit, 1) == Some(0.64), || {
        "drop160: no 8->6 edit at t=1 with p=0.64".into()
    })?;
    ensure(find(&b.trajectory, Phase::Remask, 1) == Some(0.11), || {
        "drop160: no remask at t=1 with p=0.11".into()
    })?;
    ensure(find(&b.trajectory, Phase::Fill, 2) == Some(0.94), || {
        "drop160: no refill at t=2 with p=0.94".into()
    })?;

    let (_, a) = run("fig1a", Strategy::T2tReplace)?;
    let (_, b) = run("fig1a", Strategy::T2mLowProb)?;
    let purple = a
        .trajectory
        .events
        .iter()
        .find(|e| e.phase == Phase::Fill && e.new == Some(Token(9)))
        .map(|e| e.pos)
        .ok_or("fig1a: committed token never filled")?;
    ensure(
        a.tokens[purple] == Some(Token(9)) && a.trajectory.count(Phase::Edit) == 0,
        || "fig1a: T2T touched the committed token".into(),
    )?;
    ensure(
        b.trajectory
            .events
            .iter()
            .any(|e| e.phase == Phase::Remask && e.pos == purple),
        || "fig1a: T2M did not remask the committed token".into(),
    )?;

    let (_, a) = run("fig1c", Strategy::T2tReplace)?;
    let (rb, b) = run("fig1c", Strategy::T2mLowProb)?;
    let oracle = remask_core::oracle::load_scenario(fixture("fig1c")).map_err(|e| e.to_string())?;
    let reference = oracle
        .spec()
        .reference
        .clone()
        .ok_or("fig1c has no reference")?;
    let triple = |g: &[Token]| g[g.len().saturating_sub(3)..].to_vec();
    ensure(
        b.answer == reference && triple(&b.answer) == triple(&reference),
        || format!("fig1c t2m answered {:?}", rb.answer_text),
    )?;
    ensure(triple(&a.answer) != triple(&reference), || {
        "fig1c: t2t also produced the reference triple".into()
    })?;
    Ok("drop160 657/857 with 0.64, 0.11, 0.94 at t=1,1,2; fig1a; fig1c".into())
}

struct RandomRun {
    strategy: Strategy,
    config: StrategyConfig,
    prompt: Vec<Option<Token>>,
    oracle: NoiseOracle,
}

fn random_runs(n: usize) -> Vec<RandomRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..n)
        .map(|i| {
            let strategy = Strategy::ALL[i % Strategy::ALL.len()];
            let block_len = [2, 4, 8, 16][rng.random_range(0..4)];
            let base = StrategyConfig {
                block_len,
                max_new_tokens: block_len * rng.random_range(1..=3),
                c_max: rng.random_range(1..=4),
                rho_max: [0.1, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)],
                tau_m2t: rng.random_range(0.3..0.95),
                tau_t2t: rng.random_range(0.2..0.9),
                sigma: rng.random_range(0.05..1.0),
                n_transfer: rng.random_range(1..=2),
                seed: rng.random(),
                ..Default::default()
            };
            let config = strategy.with_threshold(&base, rng.random_range(0.1..0.9));
            let prompt_len = rng.random_range(1..=block_len + 3);
            let prompt = (0..prompt_len)
                .map(|_| Some(Token(rng.random_range(2..32))))
                .collect();
            RandomRun {
                strategy,
                config,
                prompt,
                oracle: NoiseOracle::new(32, rng.random()),
            }
        })
        .collect()
}

/// Replays a trajectory without the engine and counts cap violations.
fn cap_violations(t: &Trajectory, prompt_len: usize, config: &StrategyConfig) -> Vec<String> {
    let mut tokens: BTreeMap<usize, Option<Token>> = BTreeMap::new();
    let mut per_step: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut editable_at: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut per_pos: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut problems = Vec::new();
    for e in &t.events {
        let key = (e.block_index, e.step);
        if e.phase == Phase::Remask {
            let editable = *editable_at.entry(key).or_insert_with(|| {
                let lo = (e.block_index * t.block_len).max(prompt_len);
                let hi = (e.block_index + 1) * t.block_len;
                tokens.range(lo..hi).filter(|(_, s)| s.is_some()).count()
            });
            let n = per_step.entry(key).or_default();
            *n += 1;
            let limit = (config.rho_max * editable as f64 + 1e-9).floor() as usize;
            if *n > limit {
                problems.push(format!(
                    "block {} step {}: {} remasks > {limit}",
                    key.0, key.1, n
                ));
            }
            let c = per_pos.entry((e.block_index, e.pos)).or_default();
            *c += 1;
            if *c > config.c_max {
                problems.push(format!("position {} remasked {} times", e.pos, c));
            }
        }
        tokens.insert(e.pos, e.new);
    }
    problems
}

fn cap_suite(runs: &[RandomRun]) -> Outcome {
    let mut remasks = 0;
    for (i, r) in runs.iter().enumerate() {
        let g = generate(&r.prompt, &r.oracle, r.strategy, &r.config)
            .map_err(|f| format!("run {i}: {}", f.error))?;
        remasks += g.trajectory.count(Phase::Remask);
        let v = cap_violations(&g.trajectory, r.prompt.len(), &r.config);
        ensure(v.is_empty(), || {
            format!("run {i} ({}): {}", r.strategy, v.join("; "))
        })?;
    }
    ensure(remasks > 0, || "no remask events to check".into())?;
    Ok(format!(
        "{} runs, {remasks} remask events, 0 violations",
        runs.len()
    ))
}

fn termination_suite(runs: &[RandomRun]) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut non_converged = 0;
    for (i, r) in runs.iter().enumerate() {
        let cap = r.config.inner_iter_cap();
        let a = generate(&r.prompt, &r.oracle, r.strategy, &r.config)
            .map_err(|f| f.error.to_string())?;
        let b = generate(&r.prompt, &r.oracle, r.strategy, &r.config)
            .map_err(|f| f.error.to_string())?;
        ensure(a.blocks.iter().all(|s| s.inner_iters <= cap), || {
            format!("run {i} exceeded {cap} iterations")
        })?;
        ensure(a.trajectory.events.iter().all(|e| e.step < cap), || {
            format!("run {i} logged a step past {cap}")
        })?;
        non_converged += a.blocks.iter().filter(|s| !s.converged).count();
        let pa = dir.path().join(format!("{i}.a.jsonl"));
        let pb = dir.path().join(format!("{i}.b.jsonl"));
        std::fs::write(&pa, a.trajectory.to_jsonl()).map_err(|e| e.to_string())?;
        std::fs::write(&pb, b.trajectory.to_jsonl()).map_err(|e| e.to_string())?;
        let (ba, bb) = (
            std::fs::read(&pa).map_err(|e| e.to_string())?,
            std::fs::read(&pb).map_err(|e| e.to_string())?,
        );
        ensure(ba == bb, || {
            format!("run {i} ({}): trajectories differ", r.strategy)
        })?;
    }
    Ok(format!(
        "{} runs within their inner-iteration caps ({non_converged} blocks hit the cap), repeated runs byte-identical",
        runs.len()
    ))
}

fn trigger_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = 0;
    for case in 0..500 {
        let len = rng.random_range(1..=16usize);
        let block: Vec<Option<u32>> = (0..len)
            .map(|_| rng.random_bool(0.75).then(|| rng.random_range(2..12)))
            .collect();
        let state = state_with(&block);
        let oracle = NoiseOracle::new(12, rng.random());
        let post = oracle
            .score_block(&BlockQuery::from_state(&state))
            .map_err(|e| e.to_string())?;
        let tau = [0.1, 0.25, 0.5, 0.75, 0.9][rng.random_range(0..5)];
        let cfg = StrategyConfig {
            tau_t2t: tau,
            ..Default::default()
        };
        let edits: BTreeSet<usize> = t2t_edit_step(&state, &post, &cfg)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|d| d.pos)
            .collect();
        let flags: BTreeSet<usize> = detect_t2t_trigger(&state, &post, tau)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|f| f.pos)
            .collect();
        ensure(edits == flags, || {
            format!("case {case}: edits {edits:?} vs flags {flags:?}")
        })?;
        total += edits.len();
    }
    Ok(format!(
        "500 triples, identical sets ({total} positions fired)"
    ))
}

fn sweep_task(distractors: usize, alpha0: f64, bias_spread: f64) -> Result<TaskSet, String> {
    let params = SignalTaskParams {
        alpha0,
        alpha1: 1.0,
        alpha2: 2.0,
        bias_spread,
        distractors,
        ..Default::default()
    };
    let base = StrategyConfig {
        block_len: 8,
        ..Default::default()
    };
    gen_signal_task(20, 16, &params, &base, 42).map_err(|e| e.to_string())
}

fn lowprob_vs_t2t(rows: &[remask_core::harness::SweepRow]) -> Result<(f64, Vec<f64>), String> {
    let acc = |r: &remask_core::harness::SweepRow| {
        r.result.as_ref().map(|s| s.accuracy).map_err(Clone::clone)
    };
    let t2t = acc(&rows[0])?;
    let lowprob = rows
        .iter()
        .filter(|r| r.config.strategy == Strategy::T2mLowProb && r.config.tau == 0.3)
        .map(acc)
        .collect::<Result<Vec<_>, _>>()?;
    Ok((t2t, lowprob))
}

fn sweep_suite() -> Outcome {
    let tasks = sweep_task(2, 0.0, 4.0)?;
    let grid = SweepGrid::standard();
    let started = Instant::now();
    let rows = sweep(&grid, &tasks, 1, None).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let text = String::from_utf8(csv).map_err(|e| e.to_string())?;
    let data_rows = text.lines().count() - 1;
    ensure(data_rows == 109, || format!("{data_rows} CSV rows"))?;
    ensure(!text.contains("failed"), || "a configuration failed".into())?;
    ensure(elapsed < Duration::from_secs(600), || {
        format!("sweep took {elapsed:?}")
    })?;
    let base = rows[0].result.as_ref().map_err(Clone::clone)?;
    ensure(
        rows[0].config.strategy == Strategy::T2tReplace && base.avg_remasks == 0.0,
        || "baseline row remasked".into(),
    )?;
    let (t2t, lowprob) = lowprob_vs_t2t(&rows)?;
    ensure(lowprob.iter().all(|&a| a >= t2t), || {
        format!("lowprob(0.3) accuracies {lowprob:?} below t2t {t2t}")
    })?;

    let single = sweep(&grid, &sweep_task(1, 1.0, 3.0)?, 1, None).map_err(|e| e.to_string())?;
    let (t2t_1, lowprob_1) = lowprob_vs_t2t(&single)?;
    println!(
        "INFO single distractor per position (a0=1, a1=1, a2=2): t2t {t2t_1:.2}, lowprob(0.3) {:.2}..{:.2}",
        lowprob_1.iter().copied().fold(f64::INFINITY, f64::min),
        lowprob_1.iter().copied().fold(0.0, f64::max)
    );
    Ok(format!(
        "109 rows in {:.1}s, baseline avg_remasks 0, t2t {t2t:.2} <= lowprob(0.3) {:.2}..{:.2} (2 distractors, a1=1, a2=2)",
        elapsed.as_secs_f64(),
        lowprob.iter().copied().fold(f64::INFINITY, f64::min),
        lowprob.iter().copied().fold(0.0, f64::max)
    ))
}

fn main() -> ExitCode {
    let runs = random_runs(500);
    let suites: Vec<Suite> = vec![
        ("stuck-set proposition", Box::new(stuck_suite)),
        ("targeted remask dominance", Box::new(dominance_suite)),
        ("scenario replay", Box::new(scenario_suite)),
        ("cap soundness", Box::new(|| cap_suite(&runs))),
        (
            "termination and determinism",
            Box::new(|| termination_suite(&runs)),
        ),
        ("trigger equivalence", Box::new(trigger_suite)),
        ("sweep protocol", Box::new(sweep_suite)),
    ];
    let mut failed = 0;
    for (name, suite) in suites {
        match suite() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
