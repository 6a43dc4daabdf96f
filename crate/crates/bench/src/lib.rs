//! Benchmark fixtures.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use remask_core::engine::Flag;
use remask_core::harness::{gen_signal_task, SignalTaskParams, TaskSet};
use remask_core::oracle::{load_scenario, TabularOracle};
use remask_core::{
    BlockPosterior, BlockQuery, EditDecision, GenerationState, Oracle, Slot, StrategyConfig,
};

pub fn scenario(name: &str) -> TabularOracle {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.json"));
    load_scenario(path).expect("bundled scenario")
}

/// Signal-model task set with two distractors per position and a prompt
/// exactly one block long.
pub fn signal_tasks(instances: usize, length: usize, block_len: usize, seed: u64) -> TaskSet {
    let params = SignalTaskParams {
        prompt_len: block_len,
        alpha0: 0.0,
        alpha1: 1.0,
        alpha2: 2.0,
        bias_spread: 4.0,
        distractors: 2,
        ..Default::default()
    };
    let base = StrategyConfig {
        block_len,
        ..Default::default()
    };
    gen_signal_task(instances, length, &params, &base, seed).expect("valid task parameters")
}

/// A fully committed first response block, every fourth position holding
/// an off-reference token, scored by the instance's oracle. Previous
/// probabilities are set high so the drop detector has something to compare.
pub struct DetectorFixture {
    pub state: GenerationState,
    pub posterior: BlockPosterior,
    pub config: StrategyConfig,
}

pub fn detector_fixture(block_len: usize) -> DetectorFixture {
    let tasks = signal_tasks(1, block_len, block_len, 3);
    let inst = &tasks.instances[0];
    let oracle: Arc<dyn Oracle> = tasks.oracles(None).expect("signal oracle").remove(0);
    let prompt: Vec<Slot> = inst.prompt.iter().map(|t| Some(*t)).collect();
    let mut state = GenerationState::new(&prompt, &tasks.config).expect("valid state");
    if state.block().end <= state.prompt_len() {
        state.advance_block();
    }
    state.begin_iteration(1);
    let start = state.block_start();
    let alt = (oracle.meta().vocab_size - 1) as u32;
    for (i, pos) in state.block().enumerate() {
        let token = if i % 4 != 3 {
            inst.reference[pos - start]
        } else {
            remask_core::Token(alt)
        };
        state.apply(&EditDecision::fill(pos, token, 0.5));
    }
    state.begin_iteration(2);
    for pos in state.block() {
        state.set_prev_prob(pos, 0.9);
    }
    let query = BlockQuery::new(
        state.visible().to_vec(),
        state.block(),
        state.current_tokens(),
    )
    .expect("valid query");
    let posterior = oracle.score_block(&query).expect("signal scoring");
    DetectorFixture {
        state,
        posterior,
        config: tasks.config.clone(),
    }
}

/// `n` flags with scattered scores and a remask history in which every
/// fifth position has used its budget once.
pub fn flags(n: usize) -> (Vec<Flag>, BTreeMap<usize, u32>) {
    let flags = (0..n)
        .map(|pos| {
            let score = ((pos * 7919) % 1009) as f64 / 1009.0;
            Flag {
                pos,
                score,
                prob: score,
            }
        })
        .collect();
    let counts = (0..n).step_by(5).map(|pos| (pos, 1)).collect();
    (flags, counts)
}
