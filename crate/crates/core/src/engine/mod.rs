//! The block decoding loop.
//!
//! Each inner iteration issues one oracle query for the active block, fills
//! masks (M2T), then runs the strategy's editing phase on the positions that
//! were already committed when the query was made. A block is done after an
//! iteration that saw no mask and changed nothing, so every committed token
//! has been scored in its final context.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::StrategyConfig;
use crate::error::{ConfigError, EngineError, OracleError, ValidationError};
use crate::oracle::{BlockQuery, Oracle};
use crate::posterior::BlockPosterior;
use crate::state::{GenerationState, Slot, Token};
use crate::trajectory::{EditDecision, Phase, Recorder, Trajectory, TrajectoryEvent};

pub mod detect;
pub mod edit;
pub mod fill;

pub use detect::{
    apply_caps, detect_logitdiff, detect_lowprob, detect_random, detect_t2t_trigger, t2m_step,
    Detector, Flag,
};
pub use edit::{oscillation_limit, t2t_edit_step};
pub use fill::m2t_step;

/// Generator behind random remasking; seeded from `StrategyConfig::seed`.
pub type EngineRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "t2t_replace")]
    T2tReplace,
    #[serde(rename = "t2m_lowprob")]
    T2mLowProb,
    #[serde(rename = "t2m_t2ttrigger")]
    T2mTrigger,
    #[serde(rename = "t2m_logitdiff")]
    T2mLogitDiff,
    #[serde(rename = "random_remask")]
    RandomRemask,
    #[serde(rename = "none")]
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::T2tReplace,
        Strategy::T2mLowProb,
        Strategy::T2mTrigger,
        Strategy::T2mLogitDiff,
        Strategy::RandomRemask,
        Strategy::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::T2tReplace => "t2t_replace",
            Strategy::T2mLowProb => "t2m_lowprob",
            Strategy::T2mTrigger => "t2m_t2ttrigger",
            Strategy::T2mLogitDiff => "t2m_logitdiff",
            Strategy::RandomRemask => "random_remask",
            Strategy::None => "none",
        }
    }

    pub fn detector(self) -> Option<Detector> {
        match self {
            Strategy::T2mLowProb => Some(Detector::LowProb),
            Strategy::T2mTrigger => Some(Detector::T2tTrigger),
            Strategy::T2mLogitDiff => Some(Detector::LogitDiff),
            Strategy::RandomRemask => Some(Detector::Random),
            Strategy::T2tReplace | Strategy::None => None,
        }
    }

    /// The threshold this strategy is tuned by.
    pub fn threshold(self, config: &StrategyConfig) -> Option<f64> {
        match self {
            Strategy::T2tReplace => Some(config.tau_t2t),
            Strategy::T2mLowProb => Some(config.tau_lp),
            Strategy::T2mTrigger => Some(config.tau_tr),
            Strategy::T2mLogitDiff => Some(config.tau_ld),
            Strategy::RandomRemask => Some(config.sigma),
            Strategy::None => None,
        }
    }

    /// Copy of `config` with this strategy's threshold set to `tau`.
    pub fn with_threshold(self, config: &StrategyConfig, tau: f64) -> StrategyConfig {
        let mut c = config.clone();
        match self {
            Strategy::T2tReplace => c.tau_t2t = tau,
            Strategy::T2mLowProb => c.tau_lp = tau,
            Strategy::T2mTrigger => c.tau_tr = tau,
            Strategy::T2mLogitDiff => c.tau_ld = tau,
            Strategy::RandomRemask => c.sigma = tau,
            Strategy::None => {}
        }
        c
    }

    pub fn validate(self, config: &StrategyConfig) -> Result<(), ConfigError> {
        config.validate()?;
        match self {
            Strategy::RandomRemask if config.sigma <= 0.0 => Err(ConfigError::Strategy {
                strategy: self.name(),
                requirement: "sigma in (0, 1]",
            }),
            Strategy::T2mLowProb | Strategy::T2mTrigger | Strategy::T2mLogitDiff
                if config.c_max < 1 =>
            {
                Err(ConfigError::Strategy {
                    strategy: self.name(),
                    requirement: "c_max >= 1",
                })
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown strategy {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block_index: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub fills: usize,
    pub edits: usize,
    pub remasks: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub fills: usize,
    pub edits: usize,
    pub remasks: usize,
    pub inner_iters: usize,
    pub blocks: usize,
    /// Every block reached its fixpoint before the iteration cap.
    pub converged: bool,
}

impl RunStats {
    fn add(&mut self, b: &BlockSummary) {
        self.fills += b.fills;
        self.edits += b.edits;
        self.remasks += b.remasks;
        self.inner_iters += b.inner_iters;
        self.blocks += 1;
        self.converged &= b.converged;
    }
}

/// Result of a complete generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<Slot>,
    pub answer: Vec<Token>,
    pub trajectory: Trajectory,
    pub stats: RunStats,
    pub blocks: Vec<BlockSummary>,
}

impl Generation {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            answer_tokens: self.answer.iter().map(|t| t.0).collect(),
            remasks: self.stats.remasks,
            edits: self.stats.edits,
            fills: self.stats.fills,
            inner_iters: self.stats.inner_iters,
            converged: self.stats.converged,
            blocks: self.stats.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub answer_tokens: Vec<u32>,
    pub remasks: usize,
    pub edits: usize,
    pub fills: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub blocks: usize,
}

/// A run that aborted; the events recorded before the failure are kept.
#[derive(Debug, Error)]
#[error("generation aborted after {} events: {error}", trajectory.events.len())]
pub struct RunFailure {
    #[source]
    pub error: EngineError,
    pub trajectory: Trajectory,
}

struct BlockRecorder<'a> {
    inner: &'a mut dyn Recorder,
    summary: BlockSummary,
}

impl BlockRecorder<'_> {
    fn apply(&mut self, state: &mut GenerationState, d: &EditDecision) {
        state.apply(d);
        match d.phase {
            Phase::Fill => self.summary.fills += 1,
            Phase::Edit => self.summary.edits += 1,
            Phase::Remask => self.summary.remasks += 1,
        }
        self.inner
            .record(TrajectoryEvent::new(state.step, state.block_index(), d));
    }
}

/// Runs the inner loop on the active block until its fixpoint or the
/// iteration cap. The cursor is left on the block; per-block counters are
/// reset by [`GenerationState::advance_block`].
fn score<O: Oracle + ?Sized>(
    state: &GenerationState,
    oracle: &O,
) -> Result<BlockPosterior, EngineError> {
    let meta = oracle.meta();
    let query = BlockQuery::from_state(state);
    let posterior = oracle.score_block(&query)?;
    posterior
        .check(&query.block(), meta.vocab_size)
        .map_err(OracleError::Malformed)?;
    if let Some(c) = posterior
        .positions
        .iter()
        .flat_map(|p| &p.top)
        .find(|c| c.token.0 == meta.mask_id)
    {
        return Err(OracleError::Malformed(format!(
            "mask id proposed as candidate token {}",
            c.token
        ))
        .into());
    }
    Ok(posterior)
}

pub fn run_block<O: Oracle + ?Sized, R: rand::Rng + ?Sized>(
    state: &mut GenerationState,
    oracle: &O,
    strategy: Strategy,
    config: &StrategyConfig,
    recorder: &mut dyn Recorder,
    rng: &mut R,
) -> Result<BlockSummary, EngineError> {
    let mut rec = BlockRecorder {
        inner: recorder,
        summary: BlockSummary {
            block_index: state.block_index(),
            ..Default::default()
        },
    };
    let cap = config.inner_iter_cap();
    let guard = oscillation_limit(config);

    for step in 0..cap {
        state.begin_iteration(step);
        let posterior = score(state, oracle)?;

        let fills = if state.has_mask_in_block() {
            m2t_step(state, &posterior, config)?
        } else {
            Vec::new()
        };
        for d in &fills {
            rec.apply(state, d);
        }

        let edits = match strategy {
            Strategy::None => Vec::new(),
            Strategy::T2tReplace => t2t_edit_step(state, &posterior, config)?,
            _ => {
                let detector = strategy
                    .detector()
                    .expect("remask strategies carry a detector");
                t2m_step(state, &posterior, detector, config, rng)?
            }
        };
        for d in &edits {
            rec.apply(state, d);
            if d.phase == Phase::Edit && state.edit_count(d.pos) > guard {
                log::warn!(
                    "position {} replaced {} times in block {}; freezing it",
                    d.pos,
                    state.edit_count(d.pos),
                    state.block_index()
                );
                state.freeze(d.pos);
            }
        }

        for pos in state.scored_positions() {
            if edits.iter().any(|d| d.pos == pos) {
                continue;
            }
            if let Some(p) = posterior.current_p(pos) {
                state.set_prev_prob(pos, p);
            }
        }

        rec.summary.inner_iters = step + 1;
        if fills.is_empty() && edits.is_empty() && !state.has_mask_in_block() {
            rec.summary.converged = true;
            break;
        }
    }

    if !rec.summary.converged {
        log::warn!(
            "block {} did not converge within {} inner iterations",
            state.block_index(),
            cap
        );
    }
    Ok(rec.summary)
}

/// Decodes `prompt` block by block until an EOS survives its block or the
/// token budget is exhausted.
pub fn generate<O: Oracle + ?Sized>(
    prompt: &[Slot],
    oracle: &O,
    strategy: Strategy,
    config: &StrategyConfig,
) -> Result<Generation, RunFailure> {
    let mut events: Vec<TrajectoryEvent> = Vec::new();
    let result = generate_into(prompt, oracle, strategy, config, &mut events);
    let trajectory = Trajectory {
        prompt_len: prompt.len(),
        block_len: config.block_len,
        events,
    };
    match result {
        Ok((state, stats, blocks)) => {
            let answer = state.answer(oracle.meta().eos());
            Ok(Generation {
                tokens: state.into_tokens(),
                answer,
                trajectory,
                stats,
                blocks,
            })
        }
        Err(error) => Err(RunFailure { error, trajectory }),
    }
}

/// Like [`generate`], streaming events into a caller-owned recorder.
pub fn generate_into<O: Oracle + ?Sized>(
    prompt: &[Slot],
    oracle: &O,
    strategy: Strategy,
    config: &StrategyConfig,
    recorder: &mut dyn Recorder,
) -> Result<(GenerationState, RunStats, Vec<BlockSummary>), EngineError> {
    strategy.validate(config)?;
    let meta = oracle.meta();
    for (i, slot) in prompt.iter().enumerate() {
        match slot {
            Some(t) if t.0 == meta.mask_id => return Err(ValidationError::MaskInPrompt(i).into()),
            Some(t) => meta.check_token(*t)?,
            None => {}
        }
    }
    let mut state = GenerationState::new(prompt, config)?;
    let mut rng = EngineRng::seed_from_u64(config.seed);
    let eos = meta.eos();
    let mut stats = RunStats {
        converged: true,
        ..Default::default()
    };
    let mut blocks = Vec::new();
    loop {
        let summary = run_block(&mut state, oracle, strategy, config, recorder, &mut rng)?;
        stats.add(&summary);
        blocks.push(summary);
        let eos_committed = eos.is_some() && state.block().any(|i| state.slot(i) == eos);
        if eos_committed || !state.advance_block() {
            break;
        }
    }
    state.finished = true;
    Ok((state, stats, blocks))
}

#[cfg(test)]
pub(crate) mod testing {
    use std::ops::Range;

    use super::*;
    use crate::posterior::{BlockPosterior, Candidate, PositionScores};

    /// State whose active block (after a prompt of `block_len` ones) holds
    /// `block`; committed entries are already scored.
    pub fn state_with(block: &[Option<u32>], block_len: usize) -> GenerationState {
        let cfg = StrategyConfig {
            block_len,
            max_new_tokens: block.len(),
            ..Default::default()
        };
        let prompt = vec![Some(Token(1)); block_len];
        let mut s = GenerationState::new(&prompt, &cfg).unwrap();
        for (i, t) in block.iter().enumerate() {
            if let Some(t) = t {
                s.apply(&EditDecision::fill(block_len + i, Token(*t), 1.0));
            }
        }
        s.begin_iteration(1);
        s
    }

    /// Posterior proposing token `pos` with the given probability at each
    /// listed position and `(1, 1.0)` elsewhere.
    pub fn posterior(
        block: Range<usize>,
        top: &[(usize, f64)],
        current_p: impl Fn(usize) -> Option<f64>,
    ) -> BlockPosterior {
        let per: Vec<(usize, Vec<(u32, f64)>)> = top
            .iter()
            .map(|&(pos, p)| (pos, vec![(pos as u32, p)]))
            .collect();
        build(block, &per, current_p)
    }

    pub fn posterior_per_pos(
        block: Range<usize>,
        top: &[(usize, &[(u32, f64)])],
        current_p: impl Fn(usize) -> Option<f64>,
    ) -> BlockPosterior {
        let per: Vec<(usize, Vec<(u32, f64)>)> =
            top.iter().map(|(pos, c)| (*pos, c.to_vec())).collect();
        build(block, &per, current_p)
    }

    fn build(
        block: Range<usize>,
        per: &[(usize, Vec<(u32, f64)>)],
        current_p: impl Fn(usize) -> Option<f64>,
    ) -> BlockPosterior {
        BlockPosterior {
            positions: block
                .map(|pos| {
                    let top = per
                        .iter()
                        .find(|(p, _)| *p == pos)
                        .map(|(_, c)| c.clone())
                        .unwrap_or_else(|| vec![(1, 1.0)]);
                    PositionScores {
                        pos,
                        top: top
                            .into_iter()
                            .map(|(t, p)| Candidate {
                                token: Token(t),
                                prob: p,
                            })
                            .collect(),
                        current_p: current_p(pos),
                    }
                })
                .collect(),
        }
    }
}
