//! Token sequence and block cursor of a single generation run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::StrategyConfig;
use crate::error::ValidationError;
use crate::trajectory::{EditDecision, Phase};

/// A vocabulary index. The mask is not a token: masked slots are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sequence slot: a committed token, or `None` for a mask.
pub type Slot = Option<Token>;

/// Convenience for building prompts and fixtures from raw ids.
pub fn slots(ids: &[u32]) -> Vec<Slot> {
    ids.iter().map(|&id| Some(Token(id))).collect()
}

/// Block containing `pos` when blocks are aligned to multiples of `block_len`.
pub fn block_of(pos: usize, block_len: usize) -> usize {
    pos / block_len
}

#[derive(Debug, Clone)]
pub struct GenerationState {
    tokens: Vec<Slot>,
    prompt_len: usize,
    block_len: usize,
    block_index: usize,
    /// c_i: remasks of each position within the active block.
    remask_counts: BTreeMap<usize, u32>,
    /// Replacement count per position within the active block (oscillation guard).
    edit_counts: BTreeMap<usize, u32>,
    frozen: BTreeSet<usize>,
    prev_prob: BTreeMap<usize, f64>,
    /// Positions filled during the current inner iteration. They were masks when
    /// the iteration's posterior was computed, so they carry no score yet.
    fresh: BTreeSet<usize>,
    pub step: usize,
    pub finished: bool,
}

impl GenerationState {
    /// Prompt followed by `max_new_tokens` masks, cursor on the first block
    /// that holds a response position.
    pub fn new(prompt: &[Slot], config: &StrategyConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        if prompt.is_empty() {
            return Err(ValidationError::EmptyPrompt);
        }
        if let Some(pos) = prompt.iter().position(Option::is_none) {
            return Err(ValidationError::MaskInPrompt(pos));
        }
        let mut tokens = prompt.to_vec();
        tokens.resize(prompt.len() + config.max_new_tokens, None);
        Ok(Self {
            tokens,
            prompt_len: prompt.len(),
            block_len: config.block_len,
            block_index: block_of(prompt.len(), config.block_len),
            remask_counts: BTreeMap::new(),
            edit_counts: BTreeMap::new(),
            frozen: BTreeSet::new(),
            prev_prob: BTreeMap::new(),
            fresh: BTreeSet::new(),
            step: 0,
            finished: false,
        })
    }

    pub fn tokens(&self) -> &[Slot] {
        &self.tokens
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn block_start(&self) -> usize {
        self.block_index * self.block_len
    }

    pub fn block_end(&self) -> usize {
        ((self.block_index + 1) * self.block_len).min(self.tokens.len())
    }

    pub fn block(&self) -> Range<usize> {
        self.block_start()..self.block_end()
    }

    /// Everything the oracle may see: the sequence up to the end of the active block.
    pub fn visible(&self) -> &[Slot] {
        &self.tokens[..self.block_end()]
    }

    pub fn slot(&self, pos: usize) -> Slot {
        self.tokens[pos]
    }

    /// Committed, non-prompt positions of the active block.
    pub fn editable_positions(&self) -> Vec<usize> {
        self.block()
            .filter(|&i| i >= self.prompt_len && self.tokens[i].is_some())
            .collect()
    }

    /// Editable positions that were already committed when the current
    /// iteration's posterior was computed.
    pub fn scored_positions(&self) -> Vec<usize> {
        self.editable_positions()
            .into_iter()
            .filter(|i| !self.fresh.contains(i))
            .collect()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.block().filter(|&i| self.tokens[i].is_none()).collect()
    }

    pub fn has_mask_in_block(&self) -> bool {
        self.block().any(|i| self.tokens[i].is_none())
    }

    /// Committed editable positions and their tokens, as sent to an oracle.
    pub fn current_tokens(&self) -> BTreeMap<usize, Token> {
        self.editable_positions()
            .into_iter()
            .filter_map(|i| self.tokens[i].map(|t| (i, t)))
            .collect()
    }

    pub fn remask_count(&self, pos: usize) -> u32 {
        self.remask_counts.get(&pos).copied().unwrap_or(0)
    }

    pub fn remask_counts(&self) -> &BTreeMap<usize, u32> {
        &self.remask_counts
    }

    pub fn edit_count(&self, pos: usize) -> u32 {
        self.edit_counts.get(&pos).copied().unwrap_or(0)
    }

    pub fn is_frozen(&self, pos: usize) -> bool {
        self.frozen.contains(&pos)
    }

    pub fn freeze(&mut self, pos: usize) {
        self.frozen.insert(pos);
    }

    pub fn prev_prob(&self, pos: usize) -> Option<f64> {
        self.prev_prob.get(&pos).copied()
    }

    pub fn set_prev_prob(&mut self, pos: usize, prob: f64) {
        debug_assert!(self.block().contains(&pos) && self.tokens[pos].is_some());
        self.prev_prob.insert(pos, prob);
    }

    /// Starts a new inner iteration.
    pub fn begin_iteration(&mut self, step: usize) {
        self.step = step;
        self.fresh.clear();
    }

    /// Applies one decision. Any token change drops the position's recorded
    /// probability, since the next score refers to a different token.
    pub fn apply(&mut self, d: &EditDecision) {
        assert!(
            d.pos >= self.prompt_len && self.block().contains(&d.pos),
            "decision at {} outside the editable block",
            d.pos
        );
        debug_assert_eq!(self.tokens[d.pos], d.old);
        self.tokens[d.pos] = d.new;
        self.prev_prob.remove(&d.pos);
        match d.phase {
            Phase::Fill => {
                self.fresh.insert(d.pos);
            }
            Phase::Edit => *self.edit_counts.entry(d.pos).or_default() += 1,
            Phase::Remask => *self.remask_counts.entry(d.pos).or_default() += 1,
        }
    }

    /// Moves the cursor to the next block and resets the per-block counters.
    /// Returns `false` when the sequence is exhausted.
    pub fn advance_block(&mut self) -> bool {
        self.remask_counts.clear();
        self.edit_counts.clear();
        self.frozen.clear();
        self.prev_prob.clear();
        self.fresh.clear();
        self.step = 0;
        if self.block_end() >= self.tokens.len() {
            return false;
        }
        self.block_index += 1;
        true
    }

    /// Response tokens up to (excluding) the first `eos`, stopping at the first mask.
    pub fn answer(&self, eos: Option<Token>) -> Vec<Token> {
        self.tokens[self.prompt_len..]
            .iter()
            .map_while(|s| *s)
            .take_while(|t| Some(*t) != eos)
            .collect()
    }

    pub fn into_tokens(self) -> Vec<Slot> {
        self.tokens
    }
}
