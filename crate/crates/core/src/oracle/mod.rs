//! Probability oracles: the engine's view of a denoising model.
//!
//! An oracle receives the visible prefix (everything up to the end of the
//! active block, masks included) and returns per-position top-k candidates
//! for the block plus the probability of each committed token.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::posterior::BlockPosterior;
use crate::state::{GenerationState, Slot, Token};

pub mod remote;
pub mod scenario;
pub mod signal;

pub use remote::{RemoteOracle, ScoreRequest};
pub use scenario::{load_scenario, Matcher, Rule, ScenarioSpec, TabularOracle};
pub use signal::{logistic, SignalModelParams, SignalOracle};

pub const DEFAULT_TOP_K: usize = 8;

/// Vocabulary facts an oracle declares about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub vocab_size: usize,
    /// Id used for masks on the wire; never returned as a candidate.
    pub mask_id: u32,
    pub eos_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_id: Option<u32>,
    #[serde(default)]
    pub mode: String,
}

impl OracleMeta {
    pub fn eos(&self) -> Option<Token> {
        self.eos_id.map(Token)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ids: Vec<u32> = [Some(self.mask_id), self.eos_id, self.pad_id]
            .into_iter()
            .flatten()
            .collect();
        for (i, a) in ids.iter().enumerate() {
            if *a as usize >= self.vocab_size {
                return Err(format!(
                    "reserved id {a} outside vocabulary of size {}",
                    self.vocab_size
                ));
            }
            if ids[i + 1..].contains(a) {
                return Err(format!("reserved id {a} used twice"));
            }
        }
        Ok(())
    }

    pub fn check_token(&self, token: Token) -> Result<(), OracleError> {
        if token.0 as usize >= self.vocab_size {
            return Err(OracleError::VocabMismatch {
                token: token.0,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }
}

/// A scoring request for one block. Construction enforces block-causal
/// visibility: nothing past `block.end` can be sent.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQuery {
    visible: Vec<Slot>,
    block: Range<usize>,
    current: BTreeMap<usize, Token>,
}

impl BlockQuery {
    pub fn new(
        visible: Vec<Slot>,
        block: Range<usize>,
        current: BTreeMap<usize, Token>,
    ) -> Result<Self, OracleError> {
        if block.is_empty() || visible.len() != block.end {
            return Err(OracleError::Causality(format!(
                "visible length {} does not end at block {:?}",
                visible.len(),
                block
            )));
        }
        for (&pos, &tok) in &current {
            if !block.contains(&pos) {
                return Err(OracleError::Causality(format!(
                    "current position {pos} outside block {block:?}"
                )));
            }
            if visible[pos] != Some(tok) {
                return Err(OracleError::Causality(format!(
                    "current token at {pos} disagrees with the visible sequence"
                )));
            }
        }
        Ok(Self {
            visible,
            block,
            current,
        })
    }

    pub fn from_state(state: &GenerationState) -> Self {
        Self::new(
            state.visible().to_vec(),
            state.block(),
            state.current_tokens(),
        )
        .expect("generation state is block-causal by construction")
    }

    pub fn visible(&self) -> &[Slot] {
        &self.visible
    }

    pub fn block(&self) -> Range<usize> {
        self.block.clone()
    }

    pub fn current(&self) -> &BTreeMap<usize, Token> {
        &self.current
    }

    /// Slots of the active block only.
    pub fn block_slots(&self) -> &[Slot] {
        &self.visible[self.block.clone()]
    }

    pub fn check_vocab(&self, meta: &OracleMeta) -> Result<(), OracleError> {
        self.visible
            .iter()
            .flatten()
            .try_for_each(|&t| meta.check_token(t))
    }
}

pub trait Oracle: Send + Sync {
    fn meta(&self) -> &OracleMeta;
    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn meta(&self) -> &OracleMeta {
        (**self).meta()
    }
    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        (**self).score_block(query)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn meta(&self) -> &OracleMeta {
        (**self).meta()
    }
    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        (**self).score_block(query)
    }
}

impl<O: Oracle + ?Sized> Oracle for Arc<O> {
    fn meta(&self) -> &OracleMeta {
        (**self).meta()
    }
    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        (**self).score_block(query)
    }
}

/// Sorts candidates most probable first, lower token id first on ties.
pub(crate) fn sort_candidates(c: &mut [crate::posterior::Candidate]) {
    c.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.token.cmp(&b.token)));
}
