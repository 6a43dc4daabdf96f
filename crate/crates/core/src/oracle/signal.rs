//! Synthetic oracle whose confidence depends on the quality of the block context.
//!
//! At every position the true token gets probability
//! `logistic(alpha0 + bias[i] + alpha1 * aligned(i) - alpha2 * adversarial(i))`,
//! where `aligned(i)` counts committed block neighbours holding their
//! reference token and `adversarial(i)` counts committed neighbours holding
//! anything else. Masked neighbours contribute nothing. The remaining mass
//! goes to a single distractor token per position, or is split evenly over
//! the distractor and any extra alternatives listed for that position.

use serde::{Deserialize, Serialize};

use super::{sort_candidates, BlockQuery, Oracle, OracleMeta};
use crate::error::OracleError;
use crate::posterior::{BlockPosterior, Candidate, PositionScores};
use crate::state::Token;

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModelParams {
    pub meta: OracleMeta,
    /// True token at every absolute position (prompt included).
    pub reference: Vec<Token>,
    pub distractor: Vec<Token>,
    /// Further alternatives sharing the non-reference mass; empty means none.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_distractors: Vec<Vec<Token>>,
    /// Optional per-position logit offset; empty means zero everywhere.
    #[serde(default)]
    pub bias: Vec<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl SignalModelParams {
    pub fn validate(&self) -> Result<(), String> {
        self.meta.validate()?;
        if self.distractor.len() != self.reference.len() {
            return Err("distractor and reference lengths differ".into());
        }
        if !self.bias.is_empty() && self.bias.len() != self.reference.len() {
            return Err("bias and reference lengths differ".into());
        }
        if !self.extra_distractors.is_empty()
            && self.extra_distractors.len() != self.reference.len()
        {
            return Err("extra_distractors and reference lengths differ".into());
        }
        for (i, r) in self.reference.iter().enumerate() {
            let alternatives = self.alternatives(i);
            if alternatives.contains(r) {
                return Err(format!("distractor equals reference at position {i}"));
            }
            if (1..alternatives.len()).any(|k| alternatives[k..].contains(&alternatives[k - 1])) {
                return Err(format!("repeated distractor at position {i}"));
            }
            for t in std::iter::once(r).chain(&alternatives) {
                if t.0 as usize >= self.meta.vocab_size || t.0 == self.meta.mask_id {
                    return Err(format!(
                        "token {t} at position {i} is not a valid content token"
                    ));
                }
            }
        }
        if ![self.alpha0, self.alpha1, self.alpha2]
            .iter()
            .chain(&self.bias)
            .all(|a| a.is_finite())
        {
            return Err("coefficients must be finite".into());
        }
        Ok(())
    }

    /// Distractor first, then the extras.
    pub fn alternatives(&self, pos: usize) -> Vec<Token> {
        let mut v = vec![self.distractor[pos]];
        if let Some(extra) = self.extra_distractors.get(pos) {
            v.extend_from_slice(extra);
        }
        v
    }

    fn bias(&self, pos: usize) -> f64 {
        self.bias.get(pos).copied().unwrap_or(0.0)
    }

    /// Probability of the true token at `pos` given neighbour counts.
    pub fn p_true(&self, pos: usize, aligned: usize, adversarial: usize) -> f64 {
        logistic(
            self.alpha0 + self.bias(pos) + self.alpha1 * aligned as f64
                - self.alpha2 * adversarial as f64,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SignalOracle {
    params: SignalModelParams,
}

impl SignalOracle {
    pub fn new(params: SignalModelParams) -> Result<Self, OracleError> {
        params.validate().map_err(OracleError::Malformed)?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SignalModelParams {
        &self.params
    }
}

impl Oracle for SignalOracle {
    fn meta(&self) -> &OracleMeta {
        &self.params.meta
    }

    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        query.check_vocab(&self.params.meta)?;
        let block = query.block();
        let reference = &self.params.reference;
        if block.end > reference.len() {
            return Err(OracleError::Malformed(format!(
                "block {:?} extends past the reference of length {}",
                block,
                reference.len()
            )));
        }
        let slots = query.block_slots();
        let positions = block
            .clone()
            .map(|pos| {
                let (mut aligned, mut adversarial) = (0, 0);
                for (j, slot) in block.clone().zip(slots) {
                    match slot {
                        Some(t) if j != pos => {
                            if *t == reference[j] {
                                aligned += 1;
                            } else {
                                adversarial += 1;
                            }
                        }
                        _ => {}
                    }
                }
                let p = self.params.p_true(pos, aligned, adversarial);
                let truth = reference[pos];
                let alternatives = self.params.alternatives(pos);
                let q = (1.0 - p) / alternatives.len() as f64;
                let mut top = vec![Candidate {
                    token: truth,
                    prob: p,
                }];
                top.extend(
                    alternatives
                        .iter()
                        .map(|&token| Candidate { token, prob: q }),
                );
                sort_candidates(&mut top);
                let current_p = query.current().get(&pos).map(|&cur| {
                    if cur == truth {
                        p
                    } else if alternatives.contains(&cur) {
                        q
                    } else {
                        0.0
                    }
                });
                PositionScores {
                    pos,
                    top,
                    current_p,
                }
            })
            .collect();
        Ok(BlockPosterior { positions })
    }
}
