//! One oracle answer for the active block.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::state::Token;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "id")]
    pub token: Token,
    #[serde(rename = "p")]
    pub prob: f64,
}

/// Scores for one block position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionScores {
    pub pos: usize,
    /// Top-k candidates, most probable first.
    pub top: Vec<Candidate>,
    /// Probability of the token committed at `pos`, for committed positions only.
    pub current_p: Option<f64>,
}

impl PositionScores {
    pub fn top1(&self) -> Option<Candidate> {
        self.top.first().copied()
    }
}

/// Serializes exactly as the remote protocol's score response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPosterior {
    pub positions: Vec<PositionScores>,
}

impl BlockPosterior {
    pub fn get(&self, pos: usize) -> Option<&PositionScores> {
        // positions are normally contiguous from the block start
        let first = self.positions.first()?.pos;
        match pos.checked_sub(first).and_then(|i| self.positions.get(i)) {
            Some(p) if p.pos == pos => Some(p),
            _ => self.positions.iter().find(|p| p.pos == pos),
        }
    }

    pub fn current_p(&self, pos: usize) -> Option<f64> {
        self.get(pos).and_then(|p| p.current_p)
    }

    pub fn top1(&self, pos: usize) -> Option<Candidate> {
        self.get(pos).and_then(PositionScores::top1)
    }

    /// Top-k width actually used (longest candidate list).
    pub fn k(&self) -> usize {
        self.positions
            .iter()
            .map(|p| p.top.len())
            .max()
            .unwrap_or(0)
    }

    /// Checks the structural invariants against the block that was queried.
    pub fn check(&self, block: &Range<usize>, vocab_size: usize) -> Result<(), String> {
        if self.positions.len() != block.len() {
            return Err(format!(
                "expected {} positions, got {}",
                block.len(),
                self.positions.len()
            ));
        }
        for (expected, scores) in block.clone().zip(&self.positions) {
            if scores.pos != expected {
                return Err(format!(
                    "position {} out of order, expected {}",
                    scores.pos, expected
                ));
            }
            let mut sum = 0.0;
            let mut last = f64::INFINITY;
            for c in &scores.top {
                if !(0.0..=1.0).contains(&c.prob) {
                    return Err(format!(
                        "probability {} at {} outside [0,1]",
                        c.prob, scores.pos
                    ));
                }
                if c.prob > last {
                    return Err(format!(
                        "candidates at {} not sorted descending",
                        scores.pos
                    ));
                }
                if c.token.0 as usize >= vocab_size {
                    return Err(format!(
                        "token {} at {} outside vocabulary",
                        c.token, scores.pos
                    ));
                }
                last = c.prob;
                sum += c.prob;
            }
            if sum > 1.0 + 1e-9 {
                return Err(format!("probabilities at {} sum to {}", scores.pos, sum));
            }
            if let Some(p) = scores.current_p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("current_p {} at {} outside [0,1]", p, scores.pos));
                }
            }
        }
        Ok(())
    }
}
