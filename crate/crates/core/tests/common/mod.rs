#![allow(dead_code)]

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remask_core::{
    BlockPosterior, BlockQuery, Candidate, EditDecision, GenerationState, Oracle, OracleError,
    OracleMeta, PositionScores, StrategyConfig, Token,
};

pub const MASK: u32 = 0;
pub const EOS: u32 = 1;

/// Pseudo-random but deterministic oracle: every position's distribution is
/// a function of the whole visible context, the position and a salt.
pub struct NoiseOracle {
    meta: OracleMeta,
    salt: u64,
    k: usize,
    /// Chance that a position gets one dominant candidate.
    peak: f64,
    eos_weight: f64,
}

impl NoiseOracle {
    pub fn new(vocab_size: usize, salt: u64) -> Self {
        Self {
            meta: OracleMeta {
                vocab_size,
                mask_id: MASK,
                eos_id: Some(EOS),
                pad_id: None,
                mode: "noise".into(),
            },
            salt,
            k: 4,
            peak: 0.6,
            eos_weight: 0.05,
        }
    }

    pub fn without_eos(mut self) -> Self {
        self.eos_weight = 0.0;
        self
    }

    fn rng_for(&self, query: &BlockQuery, pos: usize) -> ChaCha8Rng {
        let mut h = DefaultHasher::new();
        self.salt.hash(&mut h);
        query.visible().hash(&mut h);
        pos.hash(&mut h);
        ChaCha8Rng::seed_from_u64(h.finish())
    }
}

impl Oracle for NoiseOracle {
    fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        let vocab = self.meta.vocab_size as u32;
        let positions = query
            .block()
            .map(|pos| {
                let mut rng = self.rng_for(query, pos);
                let mut tokens: Vec<u32> = Vec::new();
                while tokens.len() < self.k {
                    let t = if rng.random_bool(self.eos_weight) {
                        EOS
                    } else {
                        rng.random_range(2..vocab)
                    };
                    if !tokens.contains(&t) {
                        tokens.push(t);
                    }
                }
                let mut weights: Vec<f64> =
                    (0..self.k).map(|_| rng.random_range(0.01..1.0)).collect();
                if rng.random_bool(self.peak) {
                    weights[0] += rng.random_range(1.0..12.0);
                }
                let mass = rng.random_range(0.6..0.99);
                let total: f64 = weights.iter().sum();
                let mut top: Vec<Candidate> = tokens
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &w)| Candidate {
                        token: Token(t),
                        prob: mass * w / total,
                    })
                    .collect();
                top.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.token.cmp(&b.token)));
                let current_p = query.current().get(&pos).map(|t| {
                    top.iter()
                        .find(|c| c.token == *t)
                        .map_or((1.0 - mass) / f64::from(vocab), |c| c.prob)
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

/// A state whose active block (the second one) holds `block` and whose
/// committed entries count as already scored.
pub fn state_with(block: &[Option<u32>]) -> GenerationState {
    let n = block.len();
    let cfg = StrategyConfig {
        block_len: n,
        max_new_tokens: n,
        ..Default::default()
    };
    let prompt: Vec<Option<Token>> = (0..n).map(|i| Some(Token(2 + i as u32))).collect();
    let mut s = GenerationState::new(&prompt, &cfg).unwrap();
    for (i, t) in block.iter().enumerate() {
        if let Some(t) = t {
            s.apply(&EditDecision::fill(n + i, Token(*t), 1.0));
        }
    }
    s.begin_iteration(1);
    s
}

pub fn committed(s: &GenerationState) -> BTreeMap<usize, Token> {
    s.current_tokens()
}
