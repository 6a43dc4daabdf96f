//! Task sets: prompts with reference answers and the oracle that scores them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::StrategyConfig;
use crate::error::HarnessError;
use crate::oracle::{load_scenario, Oracle, OracleMeta, SignalModelParams, SignalOracle};
use crate::state::Token;

/// Ids reserved by generated signal tasks.
pub const SIGNAL_PAD: u32 = 0;
pub const SIGNAL_MASK: u32 = 1;
pub const SIGNAL_EOS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskOracle {
    Signal { params: SignalModelParams },
    Scenario { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: usize,
    pub prompt: Vec<Token>,
    pub reference: Vec<Token>,
    pub oracle: TaskOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    /// Base configuration every instance runs with.
    pub config: StrategyConfig,
    pub instances: Vec<TaskInstance>,
}

impl TaskSet {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.instances.is_empty() {
            return Err(HarnessError::EmptyTaskSet);
        }
        self.config.validate()?;
        for inst in &self.instances {
            if inst.reference.len() > self.config.max_new_tokens {
                return Err(HarnessError::InvalidTask {
                    id: inst.id,
                    reason: format!(
                        "reference of {} tokens exceeds max_new_tokens {}",
                        inst.reference.len(),
                        self.config.max_new_tokens
                    ),
                });
            }
        }
        Ok(())
    }

    /// Builds one oracle per instance; scenario files are loaded once each.
    pub fn oracles(&self, base_dir: Option<&Path>) -> Result<Vec<Arc<dyn Oracle>>, HarnessError> {
        let mut loaded: BTreeMap<PathBuf, Arc<dyn Oracle>> = BTreeMap::new();
        self.instances
            .iter()
            .map(|inst| match &inst.oracle {
                TaskOracle::Signal { params } => {
                    Ok(Arc::new(SignalOracle::new(params.clone())?) as Arc<dyn Oracle>)
                }
                TaskOracle::Scenario { path } => {
                    let full = match base_dir {
                        Some(d) if path.is_relative() => d.join(path),
                        _ => path.clone(),
                    };
                    if let Some(o) = loaded.get(&full) {
                        return Ok(o.clone());
                    }
                    let o: Arc<dyn Oracle> = Arc::new(load_scenario(&full)?);
                    loaded.insert(full, o.clone());
                    Ok(o)
                }
            })
            .collect()
    }
}

/// Shape of a generated signal-model task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalTaskParams {
    pub vocab_size: usize,
    pub prompt_len: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Per-position logit offsets are drawn uniformly from `[-bias_spread, bias_spread]`.
    pub bias_spread: f64,
    /// Wrong alternatives per position sharing the non-reference mass.
    pub distractors: usize,
}

impl Default for SignalTaskParams {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            prompt_len: 4,
            alpha0: 0.5,
            alpha1: 0.5,
            alpha2: 1.5,
            bias_spread: 2.5,
            distractors: 1,
        }
    }
}

/// Generates `n_instances` signal-model tasks whose responses are exactly
/// `length` tokens. The returned set runs with `base` except for
/// `max_new_tokens`, which is set to `length`.
pub fn gen_signal_task(
    n_instances: usize,
    length: usize,
    params: &SignalTaskParams,
    base: &StrategyConfig,
    seed: u64,
) -> Result<TaskSet, HarnessError> {
    let invalid = |reason: String| HarnessError::InvalidTask { id: 0, reason };
    if n_instances == 0 {
        return Err(HarnessError::EmptyTaskSet);
    }
    if length == 0 || params.prompt_len == 0 {
        return Err(invalid(
            "prompt and response lengths must be positive".into(),
        ));
    }
    if params.distractors == 0 {
        return Err(invalid(
            "at least one distractor per position is required".into(),
        ));
    }
    if params.vocab_size < 4 + params.distractors {
        return Err(invalid(format!(
            "vocab_size {} leaves too few content tokens",
            params.vocab_size
        )));
    }
    if !(params.bias_spread >= 0.0 && params.bias_spread.is_finite()) {
        return Err(invalid(
            "bias_spread must be finite and non-negative".into(),
        ));
    }
    let config = StrategyConfig {
        max_new_tokens: length,
        ..base.clone()
    };
    config.validate()?;

    let meta = OracleMeta {
        vocab_size: params.vocab_size,
        mask_id: SIGNAL_MASK,
        eos_id: Some(SIGNAL_EOS),
        pad_id: Some(SIGNAL_PAD),
        mode: "signal".into(),
    };
    let first_content = 3u32;
    let last_content = params.vocab_size as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = params.prompt_len + length;

    let mut instances = Vec::with_capacity(n_instances);
    for id in 0..n_instances {
        let reference: Vec<Token> = (0..total)
            .map(|_| Token(rng.random_range(first_content..last_content)))
            .collect();
        let mut alternatives: Vec<Vec<Token>> = reference
            .iter()
            .map(|r| {
                let mut alts: Vec<Token> = Vec::with_capacity(params.distractors);
                while alts.len() < params.distractors {
                    let d = Token(rng.random_range(first_content..last_content));
                    if d != *r && !alts.contains(&d) {
                        alts.push(d);
                    }
                }
                alts
            })
            .collect();
        let distractor: Vec<Token> = alternatives.iter_mut().map(|a| a.remove(0)).collect();
        let extra_distractors = if params.distractors > 1 {
            alternatives
        } else {
            Vec::new()
        };
        let bias: Vec<f64> = (0..total)
            .map(|i| {
                if i < params.prompt_len || params.bias_spread == 0.0 {
                    0.0
                } else {
                    rng.random_range(-params.bias_spread..=params.bias_spread)
                }
            })
            .collect();
        let model = SignalModelParams {
            meta: meta.clone(),
            reference: reference.clone(),
            distractor,
            extra_distractors,
            bias,
            alpha0: params.alpha0,
            alpha1: params.alpha1,
            alpha2: params.alpha2,
        };
        model
            .validate()
            .map_err(|reason| HarnessError::InvalidTask { id, reason })?;
        instances.push(TaskInstance {
            id,
            prompt: reference[..params.prompt_len].to_vec(),
            reference: reference[params.prompt_len..].to_vec(),
            oracle: TaskOracle::Signal { params: model },
        });
    }
    Ok(TaskSet { config, instances })
}
