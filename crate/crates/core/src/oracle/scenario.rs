//! Scripted oracle: ordered context-pattern rules over the active block.
//!
//! Each rule pairs a block pattern (exact token, mask, or wildcard per slot)
//! with distributions for some block offsets. For every position the first
//! rule that matches the block *and* has an output for that offset answers;
//! positions no rule covers get `default_dist`.
//!
//! Besides the scoring tables a scenario file may carry run scaffolding
//! (prompt, config overrides, reference answer, expectations, probes) used by
//! the scenario runner.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use super::{sort_candidates, BlockQuery, Oracle, OracleMeta, DEFAULT_TOP_K};
use crate::config::StrategyConfig;
use crate::error::{OracleError, ScenarioError};
use crate::posterior::{BlockPosterior, Candidate, PositionScores};
use crate::state::{Slot, Token};

const NORMALIZATION_TOL: f64 = 1e-9;

/// One slot of a rule pattern. Serialized as an id, `"M"` or `"*"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matcher {
    Exact(Token),
    Mask,
    Any,
}

impl Matcher {
    pub fn matches(self, slot: Slot) -> bool {
        match self {
            Matcher::Exact(t) => slot == Some(t),
            Matcher::Mask => slot.is_none(),
            Matcher::Any => true,
        }
    }

    /// The slot a probe state denotes; wildcards have none.
    pub fn as_slot(self) -> Option<Slot> {
        match self {
            Matcher::Exact(t) => Some(Some(t)),
            Matcher::Mask => Some(None),
            Matcher::Any => None,
        }
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Exact(t) => write!(f, "{t}"),
            Matcher::Mask => f.write_str("M"),
            Matcher::Any => f.write_str("*"),
        }
    }
}

impl Serialize for Matcher {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Matcher::Exact(t) => s.serialize_u32(t.0),
            Matcher::Mask => s.serialize_str("M"),
            Matcher::Any => s.serialize_str("*"),
        }
    }
}

impl<'de> Deserialize<'de> for Matcher {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Sym(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(Matcher::Exact(Token(id))),
            Raw::Sym(s) if s == "M" => Ok(Matcher::Mask),
            Raw::Sym(s) if s == "*" => Ok(Matcher::Any),
            Raw::Sym(s) => Err(de::Error::custom(format!(
                "pattern entry {s:?} is not a token id, \"M\" or \"*\""
            ))),
        }
    }
}

/// A normalized distribution, most probable first.
pub type Distribution = Vec<Candidate>;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub pattern: Vec<Matcher>,
    /// Restricts the rule to the block starting at this absolute position.
    pub block_start: Option<usize>,
    /// Block offset -> distribution.
    pub outputs: BTreeMap<usize, Distribution>,
}

impl Rule {
    pub fn matches(&self, block_slots: &[Slot], block_start: usize) -> bool {
        self.pattern.len() == block_slots.len()
            && self.block_start.is_none_or(|s| s == block_start)
            && self
                .pattern
                .iter()
                .zip(block_slots)
                .all(|(m, s)| m.matches(*s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The answer equals the scenario's reference.
    Fixed,
    /// The answer differs from the reference.
    Unfixed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default)]
    pub answer: Option<Vec<u32>>,
    #[serde(default)]
    pub outcome: Option<Outcome>,
}

/// A single scoring check against the first response block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    /// Block contents; only ids and `"M"`.
    pub block: Vec<Matcher>,
    /// Block offset being checked.
    pub pos: usize,
    #[serde(default)]
    pub top1: Option<u32>,
    /// Expected probabilities of specific tokens at `pos`.
    #[serde(default)]
    pub p: BTreeMap<String, f64>,
    #[serde(default)]
    pub current_p: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    pattern: Vec<Matcher>,
    #[serde(default)]
    block: Option<usize>,
    outputs: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    vocab_size: usize,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    mask_id: Option<u32>,
    #[serde(default)]
    eos_id: Option<u32>,
    #[serde(default)]
    pad_id: Option<u32>,
    #[serde(default)]
    block_len: Option<usize>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    #[serde(default)]
    prompt: Vec<u32>,
    #[serde(default)]
    reference: Option<Vec<u32>>,
    #[serde(default)]
    config: Option<serde_json::Value>,
    #[serde(default)]
    expect: BTreeMap<String, Expectation>,
    #[serde(default)]
    probes: Vec<Probe>,
    rules: Vec<RawRule>,
    default_dist: BTreeMap<String, f64>,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

/// A parsed, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: Option<String>,
    pub meta: OracleMeta,
    pub k: usize,
    pub block_len: Option<usize>,
    pub labels: BTreeMap<u32, String>,
    pub prompt: Vec<Token>,
    pub reference: Option<Vec<Token>>,
    pub config: StrategyConfig,
    pub expect: BTreeMap<String, Expectation>,
    pub probes: Vec<Probe>,
    pub rules: Vec<Rule>,
    pub default_dist: Distribution,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawSpec = serde_json::from_str(text)?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawSpec) -> Result<Self, ScenarioError> {
        let vocab_size = raw.vocab_size;
        if vocab_size == 0 {
            return Err(ScenarioError::Invalid("vocab_size must be positive".into()));
        }
        if raw.k == 0 {
            return Err(ScenarioError::Invalid("k must be positive".into()));
        }
        let meta = OracleMeta {
            vocab_size,
            // the mask never appears as a scored token; default to an id past the vocabulary end
            mask_id: raw.mask_id.unwrap_or(vocab_size as u32),
            eos_id: raw.eos_id,
            pad_id: raw.pad_id,
            mode: "spec".into(),
        };
        let meta_check = OracleMeta {
            vocab_size: vocab_size + usize::from(raw.mask_id.is_none()),
            ..meta.clone()
        };
        meta_check.validate().map_err(ScenarioError::Invalid)?;

        let token = |context: &str, id: u32| -> Result<Token, ScenarioError> {
            if id as usize >= vocab_size {
                return Err(ScenarioError::TokenOutOfVocab {
                    context: context.to_string(),
                    token: id,
                    vocab_size,
                });
            }
            if Some(id) == raw.mask_id {
                return Err(ScenarioError::Invalid(format!(
                    "{context}: mask id used as a token"
                )));
            }
            Ok(Token(id))
        };
        let parse_dist =
            |context: &str, raw: &BTreeMap<String, f64>| -> Result<Distribution, ScenarioError> {
                let mut dist = Vec::with_capacity(raw.len());
                let mut sum = 0.0;
                for (key, &prob) in raw {
                    let id: u32 = key.parse().map_err(|_| {
                        ScenarioError::Invalid(format!("{context}: token key {key:?} is not an id"))
                    })?;
                    if !(0.0..=1.0).contains(&prob) {
                        return Err(ScenarioError::BadProbability {
                            context: context.to_string(),
                            prob,
                        });
                    }
                    sum += prob;
                    dist.push(Candidate {
                        token: token(context, id)?,
                        prob,
                    });
                }
                if (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(ScenarioError::NotNormalized {
                        context: context.to_string(),
                        sum,
                    });
                }
                sort_candidates(&mut dist);
                Ok(dist)
            };

        let mut config: StrategyConfig = match raw.config {
            Some(v) => serde_json::from_value(v)?,
            None => StrategyConfig::default(),
        };
        let block_len = raw
            .block_len
            .or_else(|| raw.rules.first().map(|r| r.pattern.len()));
        if let Some(b) = block_len {
            config.block_len = b;
        }
        config
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let mut rules = Vec::with_capacity(raw.rules.len());
        for (idx, r) in raw.rules.iter().enumerate() {
            let len = r.pattern.len();
            if Some(len) != block_len {
                return Err(ScenarioError::PatternLength {
                    rule: idx,
                    len,
                    block_len: block_len.unwrap_or(0),
                });
            }
            for m in &r.pattern {
                if let Matcher::Exact(t) = m {
                    token(&format!("rule {idx} pattern"), t.0)?;
                }
            }
            let mut outputs = BTreeMap::new();
            for (key, dist) in &r.outputs {
                let pos: usize = key.parse().map_err(|_| {
                    ScenarioError::Invalid(format!(
                        "rule {idx}: output key {key:?} is not a position"
                    ))
                })?;
                if pos >= len {
                    return Err(ScenarioError::OutputOutsideBlock { rule: idx, pos });
                }
                outputs.insert(pos, parse_dist(&format!("rule {idx} output {pos}"), dist)?);
            }
            rules.push(Rule {
                pattern: r.pattern.clone(),
                block_start: r.block,
                outputs,
            });
        }

        let default_dist = parse_dist("default_dist", &raw.default_dist)?;
        let prompt = raw
            .prompt
            .iter()
            .map(|&id| token("prompt", id))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = raw
            .reference
            .map(|r| {
                r.iter()
                    .map(|&id| token("reference", id))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let labels = raw
            .labels
            .iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|id| (id, v.clone()))
                    .map_err(|_| ScenarioError::Invalid(format!("label key {k:?} is not an id")))
            })
            .collect::<Result<_, _>>()?;
        for (i, probe) in raw.probes.iter().enumerate() {
            if Some(probe.block.len()) != block_len || probe.pos >= probe.block.len() {
                return Err(ScenarioError::Invalid(format!(
                    "probe {i} does not fit the block"
                )));
            }
            if probe.block.contains(&Matcher::Any) {
                return Err(ScenarioError::Invalid(format!("probe {i} uses a wildcard")));
            }
        }

        Ok(Self {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            description: raw.description,
            meta,
            k: raw.k,
            block_len,
            labels,
            prompt,
            reference,
            config,
            expect: raw.expect,
            probes: raw.probes,
            rules,
            default_dist,
        })
    }

    /// Distribution answering block offset `offset` in the given block state.
    pub fn distribution(
        &self,
        block_slots: &[Slot],
        block_start: usize,
        offset: usize,
    ) -> &Distribution {
        self.rules
            .iter()
            .filter(|r| r.matches(block_slots, block_start))
            .find_map(|r| r.outputs.get(&offset))
            .unwrap_or(&self.default_dist)
    }

    pub fn label(&self, slot: Slot) -> String {
        match slot {
            None => "[M]".into(),
            Some(t) => self
                .labels
                .get(&t.0)
                .cloned()
                .unwrap_or_else(|| t.0.to_string()),
        }
    }
}

/// Deterministic oracle backed by a [`ScenarioSpec`].
#[derive(Debug, Clone)]
pub struct TabularOracle {
    spec: ScenarioSpec,
}

impl TabularOracle {
    pub fn new(spec: ScenarioSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }
}

impl Oracle for TabularOracle {
    fn meta(&self) -> &OracleMeta {
        &self.spec.meta
    }

    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        query.check_vocab(&self.spec.meta)?;
        let block = query.block();
        let slots = query.block_slots();
        let positions = block
            .clone()
            .map(|pos| {
                let dist = self
                    .spec
                    .distribution(slots, block.start, pos - block.start);
                let current_p = query.current().get(&pos).map(|cur| {
                    dist.iter()
                        .find(|c| c.token == *cur)
                        .map_or(0.0, |c| c.prob)
                });
                PositionScores {
                    pos,
                    top: dist.iter().take(self.spec.k).copied().collect(),
                    current_p,
                }
            })
            .collect();
        Ok(BlockPosterior { positions })
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<TabularOracle, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(TabularOracle::new(ScenarioSpec::from_json(&text)?))
}
