//! HTTP client for an out-of-process oracle.
//!
//! Protocol (JSON over HTTP):
//!
//! * `GET  /v1/meta`  -> `{vocab_size, mask_id, eos_id, mode}`
//! * `POST /v1/score` with a [`ScoreRequest`] -> a [`BlockPosterior`]
//!
//! Masks travel as `null` in `tokens`; `current` maps stringified positions to
//! the committed token ids of the active block.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BlockQuery, Oracle, OracleMeta, DEFAULT_TOP_K};
use crate::error::OracleError;
use crate::posterior::BlockPosterior;
use crate::state::Token;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub tokens: Vec<Option<u32>>,
    pub block: [usize; 2],
    pub current: BTreeMap<String, u32>,
    pub k: usize,
}

impl ScoreRequest {
    pub fn from_query(query: &BlockQuery, k: usize) -> Self {
        let block = query.block();
        Self {
            tokens: query.visible().iter().map(|s| s.map(|t| t.0)).collect(),
            block: [block.start, block.end],
            current: query
                .current()
                .iter()
                .map(|(pos, tok)| (pos.to_string(), tok.0))
                .collect(),
            k,
        }
    }

    /// Server-side view: rebuilds the query and enforces the same causality
    /// contract the engine does.
    pub fn to_query(&self) -> Result<BlockQuery, OracleError> {
        let [start, end] = self.block;
        let current = self
            .current
            .iter()
            .map(|(pos, tok)| {
                pos.parse::<usize>().map(|p| (p, Token(*tok))).map_err(|_| {
                    OracleError::Malformed(format!("current key {pos:?} is not a position"))
                })
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        let visible = self.tokens.iter().map(|t| t.map(Token)).collect();
        BlockQuery::new(visible, start..end, current)
    }
}

#[derive(Debug)]
pub struct RemoteOracle {
    base_url: String,
    agent: ureq::Agent,
    meta: OracleMeta,
    k: usize,
}

impl RemoteOracle {
    /// Connects and fetches `/v1/meta`.
    pub fn connect(base_url: &str) -> Result<Self, OracleError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        let base_url = base_url.trim_end_matches('/').to_string();
        let mut resp = agent
            .get(format!("{base_url}/v1/meta"))
            .call()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(OracleError::Transport(format!(
                "GET /v1/meta returned {}",
                resp.status()
            )));
        }
        let meta: OracleMeta = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Malformed(e.to_string()))?;
        meta.validate().map_err(OracleError::Malformed)?;
        Ok(Self {
            base_url,
            agent,
            meta,
            k: DEFAULT_TOP_K,
        })
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

impl Oracle for RemoteOracle {
    fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    fn score_block(&self, query: &BlockQuery) -> Result<BlockPosterior, OracleError> {
        query.check_vocab(&self.meta)?;
        let request = ScoreRequest::from_query(query, self.k);
        let mut resp = self
            .agent
            .post(format!("{}/v1/score", self.base_url))
            .send_json(&request)
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let reason = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(OracleError::Transport(format!(
                "POST /v1/score returned {status}: {reason}"
            )));
        }
        let posterior: BlockPosterior = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Malformed(e.to_string()))?;
        validate_response(&posterior, query, &self.meta)?;
        Ok(posterior)
    }
}

fn validate_response(
    posterior: &BlockPosterior,
    query: &BlockQuery,
    meta: &OracleMeta,
) -> Result<(), OracleError> {
    for scores in &posterior.positions {
        for c in &scores.top {
            meta.check_token(c.token)?;
            if c.token.0 == meta.mask_id {
                return Err(OracleError::Malformed(format!(
                    "mask id proposed at {}",
                    scores.pos
                )));
            }
        }
    }
    posterior
        .check(&query.block(), meta.vocab_size)
        .map_err(OracleError::Malformed)?;
    for pos in query.current().keys() {
        if posterior.current_p(*pos).is_none() {
            return Err(OracleError::Malformed(format!(
                "missing current_p at {pos}"
            )));
        }
    }
    Ok(())
}
