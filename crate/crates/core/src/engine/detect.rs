//! Remask detectors and the safety caps applied to their flags.

use std::collections::BTreeMap;

use rand::Rng;

use crate::config::{ratio_cap, StrategyConfig};
use crate::error::EngineError;
use crate::posterior::BlockPosterior;
use crate::state::GenerationState;
use crate::trajectory::{DetectorKind, EditDecision};

/// A position a detector wants remasked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flag {
    pub pos: usize,
    /// Ordering key for the ratio cap: lower is remasked first.
    pub score: f64,
    /// Probability logged with the resulting remask event.
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    LowProb,
    T2tTrigger,
    LogitDiff,
    Random,
}

impl Detector {
    pub fn kind(self) -> DetectorKind {
        match self {
            Detector::LowProb => DetectorKind::LowProb,
            Detector::T2tTrigger => DetectorKind::T2tTrigger,
            Detector::LogitDiff => DetectorKind::LogitDiff,
            Detector::Random => DetectorKind::Random,
        }
    }

    pub fn detect<R: Rng + ?Sized>(
        self,
        state: &GenerationState,
        posterior: &BlockPosterior,
        config: &StrategyConfig,
        rng: &mut R,
    ) -> Result<Vec<Flag>, EngineError> {
        match self {
            Detector::LowProb => detect_lowprob(state, posterior, config.tau_lp),
            Detector::T2tTrigger => detect_t2t_trigger(state, posterior, config.tau_tr),
            Detector::LogitDiff => detect_logitdiff(state, posterior, config.tau_ld),
            Detector::Random => Ok(detect_random(state, config.sigma, rng)),
        }
    }
}

fn current_p(posterior: &BlockPosterior, pos: usize) -> Result<f64, EngineError> {
    posterior.current_p(pos).ok_or_else(|| {
        EngineError::Contract(format!(
            "posterior lacks current_p for committed position {pos}"
        ))
    })
}

/// Flags `i` iff `current_p(i) < tau_lp`.
pub fn detect_lowprob(
    state: &GenerationState,
    posterior: &BlockPosterior,
    tau_lp: f64,
) -> Result<Vec<Flag>, EngineError> {
    let mut flags = Vec::new();
    for pos in state.scored_positions() {
        let p = current_p(posterior, pos)?;
        if p < tau_lp {
            flags.push(Flag {
                pos,
                score: p,
                prob: p,
            });
        }
    }
    Ok(flags)
}

/// Flags exactly the positions a T2T replacement with threshold `tau_tr`
/// would overwrite. Score is `1 - top1`.
pub fn detect_t2t_trigger(
    state: &GenerationState,
    posterior: &BlockPosterior,
    tau_tr: f64,
) -> Result<Vec<Flag>, EngineError> {
    let mut flags = Vec::new();
    for pos in state.scored_positions() {
        let top1 = posterior.top1(pos).ok_or_else(|| {
            EngineError::Contract(format!("posterior has no candidate for position {pos}"))
        })?;
        if state.slot(pos) != Some(top1.token) && top1.prob > tau_tr {
            flags.push(Flag {
                pos,
                score: 1.0 - top1.prob,
                prob: top1.prob,
            });
        }
    }
    Ok(flags)
}

/// Flags a confidence drop larger than `tau_ld` since the previous scoring.
/// Positions without a recorded predecessor abstain.
pub fn detect_logitdiff(
    state: &GenerationState,
    posterior: &BlockPosterior,
    tau_ld: f64,
) -> Result<Vec<Flag>, EngineError> {
    let mut flags = Vec::new();
    for pos in state.scored_positions() {
        let p = current_p(posterior, pos)?;
        if let Some(prev) = state.prev_prob(pos) {
            if prev - p > tau_ld {
                flags.push(Flag {
                    pos,
                    score: p,
                    prob: p,
                });
            }
        }
    }
    Ok(flags)
}

/// Flags each scored position independently with probability `sigma`.
/// One uniform draw is consumed per position, flagged or not.
pub fn detect_random<R: Rng + ?Sized>(
    state: &GenerationState,
    sigma: f64,
    rng: &mut R,
) -> Vec<Flag> {
    state
        .scored_positions()
        .into_iter()
        .filter_map(|pos| {
            let u: f64 = rng.random();
            (u < sigma).then_some(Flag {
                pos,
                score: u,
                prob: u,
            })
        })
        .collect()
}

/// Per-position budget, then ratio cap keeping the lowest scores
/// (lower index first on ties). Result is sorted by position.
pub fn apply_caps(
    flags: Vec<Flag>,
    remask_counts: &BTreeMap<usize, u32>,
    c_max: u32,
    rho_max: f64,
    editable_count: usize,
) -> Vec<Flag> {
    let mut kept: Vec<Flag> = flags
        .into_iter()
        .filter(|f| remask_counts.get(&f.pos).copied().unwrap_or(0) < c_max)
        .collect();
    let k = ratio_cap(rho_max, editable_count);
    if kept.len() > k {
        kept.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.pos.cmp(&b.pos)));
        kept.truncate(k);
    }
    kept.sort_by_key(|f| f.pos);
    kept
}

/// Token-to-mask step: detect, cap, and turn the survivors into remask
/// decisions. An empty result means the editing phase has converged.
pub fn t2m_step<R: Rng + ?Sized>(
    state: &GenerationState,
    posterior: &BlockPosterior,
    detector: Detector,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<EditDecision>, EngineError> {
    let flags = detector.detect(state, posterior, config, rng)?;
    let capped = apply_caps(
        flags,
        state.remask_counts(),
        config.c_max,
        config.rho_max,
        state.editable_positions().len(),
    );
    Ok(capped
        .into_iter()
        .map(|f| {
            let old = state.slot(f.pos).expect("flagged positions are committed");
            EditDecision::remask(f.pos, old, f.prob, Some(detector.kind()))
        })
        .collect())
}
