use crate::config::StrategyConfig;
use crate::error::EngineError;
use crate::posterior::BlockPosterior;
use crate::state::GenerationState;
use crate::trajectory::EditDecision;

/// Replacements a position may receive within one block before it freezes.
pub fn oscillation_limit(config: &StrategyConfig) -> u32 {
    2 * config.c_max + 2
}

/// Token-to-token replacement: overwrite a committed token with the argmax
/// whenever the argmax differs and its probability exceeds `tau_t2t`.
///
/// Decisions are computed against one posterior snapshot and returned
/// unapplied. Frozen positions are skipped.
pub fn t2t_edit_step(
    state: &GenerationState,
    posterior: &BlockPosterior,
    config: &StrategyConfig,
) -> Result<Vec<EditDecision>, EngineError> {
    let mut edits = Vec::new();
    for pos in state.scored_positions() {
        if state.is_frozen(pos) {
            continue;
        }
        let Some(current) = state.slot(pos) else {
            continue;
        };
        let top1 = posterior.top1(pos).ok_or_else(|| {
            EngineError::Contract(format!("posterior has no candidate for position {pos}"))
        })?;
        if top1.token != current && top1.prob > config.tau_t2t {
            edits.push(EditDecision::edit(pos, current, top1.token, top1.prob));
        }
    }
    Ok(edits)
}
