use crate::config::StrategyConfig;
use crate::error::EngineError;
use crate::posterior::BlockPosterior;
use crate::state::GenerationState;
use crate::trajectory::EditDecision;

/// Mask-to-token fill with greedy (argmax) predictions.
///
/// Every masked position whose top-1 probability exceeds `tau_m2t` is filled.
/// When fewer than `n_transfer` positions qualify, the `n_transfer` most
/// confident masked positions are filled instead (lower index first on ties).
pub fn m2t_step(
    state: &GenerationState,
    posterior: &BlockPosterior,
    config: &StrategyConfig,
) -> Result<Vec<EditDecision>, EngineError> {
    let mut candidates = Vec::new();
    for pos in state.masked_positions() {
        let top1 = posterior.top1(pos).ok_or_else(|| {
            EngineError::Contract(format!(
                "posterior has no candidate for masked position {pos}"
            ))
        })?;
        candidates.push((pos, top1));
    }

    let qualifying = candidates
        .iter()
        .filter(|(_, c)| c.prob > config.tau_m2t)
        .count();
    if qualifying < config.n_transfer {
        candidates.sort_by(|(pa, a), (pb, b)| b.prob.total_cmp(&a.prob).then(pa.cmp(pb)));
        candidates.truncate(config.n_transfer);
        candidates.sort_by_key(|(pos, _)| *pos);
    } else {
        candidates.retain(|(_, c)| c.prob > config.tau_m2t);
    }

    Ok(candidates
        .into_iter()
        .map(|(pos, c)| EditDecision::fill(pos, c.token, c.prob))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::testing::{posterior, state_with};
    use crate::state::Token;

    fn cfg() -> StrategyConfig {
        StrategyConfig {
            block_len: 4,
            max_new_tokens: 4,
            ..Default::default()
        }
    }

    #[test]
    fn fills_above_threshold() {
        let s = state_with(&[Some(1), Some(2), Some(3), None], 4);
        let post = posterior(4..8, &[(7, 0.8)], |_| None);
        let fills = m2t_step(&s, &post, &cfg()).unwrap();
        assert_eq!(fills, vec![EditDecision::fill(7, Token(7), 0.8)]);
    }

    #[test]
    fn forced_progress_takes_most_confident() {
        let s = state_with(&[Some(1), None, None, None], 4);
        let post = crate::engine::testing::posterior_per_pos(
            4..8,
            &[
                (4, &[(1, 1.0)]),
                (5, &[(2, 0.4)]),
                (6, &[(3, 0.45)]),
                (7, &[(4, 0.3)]),
            ],
            |_| None,
        );
        let fills = m2t_step(&s, &post, &cfg()).unwrap();
        assert_eq!(fills, vec![EditDecision::fill(6, Token(3), 0.45)]);
    }

    #[test]
    fn threshold_is_strict() {
        let s = state_with(&[Some(1), Some(1), Some(1), None], 4);
        let post = posterior(4..8, &[(7, 0.7)], |_| None);
        // 0.7 does not clear 0.7, but forced progress still fills one
        let fills = m2t_step(&s, &post, &cfg()).unwrap();
        assert_eq!(fills.len(), 1);
        let s = state_with(&[Some(1), Some(1), None, None], 4);
        let post = posterior(4..8, &[(7, 0.7)], |_| None);
        assert_eq!(m2t_step(&s, &post, &cfg()).unwrap().len(), 1);
    }

    #[test]
    fn tie_breaks_by_lower_index() {
        // exhaustive over which of two tied positions comes first in the posterior
        for order in [[5usize, 6], [6, 5]] {
            let s = state_with(&[Some(1), None, None, Some(1)], 4);
            let post = crate::engine::testing::posterior_per_pos(
                4..8,
                &[
                    (4, &[(1, 1.0)]),
                    (order[0], &[(2, 0.4)]),
                    (order[1], &[(3, 0.4)]),
                    (7, &[(1, 1.0)]),
                ],
                |_| None,
            );
            let fills = m2t_step(&s, &post, &cfg()).unwrap();
            assert_eq!(fills.len(), 1);
            assert_eq!(fills[0].pos, 5);
        }
    }

    #[test]
    fn budget_larger_than_qualifiers() {
        let s = state_with(&[None, None, None, None], 4);
        let post = crate::engine::testing::posterior_per_pos(
            4..8,
            &[
                (4, &[(1, 0.9)]),
                (5, &[(2, 0.2)]),
                (6, &[(3, 0.6)]),
                (7, &[(4, 0.5)]),
            ],
            |_| None,
        );
        let c = StrategyConfig {
            n_transfer: 2,
            ..cfg()
        };
        let fills: Vec<usize> = m2t_step(&s, &post, &c)
            .unwrap()
            .iter()
            .map(|d| d.pos)
            .collect();
        assert_eq!(fills, vec![4, 6]);
    }

    #[test]
    fn missing_masked_position_is_contract_violation() {
        let s = state_with(&[Some(1), Some(1), Some(1), None], 4);
        let post =
            crate::engine::testing::posterior_per_pos(4..8, &[(4, &[(1, 1.0)]), (7, &[])], |_| {
                None
            });
        assert!(matches!(
            m2t_step(&s, &post, &cfg()),
            Err(EngineError::Contract(_))
        ));
    }
}
