//! Positions T2T can never repair, and the check that LowProb reaches them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::posterior::BlockPosterior;
use crate::state::Token;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuckParams {
    epsilon: f64,
    tau_t2t: f64,
}

impl StuckParams {
    /// Requires `0 < epsilon < tau_t2t <= 1`.
    pub fn new(epsilon: f64, tau_t2t: f64) -> Result<Self, AnalysisError> {
        if !(epsilon > 0.0 && epsilon < tau_t2t && tau_t2t <= 1.0) {
            return Err(AnalysisError::Params(format!(
                "need 0 < epsilon < tau_t2t <= 1, got epsilon={epsilon}, tau_t2t={tau_t2t}"
            )));
        }
        Ok(Self { epsilon, tau_t2t })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau_t2t(&self) -> f64 {
        self.tau_t2t
    }
}

fn scores(posterior: &BlockPosterior, pos: usize) -> Result<(f64, f64), AnalysisError> {
    let s = posterior.get(pos).ok_or_else(|| {
        AnalysisError::Params(format!("posterior has no entry for position {pos}"))
    })?;
    let current = s
        .current_p
        .ok_or_else(|| AnalysisError::Params(format!("no current_p at position {pos}")))?;
    let top1 = s
        .top1()
        .ok_or_else(|| AnalysisError::Params(format!("no candidates at position {pos}")))?;
    Ok((current, top1.prob))
}

/// Committed positions whose token is nearly impossible (`current_p < epsilon`)
/// while no candidate reaches `tau_t2t`.
pub fn stuck_set(
    posterior: &BlockPosterior,
    committed: &BTreeMap<usize, Token>,
    params: &StuckParams,
) -> Result<BTreeSet<usize>, AnalysisError> {
    let mut set = BTreeSet::new();
    for &pos in committed.keys() {
        let (current, top1) = scores(posterior, pos)?;
        if current < params.epsilon && top1 < params.tau_t2t {
            set.insert(pos);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StuckCheck {
    pub pos: usize,
    pub current_p: f64,
    pub top1_p: f64,
    pub t2t_fires: bool,
    pub lowprob_fires: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub epsilon: f64,
    pub tau_t2t: f64,
    pub tau_lp: f64,
    pub positions: Vec<StuckCheck>,
    /// No stuck position is edited by T2T and every one is flagged by LowProb.
    pub pass: bool,
}

/// Evaluates both triggers on every stuck position, directly from the
/// posterior rather than through the engine.
pub fn verify_prop_stuck(
    posterior: &BlockPosterior,
    committed: &BTreeMap<usize, Token>,
    params: &StuckParams,
    tau_lp: f64,
) -> Result<PropReport, AnalysisError> {
    if tau_lp <= params.epsilon {
        return Err(AnalysisError::Hypothesis {
            tau_lp,
            epsilon: params.epsilon,
        });
    }
    let mut positions = Vec::new();
    for pos in stuck_set(posterior, committed, params)? {
        let (current_p, top1_p) = scores(posterior, pos)?;
        let top1 = posterior.top1(pos).expect("checked by scores").token;
        positions.push(StuckCheck {
            pos,
            current_p,
            top1_p,
            t2t_fires: top1 != committed[&pos] && top1_p > params.tau_t2t,
            lowprob_fires: current_p < tau_lp,
        });
    }
    let pass = positions.iter().all(|c| !c.t2t_fires && c.lowprob_fires);
    Ok(PropReport {
        epsilon: params.epsilon,
        tau_t2t: params.tau_t2t,
        tau_lp,
        positions,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{Candidate, PositionScores};
    use proptest::prelude::*;

    fn single(current_p: f64, top1: f64) -> (BlockPosterior, BTreeMap<usize, Token>) {
        let post = BlockPosterior {
            positions: vec![PositionScores {
                pos: 0,
                top: vec![Candidate {
                    token: Token(10),
                    prob: top1,
                }],
                current_p: Some(current_p),
            }],
        };
        (post, BTreeMap::from([(0, Token(9))]))
    }

    #[test]
    fn purple_is_stuck() {
        let params = StuckParams::new(0.01, 0.5).unwrap();
        let (post, committed) = single(2e-5, 0.12);
        assert_eq!(
            stuck_set(&post, &committed, &params).unwrap(),
            BTreeSet::from([0])
        );
        let report = verify_prop_stuck(&post, &committed, &params, 0.3).unwrap();
        assert!(report.pass);
        assert_eq!(report.positions.len(), 1);
    }

    #[test]
    fn either_condition_failing_excludes() {
        let params = StuckParams::new(0.01, 0.5).unwrap();
        let (post, committed) = single(2e-5, 0.6);
        assert!(stuck_set(&post, &committed, &params).unwrap().is_empty());
        let (post, committed) = single(0.02, 0.12);
        assert!(stuck_set(&post, &committed, &params).unwrap().is_empty());
    }

    #[test]
    fn vacuous_pass_and_hypothesis_error() {
        let params = StuckParams::new(0.01, 0.5).unwrap();
        let (post, committed) = single(2e-5, 0.6);
        let report = verify_prop_stuck(&post, &committed, &params, 0.3).unwrap();
        assert!(report.pass && report.positions.is_empty());
        assert!(matches!(
            verify_prop_stuck(&post, &committed, &params, 0.01),
            Err(AnalysisError::Hypothesis { .. })
        ));
    }

    #[test]
    fn params_ordering_enforced() {
        assert!(StuckParams::new(0.5, 0.5).is_err());
        assert!(StuckParams::new(0.0, 0.5).is_err());
        assert!(StuckParams::new(0.1, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_epsilon(
            cells in proptest::collection::vec((0.0f64..0.2, 0.0f64..1.0), 1..12),
            e1 in 0.001f64..0.2,
            e2 in 0.001f64..0.2,
        ) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let post = BlockPosterior {
                positions: cells.iter().enumerate().map(|(pos, &(cur, top))| PositionScores {
                    pos,
                    top: vec![Candidate { token: Token(1), prob: top }],
                    current_p: Some(cur),
                }).collect(),
            };
            let committed: BTreeMap<usize, Token> = (0..cells.len()).map(|i| (i, Token(2))).collect();
            let a = stuck_set(&post, &committed, &StuckParams::new(lo, 0.5).unwrap()).unwrap();
            let b = stuck_set(&post, &committed, &StuckParams::new(hi, 0.5).unwrap()).unwrap();
            prop_assert!(a.is_subset(&b));
        }
    }
}
