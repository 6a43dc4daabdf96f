//! Exact-match accounting over (answer, reference) pairs.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

pub fn classify_outcomes<T: PartialEq>(results: &[(T, T)]) -> OutcomeSummary {
    let correct = results.iter().filter(|(a, r)| a == r).count();
    OutcomeSummary {
        n: results.len(),
        correct,
        accuracy: if results.is_empty() {
            0.0
        } else {
            correct as f64 / results.len() as f64
        },
    }
}

/// Per-instance comparison of a baseline and a candidate strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub baseline: OutcomeSummary,
    pub candidate: OutcomeSummary,
    /// Wrong under the baseline, right under the candidate.
    pub repaired: usize,
    /// Right under the baseline, wrong under the candidate.
    pub broken: usize,
    pub unchanged: usize,
    /// Accuracy difference in percentage points.
    pub net_points: f64,
}

pub fn classify_paired<T: PartialEq>(
    baseline: &[(T, T)],
    candidate: &[(T, T)],
) -> Result<PairedOutcome, AnalysisError> {
    if baseline.len() != candidate.len() {
        return Err(AnalysisError::LengthMismatch(
            baseline.len(),
            candidate.len(),
        ));
    }
    let (mut repaired, mut broken, mut unchanged) = (0, 0, 0);
    for ((a, ra), (b, rb)) in baseline.iter().zip(candidate) {
        match (a == ra, b == rb) {
            (false, true) => repaired += 1,
            (true, false) => broken += 1,
            _ => unchanged += 1,
        }
    }
    let n = baseline.len();
    Ok(PairedOutcome {
        baseline: classify_outcomes(baseline),
        candidate: classify_outcomes(candidate),
        repaired,
        broken,
        unchanged,
        net_points: if n == 0 {
            0.0
        } else {
            100.0 * (repaired as f64 - broken as f64) / n as f64
        },
    })
}
