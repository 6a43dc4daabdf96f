//! Context quality under random versus targeted remasking.
//!
//! A committed context with `n_c` correct and `n_e` erroneous tokens has
//! quality `n_c * s_plus + n_e * s_minus`. Random remasking at rate `sigma`
//! scales both terms by `1 - sigma`; a perfect detector removes only errors.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextQualityInput {
    pub n_c: u64,
    pub n_e: u64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub sigma: f64,
}

impl ContextQualityInput {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.s_plus > 0.0 && self.s_plus.is_finite()) {
            return Err(AnalysisError::Params(format!(
                "s_plus must be positive, got {}",
                self.s_plus
            )));
        }
        if !(self.s_minus < 0.0 && self.s_minus.is_finite()) {
            return Err(AnalysisError::Params(format!(
                "s_minus must be negative, got {}",
                self.s_minus
            )));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(AnalysisError::Params(format!(
                "sigma must lie in [0, 1], got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextQuality {
    pub q_random: f64,
    pub q_targeted: f64,
    pub advantage: f64,
}

pub fn context_quality(input: &ContextQualityInput) -> Result<ContextQuality, AnalysisError> {
    input.validate()?;
    let n_c = input.n_c as f64;
    let n_e = input.n_e as f64;
    let s = input.sigma;
    Ok(ContextQuality {
        q_random: (1.0 - s) * (n_c * input.s_plus + n_e * input.s_minus),
        q_targeted: n_c * input.s_plus,
        advantage: s * n_c * input.s_plus + (1.0 - s) * (-n_e * input.s_minus),
    })
}

/// Quality after an imperfect detector removes `removed` positions, compared
/// with removing the same number uniformly at random (in expectation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub precision: f64,
    pub base_rate: f64,
    pub q_detector: f64,
    pub q_random: f64,
    pub gain: f64,
}

/// Sweeps detector precision over `precisions` for a context of `n_c`
/// correct and `n_e` erroneous tokens with `removed` positions remasked.
pub fn precision_sweep(
    n_c: u64,
    n_e: u64,
    s_plus: f64,
    s_minus: f64,
    removed: f64,
    precisions: &[f64],
) -> Result<Vec<PrecisionPoint>, AnalysisError> {
    ContextQualityInput {
        n_c,
        n_e,
        s_plus,
        s_minus,
        sigma: 0.0,
    }
    .validate()?;
    let n = (n_c + n_e) as f64;
    if n == 0.0 || !(0.0..=n).contains(&removed) {
        return Err(AnalysisError::Params(format!(
            "cannot remove {removed} of {n} positions"
        )));
    }
    let (n_c, n_e) = (n_c as f64, n_e as f64);
    let base_rate = n_e / n;
    let q_random = (n_c - removed * n_c / n) * s_plus + (n_e - removed * n_e / n) * s_minus;
    precisions
        .iter()
        .map(|&precision| {
            let hits = precision * removed;
            let misses = removed - hits;
            if !(0.0..=1.0).contains(&precision) || hits > n_e + 1e-9 || misses > n_c + 1e-9 {
                return Err(AnalysisError::Params(format!(
                    "precision {precision} infeasible for {removed} removals"
                )));
            }
            let q_detector = (n_c - misses) * s_plus + (n_e - hits) * s_minus;
            Ok(PrecisionPoint {
                precision,
                base_rate,
                q_detector,
                q_random,
                gain: q_detector - q_random,
            })
        })
        .collect()
}
