//! Decoding thresholds, safety caps and generation limits.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Every tunable of a generation run.
///
/// Unset fields in a serialized config fall back to the defaults below, so a
/// scenario file or CLI invocation only has to name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Mask-to-token fill threshold.
    pub tau_m2t: f64,
    /// Token-to-token replacement threshold.
    pub tau_t2t: f64,
    /// LowProb remask threshold.
    pub tau_lp: f64,
    /// Threshold of the T2T-trigger remask detector.
    pub tau_tr: f64,
    /// Confidence drop that fires the LogitDiff detector.
    pub tau_ld: f64,
    /// Per-position probability of the random remasking baseline.
    pub sigma: f64,
    /// Remask budget per position per block.
    pub c_max: u32,
    /// Fraction of editable positions that may be remasked in one step.
    pub rho_max: f64,
    /// Forced-progress fill budget when too few masks clear `tau_m2t`.
    pub n_transfer: usize,
    pub block_len: usize,
    pub max_new_tokens: usize,
    /// Inner-loop cap per block; `None` means `4 * block_len`.
    pub max_inner_iters: Option<usize>,
    pub seed: u64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            tau_m2t: 0.7,
            tau_t2t: 0.5,
            tau_lp: 0.3,
            tau_tr: 0.5,
            tau_ld: 0.2,
            sigma: 0.1,
            c_max: 1,
            rho_max: 0.25,
            n_transfer: 1,
            block_len: 32,
            max_new_tokens: 128,
            max_inner_iters: None,
            seed: 42,
        }
    }
}

impl StrategyConfig {
    pub fn inner_iter_cap(&self) -> usize {
        self.max_inner_iters.unwrap_or(4 * self.block_len)
    }

    /// Largest number of positions the ratio cap lets through when
    /// `editable` positions are committed.
    pub fn ratio_cap(&self, editable: usize) -> usize {
        ratio_cap(self.rho_max, editable)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let probs = [
            ("tau_m2t", self.tau_m2t),
            ("tau_t2t", self.tau_t2t),
            ("tau_lp", self.tau_lp),
            ("tau_tr", self.tau_tr),
            ("tau_ld", self.tau_ld),
            ("sigma", self.sigma),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfRange { field: name, value });
            }
        }
        if !(self.rho_max > 0.0 && self.rho_max <= 1.0) {
            return Err(ConfigError::OutOfRange {
                field: "rho_max",
                value: self.rho_max,
            });
        }
        let positive = [
            ("n_transfer", self.n_transfer),
            ("block_len", self.block_len),
            ("max_new_tokens", self.max_new_tokens),
            ("max_inner_iters", self.inner_iter_cap()),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError::NotPositive { field: name });
            }
        }
        Ok(())
    }
}

/// `floor(rho_max * editable)`, with a small guard so that products such as
/// `0.29 * 100` do not round down one step too far.
pub fn ratio_cap(rho_max: f64, editable: usize) -> usize {
    (rho_max * editable as f64 + 1e-9).floor() as usize
}
