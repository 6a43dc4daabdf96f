use serde::{Deserialize, Serialize};

use crate::config::StrategyConfig;
use crate::engine::Strategy;

/// One point of a sweep. The baseline leaves the remask caps unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub strategy: Strategy,
    pub tau: f64,
    pub c_max: Option<u32>,
    pub rho_max: Option<f64>,
}

impl SweepConfig {
    pub fn apply(&self, base: &StrategyConfig) -> StrategyConfig {
        let mut c = self.strategy.with_threshold(base, self.tau);
        if let Some(c_max) = self.c_max {
            c.c_max = c_max;
        }
        if let Some(rho) = self.rho_max {
            c.rho_max = rho;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub configs: Vec<SweepConfig>,
}

pub const LOWPROB_TAUS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const TRIGGER_TAUS: [f64; 3] = [0.5, 0.7, 0.9];
pub const LOGITDIFF_TAUS: [f64; 4] = [0.1, 0.2, 0.3, 0.5];
pub const C_MAX: [u32; 3] = [1, 3, 5];
pub const RHO_MAX: [f64; 3] = [0.25, 0.5, 1.0];

impl SweepGrid {
    /// T2T baseline at 0.5 followed by every (detector, tau, c_max, rho_max)
    /// combination: 1 + 12 * 3 * 3 = 109 configurations.
    pub fn standard() -> Self {
        let mut configs = vec![SweepConfig {
            strategy: Strategy::T2tReplace,
            tau: 0.5,
            c_max: None,
            rho_max: None,
        }];
        let families: [(Strategy, &[f64]); 3] = [
            (Strategy::T2mLowProb, &LOWPROB_TAUS),
            (Strategy::T2mTrigger, &TRIGGER_TAUS),
            (Strategy::T2mLogitDiff, &LOGITDIFF_TAUS),
        ];
        for (strategy, taus) in families {
            for &tau in taus {
                for c_max in C_MAX {
                    for rho in RHO_MAX {
                        configs.push(SweepConfig {
                            strategy,
                            tau,
                            c_max: Some(c_max),
                            rho_max: Some(rho),
                        });
                    }
                }
            }
        }
        Self { configs }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}
